//! 8-bit RGB PNG files as `(1, 3, H, W)` tensors in `[0, 1]`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use lpnet_core::{Dims, Real, Tensor};
use png::{BitDepth, ColorType, Transformations};

use crate::error::{CliError, Result};

fn image_err(path: &Path, msg: impl ToString) -> CliError {
    CliError::Image {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

/// Stored byte for a normalized value: clamp to `[0, 1]`, scale by 255 and
/// round half up.
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Reads an 8-bit PNG. Palette images are expanded, gray is replicated to
/// three channels and alpha is dropped.
pub fn load_image<T: Real>(path: &Path) -> Result<Tensor<T>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| image_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| image_err(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| image_err(path, e))?;
    if info.bit_depth != BitDepth::Eight {
        return Err(image_err(path, format!("expected 8-bit samples, found {:?}", info.bit_depth)));
    }
    let stride = match info.color_type {
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Indexed => return Err(image_err(path, "unexpanded palette image")),
    };
    let (h, w) = (info.height as usize, info.width as usize);
    let channel = |c: usize| if stride >= 3 { c } else { 0 };
    Ok(Tensor::from_fn(Dims::new(1, 3, h, w), |_, c, y, x| {
        let byte = buf[y * info.line_size + x * stride + channel(c)];
        T::from_f64(byte as f64 / 255.0)
    }))
}

/// Writes a `(1, 3, H, W)` tensor as an 8-bit RGB PNG.
pub fn save_image<T: Real>(img: &Tensor<T>, path: &Path) -> Result<()> {
    let d = img.dims();
    if d.batch != 1 || d.channels != 3 {
        return Err(image_err(
            path,
            format!("can only save a single 3-channel image, got {}x{}", d.batch, d.channels),
        ));
    }
    let mut bytes = Vec::with_capacity(3 * d.height * d.width);
    for y in 0..d.height {
        for x in 0..d.width {
            for c in 0..3 {
                bytes.push(quantize(img.at(0, c, y, x).as_f64()));
            }
        }
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), d.width as u32, d.height as u32);
    enc.set_color(ColorType::Rgb);
    enc.set_depth(BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| image_err(path, e))?;
    writer.write_image_data(&bytes).map_err(|e| image_err(path, e))?;
    writer.finish().map_err(|e| image_err(path, e))
}

/// PNG files directly inside `dir`, sorted by name.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// File name without its extension.
pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
