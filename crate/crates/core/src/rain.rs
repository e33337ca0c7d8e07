//! Synthetic rain streaks.
//!
//! Streaks are anti-aliased line segments drawn into a coverage layer, which
//! is blurred and added to every channel of the clean image. The model is
//! purely additive: rain only ever brightens.

use alloc::vec::Vec;

#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filter::{filter_axis, Axis};
use crate::real::Real;
use crate::tensor::{Dims, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RainParams {
    /// Streaks per megapixel of image area.
    pub density: f64,
    /// Mean streak direction, measured from vertical.
    pub angle_deg: f64,
    /// Half-width of the uniform angle spread.
    pub angle_jitter_deg: f64,
    pub length: f64,
    /// Half-width of the uniform length spread.
    pub length_jitter: f64,
    pub width: f64,
    /// Brightness added where coverage is 1.
    pub intensity: f64,
    /// Gaussian blur applied to the coverage layer; 0 disables it.
    pub blur_sigma: f64,
    pub seed: u64,
}

impl Default for RainParams {
    fn default() -> Self {
        RainParams {
            density: 4000.0,
            angle_deg: 10.0,
            angle_jitter_deg: 5.0,
            length: 14.0,
            length_jitter: 6.0,
            width: 1.0,
            intensity: 0.5,
            blur_sigma: 0.6,
            seed: 0,
        }
    }
}

impl RainParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::contract("rain params", msg)) };
        check(self.density >= 0.0 && self.density.is_finite(), "density must be finite and nonnegative")?;
        check((0.0..=1.0).contains(&self.intensity), "intensity must lie in [0, 1]")?;
        check(self.length >= 0.0 && self.length_jitter >= 0.0, "length and its jitter must be nonnegative")?;
        check(self.width > 0.0, "width must be positive")?;
        check(self.blur_sigma >= 0.0, "blur_sigma must be nonnegative")?;
        check(
            self.angle_deg.is_finite() && self.angle_jitter_deg.is_finite() && self.angle_jitter_deg >= 0.0,
            "angles must be finite with nonnegative jitter",
        )
    }

    /// Streaks drawn on an `h × w` image.
    pub fn streak_count(&self, height: usize, width: usize) -> usize {
        (self.density * (height * width) as f64 / 1e6).round() as usize
    }
}

/// Normalized Gaussian taps with radius `ceil(3σ)`.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| {
            let d = i as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn draw_segment(layer: &mut [f64], h: usize, w: usize, a: (f64, f64), b: (f64, f64), width: f64) {
    // pixel centers within half_width of the segment get full coverage,
    // with a one-pixel linear ramp outside that
    let half = width / 2.0;
    let reach = half + 1.0;
    let (ax, ay) = a;
    let (dx, dy) = (b.0 - ax, b.1 - ay);
    let len2 = dx * dx + dy * dy;
    let lo_x = (ax.min(b.0) - reach).floor().max(0.0) as usize;
    let lo_y = (ay.min(b.1) - reach).floor().max(0.0) as usize;
    let hi_x = (ax.max(b.0) + reach).ceil().min(w as f64 - 1.0);
    let hi_y = (ay.max(b.1) + reach).ceil().min(h as f64 - 1.0);
    if hi_x < 0.0 || hi_y < 0.0 {
        return;
    }
    for y in lo_y..=hi_y as usize {
        for x in lo_x..=hi_x as usize {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let t = if len2 > 0.0 {
                (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (cx, cy) = (ax + t * dx - px, ay + t * dy - py);
            let dist = (cx * cx + cy * cy).sqrt();
            let cover = (half + 0.5 - dist).clamp(0.0, 1.0);
            let cell = &mut layer[y * w + x];
            if cover > *cell {
                *cell = cover;
            }
        }
    }
}

/// Coverage layer `(N, 1, H, W)` in `[0, 1]`, before intensity scaling.
pub fn streak_layer(dims: Dims, p: &RainParams) -> Result<Tensor<f64>> {
    p.validate()?;
    let (h, w) = (dims.height, dims.width);
    let out_dims = dims.with_channels(1);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut layer = Tensor::zeros(out_dims);
    let count = p.streak_count(h, w);
    for n in 0..dims.batch {
        let plane = layer.item_mut(n);
        for _ in 0..count {
            let angle = (p.angle_deg + p.angle_jitter_deg * rng.gen_range(-1.0..=1.0)).to_radians();
            let len = (p.length + p.length_jitter * rng.gen_range(-1.0..=1.0)).max(0.0);
            // centers may fall just outside so streaks also clip the borders
            let cx = rng.gen_range(-len / 2.0..=w as f64 + len / 2.0);
            let cy = rng.gen_range(-len / 2.0..=h as f64 + len / 2.0);
            let (ux, uy) = (angle.sin() * len / 2.0, angle.cos() * len / 2.0);
            draw_segment(plane, h, w, (cx - ux, cy - uy), (cx + ux, cy + uy), p.width);
        }
    }
    if p.blur_sigma > 0.0 {
        let taps = gaussian_taps(p.blur_sigma);
        let blurred = filter_axis(&layer, Axis::Height, &taps);
        layer = filter_axis(&blurred, Axis::Width, &taps);
    }
    Ok(layer)
}

/// Adds rain to a clean image with values in `[0, 1]` and clips to
/// `[0, 1]`. Zero density or intensity returns the input unchanged.
pub fn synthesize_rain<T: Real>(clean: &Tensor<T>, p: &RainParams) -> Result<Tensor<T>> {
    p.validate()?;
    let d = clean.dims();
    if p.streak_count(d.height, d.width) == 0 || p.intensity == 0.0 {
        return Ok(clean.clone());
    }
    let layer = streak_layer(d, p)?;
    let mut out = clean.clone();
    for n in 0..d.batch {
        let src = layer.item(n);
        let dst = out.item_mut(n);
        for c in 0..d.channels {
            for (o, &s) in dst[c * d.plane()..(c + 1) * d.plane()].iter_mut().zip(src) {
                let v = o.as_f64() + p.intensity * s;
                *o = T::from_f64(v.clamp(0.0, 1.0));
            }
        }
    }
    Ok(out)
}
