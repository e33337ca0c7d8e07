//! Stride-1 "same" 2-D convolution (cross-correlation, no kernel flip).
//!
//! Each batch item is unfolded into a column matrix and multiplied against
//! the kernel matrix; the backward pass reuses the same unfolding. Batch
//! items are processed in order, so every reduction has a fixed order and
//! results are bit-reproducible.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::filter::reflect_index;
use crate::real::Real;
use crate::tensor::{Dims, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Padding {
    /// Out-of-range taps read zero.
    ZeroSame,
    /// Out-of-range taps read the mirrored pixel, edge not repeated.
    SymmetricSame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub padding: Padding,
}

impl ConvSpec {
    pub fn new(kernel: usize, in_channels: usize, out_channels: usize, padding: Padding) -> Self {
        ConvSpec {
            kernel_h: kernel,
            kernel_w: kernel,
            in_channels,
            out_channels,
            padding,
        }
    }

    /// Reads the geometry off a weight tensor laid out `(out, in, kh, kw)`.
    pub fn from_weights(weights: Dims, padding: Padding) -> Self {
        ConvSpec {
            kernel_h: weights.height,
            kernel_w: weights.width,
            in_channels: weights.channels,
            out_channels: weights.batch,
            padding,
        }
    }

    pub fn weight_dims(&self) -> Dims {
        Dims::new(self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)
    }

    pub fn bias_dims(&self) -> Dims {
        Dims::new(1, self.out_channels, 1, 1)
    }

    pub fn param_count(&self) -> usize {
        self.weight_dims().len() + self.out_channels
    }

    fn validate<T: Real>(&self, input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<()> {
        if self.kernel_h % 2 == 0 || self.kernel_w % 2 == 0 {
            return Err(Error::contract("conv2d", "kernel sides must be odd"));
        }
        self.weight_dims().expect_eq(&weights.dims(), "conv2d weights")?;
        self.bias_dims().expect_eq(&bias.dims(), "conv2d bias")?;
        let d = input.dims();
        if d.channels != self.in_channels {
            return Err(Error::Shape {
                op: "conv2d input",
                axis: "channel",
                expected: self.in_channels,
                found: d.channels,
            });
        }
        Ok(())
    }

    fn is_pointwise(&self) -> bool {
        self.kernel_h == 1 && self.kernel_w == 1
    }
}

/// Source index for tap offset `delta` at position `pos`, or `None` when the
/// tap reads zero padding.
#[inline]
fn source(pos: usize, delta: isize, n: usize, padding: Padding) -> Option<usize> {
    let s = pos as isize + delta;
    if s >= 0 && (s as usize) < n {
        return Some(s as usize);
    }
    match padding {
        Padding::ZeroSame => None,
        Padding::SymmetricSame => Some(reflect_index(s, n)),
    }
}

/// Unfolds one item `(C, H, W)` into `(C·kh·kw) × (H·W)`.
fn im2col<T: Real>(item: &[T], spec: &ConvSpec, h: usize, w: usize, col: &mut [T]) {
    let (kh, kw) = (spec.kernel_h, spec.kernel_w);
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let plane = h * w;
    let mut row = 0;
    for c in 0..spec.in_channels {
        let src = &item[c * plane..(c + 1) * plane];
        for ky in 0..kh {
            let dy = ky as isize - ph;
            for kx in 0..kw {
                let dx = kx as isize - pw;
                let dst = &mut col[row * plane..(row + 1) * plane];
                // columns whose tap stays in range
                let x_lo = (-dx).max(0) as usize;
                let x_hi = ((w as isize - dx).min(w as isize)).max(0) as usize;
                for y in 0..h {
                    let out = &mut dst[y * w..(y + 1) * w];
                    let Some(sy) = source(y, dy, h, spec.padding) else {
                        out.fill(T::zero());
                        continue;
                    };
                    let srow = &src[sy * w..(sy + 1) * w];
                    if x_lo < x_hi {
                        let s0 = (x_lo as isize + dx) as usize;
                        out[x_lo..x_hi].copy_from_slice(&srow[s0..s0 + (x_hi - x_lo)]);
                    }
                    for x in (0..x_lo.min(w)).chain(x_hi.max(x_lo).min(w)..w) {
                        out[x] = match source(x, dx, w, spec.padding) {
                            Some(sx) => srow[sx],
                            None => T::zero(),
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back into `(C, H, W)`.
fn col2im<T: Real>(col: &[T], spec: &ConvSpec, h: usize, w: usize, item: &mut [T]) {
    let (kh, kw) = (spec.kernel_h, spec.kernel_w);
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let plane = h * w;
    let mut row = 0;
    for c in 0..spec.in_channels {
        let dst = &mut item[c * plane..(c + 1) * plane];
        for ky in 0..kh {
            let dy = ky as isize - ph;
            for kx in 0..kw {
                let dx = kx as isize - pw;
                let src = &col[row * plane..(row + 1) * plane];
                let x_lo = (-dx).max(0) as usize;
                let x_hi = ((w as isize - dx).min(w as isize)).max(0) as usize;
                for y in 0..h {
                    let Some(sy) = source(y, dy, h, spec.padding) else {
                        continue;
                    };
                    let g = &src[y * w..(y + 1) * w];
                    let drow = &mut dst[sy * w..(sy + 1) * w];
                    if x_lo < x_hi {
                        let s0 = (x_lo as isize + dx) as usize;
                        for (d, &v) in drow[s0..s0 + (x_hi - x_lo)].iter_mut().zip(&g[x_lo..x_hi]) {
                            *d += v;
                        }
                    }
                    for x in (0..x_lo.min(w)).chain(x_hi.max(x_lo).min(w)..w) {
                        if let Some(sx) = source(x, dx, w, spec.padding) {
                            drow[sx] += g[x];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    spec.validate(input, weights, bias)?;
    let d = input.dims();
    let (h, w) = (d.height, d.width);
    let plane = h * w;
    let rows = spec.in_channels * spec.kernel_h * spec.kernel_w;
    let mut out = Tensor::zeros(d.with_channels(spec.out_channels));
    let mut col = if spec.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); rows * plane]
    };
    for n in 0..d.batch {
        let item = input.item(n);
        let cols: &[T] = if spec.is_pointwise() {
            item
        } else {
            im2col(item, spec, h, w, &mut col);
            &col
        };
        let dst = out.item_mut(n);
        for (o, &b) in bias.data().iter().enumerate() {
            dst[o * plane..(o + 1) * plane].fill(b);
        }
        T::gemm(spec.out_channels, rows, plane, weights.data(), false, cols, false, dst, true);
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to input, weights and bias.
pub struct ConvGrads<T> {
    /// `None` when not requested.
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    spec: &ConvSpec,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> ConvGrads<T> {
    let d = input.dims();
    let (h, w) = (d.height, d.width);
    let plane = h * w;
    let rows = spec.in_channels * spec.kernel_h * spec.kernel_w;
    let mut g_in = need_input.then(|| Tensor::zeros(d));
    let mut g_w = Tensor::zeros(weights.dims());
    let mut g_b = Tensor::zeros(spec.bias_dims());
    let mut col = vec![T::zero(); rows * plane];
    let mut dcol = if need_input { vec![T::zero(); rows * plane] } else { Vec::new() };
    for n in 0..d.batch {
        let g = grad_out.item(n);
        for (o, gb) in g_b.data_mut().iter_mut().enumerate() {
            let mut s = T::zero();
            for &v in &g[o * plane..(o + 1) * plane] {
                s += v;
            }
            *gb += s;
        }
        let item = input.item(n);
        if spec.is_pointwise() {
            T::gemm(spec.out_channels, plane, rows, g, false, item, true, g_w.data_mut(), true);
            if let Some(gi) = g_in.as_mut() {
                T::gemm(rows, spec.out_channels, plane, weights.data(), true, g, false, gi.item_mut(n), false);
            }
        } else {
            im2col(item, spec, h, w, &mut col);
            T::gemm(spec.out_channels, plane, rows, g, false, &col, true, g_w.data_mut(), true);
            if let Some(gi) = g_in.as_mut() {
                T::gemm(rows, spec.out_channels, plane, weights.data(), true, g, false, &mut dcol, false);
                col2im(&dcol, spec, h, w, gi.item_mut(n));
            }
        }
    }
    ConvGrads {
        input: g_in,
        weights: g_w,
        bias: g_b,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(d: Dims) -> Tensor<f64> {
        Tensor::full(d, 1.0)
    }

    #[test]
    fn box_kernel_border_arithmetic() {
        let spec = ConvSpec::new(3, 1, 1, Padding::ZeroSame);
        let out = conv2d(
            &ones(Dims::new(1, 1, 3, 3)),
            &ones(spec.weight_dims()),
            &Tensor::zeros(spec.bias_dims()),
            &spec,
        )
        .unwrap();
        assert_eq!(out.at(0, 0, 1, 1), 9.0);
        for (y, x) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(out.at(0, 0, y, x), 4.0);
        }
        assert_eq!(out.at(0, 0, 0, 1), 6.0);
    }

    #[test]
    fn symmetric_padding_keeps_constants() {
        let spec = ConvSpec::new(3, 1, 1, Padding::SymmetricSame);
        let out = conv2d(
            &Tensor::full(Dims::new(1, 1, 4, 5), 0.5f64),
            &Tensor::full(spec.weight_dims(), 1.0 / 9.0),
            &Tensor::zeros(spec.bias_dims()),
            &spec,
        )
        .unwrap();
        for &v in out.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn delta_kernel_is_identity() {
        let spec = ConvSpec::new(3, 2, 2, Padding::ZeroSame);
        let x = Tensor::<f32>::from_fn(Dims::new(2, 2, 5, 7), |n, c, y, xx| {
            (n * 31 + c * 7 + y * 3 + xx) as f32 * 0.1 - 1.0
        });
        let mut w = Tensor::zeros(spec.weight_dims());
        w.set(0, 0, 1, 1, 1.0);
        w.set(1, 1, 1, 1, 1.0);
        let out = conv2d(&x, &w, &Tensor::zeros(spec.bias_dims()), &spec).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn bias_is_added_per_channel() {
        let spec = ConvSpec::new(1, 1, 2, Padding::ZeroSame);
        let b = Tensor::from_vec(spec.bias_dims(), vec![0.25f32, -1.0]).unwrap();
        let out = conv2d(&Tensor::zeros(Dims::new(1, 1, 2, 2)), &Tensor::zeros(spec.weight_dims()), &b, &spec).unwrap();
        assert_eq!(out.plane(0, 0), &[0.25; 4]);
        assert_eq!(out.plane(0, 1), &[-1.0; 4]);
    }

    #[test]
    fn mismatch_names_axis() {
        let spec = ConvSpec::new(3, 3, 4, Padding::ZeroSame);
        let err = conv2d(
            &Tensor::<f32>::zeros(Dims::new(1, 2, 4, 4)),
            &Tensor::zeros(spec.weight_dims()),
            &Tensor::zeros(spec.bias_dims()),
            &spec,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Shape { axis: "channel", expected: 3, found: 2, .. }));
        let bad_w = Tensor::<f32>::zeros(Dims::new(4, 3, 3, 1));
        let err = conv2d(&Tensor::zeros(Dims::new(1, 3, 4, 4)), &bad_w, &Tensor::zeros(spec.bias_dims()), &spec)
            .unwrap_err();
        assert!(matches!(err, Error::Shape { axis: "width", .. }));
    }

    #[test]
    fn tiny_images_smaller_than_kernel() {
        for padding in [Padding::ZeroSame, Padding::SymmetricSame] {
            let spec = ConvSpec::new(3, 1, 1, padding);
            let x = Tensor::<f64>::full(Dims::new(1, 1, 1, 1), 2.0);
            let out = conv2d(&x, &ones(spec.weight_dims()), &Tensor::zeros(spec.bias_dims()), &spec).unwrap();
            let want = if padding == Padding::ZeroSame { 2.0 } else { 18.0 };
            assert_eq!(out.value(), want);
        }
    }
}
