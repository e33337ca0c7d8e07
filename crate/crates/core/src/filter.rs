//! Separable filtering, decimation and zero insertion with mirrored borders.
//!
//! These are the linear building blocks of the pyramid operators and of
//! the SSIM window. Each comes with its exact adjoint for back-propagation.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Dims, Tensor};

/// Mirrors `i` into `[0, n)` without repeating the edge sample
/// (`-1 → 1`, `n → n-2`). Any offset is accepted; the reflection is periodic.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Height,
    Width,
}

/// Per-axis view of a tensor: `count` independent lines of `len` samples,
/// consecutive samples `stride` apart.
struct Lines {
    axis: Axis,
    len: usize,
    stride: usize,
    count: usize,
}

impl Lines {
    fn new(d: Dims, axis: Axis) -> Self {
        match axis {
            Axis::Height => Lines {
                axis,
                len: d.height,
                stride: d.width,
                count: d.batch * d.channels * d.width,
            },
            Axis::Width => Lines {
                axis,
                len: d.width,
                stride: 1,
                count: d.batch * d.channels * d.height,
            },
        }
    }

    fn start(&self, line: usize, d: Dims) -> usize {
        match self.axis {
            Axis::Width => line * self.len,
            Axis::Height => {
                let plane = d.height * d.width;
                (line / d.width) * plane + line % d.width
            }
        }
    }
}

/// Correlates every line along `axis` with the odd-length `taps`, centred.
pub fn filter_axis<T: Real>(x: &Tensor<T>, axis: Axis, taps: &[T]) -> Tensor<T> {
    debug_assert!(taps.len() % 2 == 1);
    let d = x.dims();
    let lines = Lines::new(d, axis);
    let r = (taps.len() / 2) as isize;
    let src = x.data();
    let mut out = Tensor::zeros(d);
    let dst = out.data_mut();
    let n = lines.len;
    // source index table for every (position, tap)
    let table: Vec<usize> = (0..n)
        .flat_map(|j| (0..taps.len()).map(move |k| reflect_index(j as isize + k as isize - r, n)))
        .collect();
    for line in 0..lines.count {
        let s0 = lines.start(line, d);
        for j in 0..n {
            let idx = &table[j * taps.len()..(j + 1) * taps.len()];
            let mut acc = T::zero();
            for (&t, &i) in taps.iter().zip(idx) {
                acc += t * src[s0 + i * lines.stride];
            }
            dst[s0 + j * lines.stride] = acc;
        }
    }
    out
}

/// Adjoint of [`filter_axis`].
pub fn filter_axis_adjoint<T: Real>(g: &Tensor<T>, axis: Axis, taps: &[T]) -> Tensor<T> {
    let d = g.dims();
    let lines = Lines::new(d, axis);
    let r = (taps.len() / 2) as isize;
    let src = g.data();
    let mut out = Tensor::zeros(d);
    let dst = out.data_mut();
    let n = lines.len;
    for line in 0..lines.count {
        let s0 = lines.start(line, d);
        for j in 0..n {
            let gj = src[s0 + j * lines.stride];
            for (k, &t) in taps.iter().enumerate() {
                let i = reflect_index(j as isize + k as isize - r, n);
                dst[s0 + i * lines.stride] += t * gj;
            }
        }
    }
    out
}

#[inline]
fn half_ceil(n: usize) -> usize {
    n.div_ceil(2)
}

/// Keeps even-indexed rows and columns; odd sizes round up.
pub fn decimate<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let d = x.dims();
    let od = d.with_spatial(half_ceil(d.height), half_ceil(d.width));
    Tensor::from_fn(od, |n, c, y, xx| x.at(n, c, 2 * y, 2 * xx))
}

/// Adjoint of [`decimate`] for an original size of `dims`.
pub fn decimate_adjoint<T: Real>(g: &Tensor<T>, dims: Dims) -> Tensor<T> {
    let mut out = Tensor::zeros(dims);
    let gd = g.dims();
    for n in 0..gd.batch {
        for c in 0..gd.channels {
            for y in 0..gd.height {
                for x in 0..gd.width {
                    out.set(n, c, 2 * y, 2 * x, g.at(n, c, y, x));
                }
            }
        }
    }
    out
}

fn check_target(op: &'static str, axis: &'static str, src: usize, target: usize) -> Result<()> {
    if target == 2 * src || target + 1 == 2 * src {
        Ok(())
    } else {
        Err(Error::contract(
            op,
            alloc::format!(
                "{axis} target {target} is not 2·{src} or 2·{src}−1"
            ),
        ))
    }
}

/// Places sample `(i, j)` at `(2i, 2j)` of a zero tensor of the target size.
/// Each target side must be `2d` or `2d−1` for source side `d`.
pub fn zero_insert<T: Real>(x: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
    let d = x.dims();
    check_target("upsample", "height", d.height, height)?;
    check_target("upsample", "width", d.width, width)?;
    Ok(decimate_adjoint(x, d.with_spatial(height, width)))
}
