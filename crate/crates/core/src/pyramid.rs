//! Gaussian and Laplacian pyramids.
//!
//! Smoothing uses the separable 5-tap binomial kernel under mirrored
//! borders, decimation keeps even rows and columns (odd sides round up),
//! and expansion inserts zeros and smooths with twice the kernel. With these
//! three rules a constant image has an exactly zero band-pass residual, and
//! decomposition followed by reconstruction telescopes back to the input.
//!
//! All operators are written against [`Graph`], so they can be evaluated
//! eagerly or recorded for differentiation.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::filter::Axis;
use crate::graph::{Eager, Graph};
use crate::real::Real;
use crate::tensor::{Dims, Tensor};

/// Five symmetric taps summing to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PyramidKernel {
    taps: [f64; 5],
}

impl PyramidKernel {
    pub const BINOMIAL: PyramidKernel = PyramidKernel {
        taps: [0.0625, 0.25, 0.375, 0.25, 0.0625],
    };

    pub fn taps(&self) -> [f64; 5] {
        self.taps
    }

    fn smoothing<T: Real>(&self) -> [T; 5] {
        self.taps.map(T::from_f64)
    }

    fn expansion<T: Real>(&self) -> [T; 5] {
        self.taps.map(|t| T::from_f64(2.0 * t))
    }
}

impl Default for PyramidKernel {
    fn default() -> Self {
        Self::BINOMIAL
    }
}

/// Levels ordered finest (level 1, index 0) to coarsest.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid<N> {
    pub levels: Vec<N>,
}

impl<N> Pyramid<N> {
    pub fn new(levels: Vec<N>) -> Self {
        Pyramid { levels }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Level `n`, counted from 1.
    pub fn level(&self, n: usize) -> &N {
        &self.levels[n - 1]
    }

    pub fn finest(&self) -> &N {
        &self.levels[0]
    }

    pub fn coarsest(&self) -> &N {
        &self.levels[self.levels.len() - 1]
    }
}

/// Spatial size of every level for an `height × width` base.
pub fn level_sizes(height: usize, width: usize, levels: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(levels);
    let (mut h, mut w) = (height, width);
    for _ in 0..levels {
        out.push((h, w));
        h = h.div_ceil(2);
        w = w.div_ceil(2);
    }
    out
}

/// Smallest base side the network accepts for a `levels`-deep pyramid:
/// `2^(levels−1)`, the side that halves exactly down to one pixel.
pub fn min_side(levels: usize) -> usize {
    1 << levels.saturating_sub(1)
}

pub fn gaussian_downsample<T: Real, G: Graph<T>>(
    g: &mut G,
    kernel: &PyramidKernel,
    img: &G::Node,
) -> G::Node {
    let taps = kernel.smoothing::<T>();
    let a = g.filter_axis(img, Axis::Height, &taps);
    let b = g.filter_axis(&a, Axis::Width, &taps);
    g.decimate(&b)
}

/// Expands `img` to `height × width`; each target side must be twice the
/// source side or one less.
pub fn upsample_to<T: Real, G: Graph<T>>(
    g: &mut G,
    kernel: &PyramidKernel,
    img: &G::Node,
    height: usize,
    width: usize,
) -> Result<G::Node> {
    let taps = kernel.expansion::<T>();
    let mut x = g.zero_insert(img, height, width)?;
    // a side of 1 has nothing to interpolate
    if height > 1 {
        x = g.filter_axis(&x, Axis::Height, &taps);
    }
    if width > 1 {
        x = g.filter_axis(&x, Axis::Width, &taps);
    }
    Ok(x)
}

/// Returns `(laplacian, gaussian)` pyramids with `levels` levels each.
pub fn laplacian_decompose<T: Real, G: Graph<T>>(
    g: &mut G,
    kernel: &PyramidKernel,
    img: &G::Node,
    levels: usize,
) -> Result<(Pyramid<G::Node>, Pyramid<G::Node>)> {
    if levels == 0 {
        return Err(Error::contract("laplacian_decompose", "need at least one level"));
    }
    let mut gauss = Vec::with_capacity(levels);
    gauss.push(img.clone());
    for n in 1..levels {
        let next = gaussian_downsample(g, kernel, &gauss[n - 1]);
        gauss.push(next);
    }
    let mut lap = Vec::with_capacity(levels);
    for n in 0..levels - 1 {
        let d = g.value(&gauss[n]).dims();
        let up = upsample_to(g, kernel, &gauss[n + 1], d.height, d.width)?;
        lap.push(g.sub(&gauss[n], &up)?);
    }
    lap.push(gauss[levels - 1].clone());
    Ok((Pyramid::new(lap), Pyramid::new(gauss)))
}

fn check_chain(dims: &[Dims]) -> Result<()> {
    for n in 1..dims.len() {
        let (fine, coarse) = (dims[n - 1], dims[n]);
        let want = fine.with_spatial(fine.height.div_ceil(2), fine.width.div_ceil(2));
        if coarse != want {
            return Err(Error::contract(
                "gaussian_reconstruct",
                alloc::format!(
                    "level {} is {}x{}x{}x{}, expected {}x{}x{}x{} from level {}",
                    n + 1,
                    coarse.batch,
                    coarse.channels,
                    coarse.height,
                    coarse.width,
                    want.batch,
                    want.channels,
                    want.height,
                    want.width,
                    n
                ),
            ));
        }
    }
    Ok(())
}

/// Rebuilds every Gaussian level from a Laplacian pyramid, clamping each
/// level at zero when `clamp` is set. Level 1 of the result is the image.
pub fn gaussian_reconstruct<T: Real, G: Graph<T>>(
    g: &mut G,
    kernel: &PyramidKernel,
    laplacian: &Pyramid<G::Node>,
    clamp: bool,
) -> Result<Pyramid<G::Node>> {
    if laplacian.is_empty() {
        return Err(Error::contract("gaussian_reconstruct", "empty pyramid"));
    }
    let dims: Vec<Dims> = laplacian.levels.iter().map(|l| g.value(l).dims()).collect();
    check_chain(&dims)?;
    let n = laplacian.len();
    let mut out: Vec<G::Node> = Vec::with_capacity(n);
    let top = laplacian.levels[n - 1].clone();
    out.push(if clamp { g.relu(&top) } else { top });
    for level in (0..n - 1).rev() {
        let d = dims[level];
        let coarser = out.last().expect("pushed above");
        let up = upsample_to(g, kernel, coarser, d.height, d.width)?;
        let sum = g.add(&laplacian.levels[level], &up)?;
        out.push(if clamp { g.relu(&sum) } else { sum });
    }
    out.reverse();
    Ok(Pyramid::new(out))
}

/// Eager Gaussian pyramid of a tensor.
pub fn gaussian_pyramid<T: Real>(img: &Tensor<T>, levels: usize) -> Result<Pyramid<Tensor<T>>> {
    Ok(laplacian_decompose(&mut Eager, &PyramidKernel::BINOMIAL, img, levels)?.1)
}

/// Eager Laplacian pyramid of a tensor.
pub fn laplacian_pyramid<T: Real>(img: &Tensor<T>, levels: usize) -> Result<Pyramid<Tensor<T>>> {
    Ok(laplacian_decompose(&mut Eager, &PyramidKernel::BINOMIAL, img, levels)?.0)
}

/// Eager reconstruction; returns the finest Gaussian level.
pub fn reconstruct<T: Real>(laplacian: &Pyramid<Tensor<T>>, clamp: bool) -> Result<Tensor<T>> {
    let mut p = gaussian_reconstruct(&mut Eager, &PyramidKernel::BINOMIAL, laplacian, clamp)?;
    Ok(p.levels.swap_remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const K: PyramidKernel = PyramidKernel::BINOMIAL;

    fn noise(d: Dims, seed: u64) -> Tensor<f64> {
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        Tensor::from_fn(d, |_, _, _, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let t = K.taps();
        assert_eq!(t.iter().sum::<f64>(), 1.0);
        for i in 0..5 {
            assert_eq!(t[i], t[4 - i]);
        }
    }

    #[test]
    fn downsample_shapes_and_constants() {
        for (h, w, oh, ow) in [(80, 80, 40, 40), (5, 5, 3, 3), (1, 7, 1, 4)] {
            let x = Tensor::full(Dims::new(2, 3, h, w), 0.7f64);
            let y = gaussian_downsample(&mut Eager, &K, &x);
            assert_eq!(y.dims(), Dims::new(2, 3, oh, ow));
            assert!(y.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        }
    }

    #[test]
    fn upsample_keeps_constants_everywhere() {
        for (h, w, th, tw) in [(40, 40, 80, 80), (3, 3, 5, 5), (3, 2, 6, 3), (1, 1, 1, 2), (1, 1, 2, 1)] {
            let x = Tensor::full(Dims::new(1, 3, h, w), 0.5f32);
            let y = upsample_to(&mut Eager, &K, &x, th, tw).unwrap();
            assert_eq!(y.dims(), Dims::new(1, 3, th, tw));
            assert!(y.data().iter().all(|&v| v == 0.5), "{h}x{w} -> {th}x{tw}");
        }
        let x = Tensor::full(Dims::new(1, 1, 3, 3), 1.0f32);
        assert!(upsample_to(&mut Eager, &K, &x, 7, 6).is_err());
    }

    #[test]
    fn constant_image_has_sparse_laplacian() {
        let x = Tensor::full(Dims::new(1, 3, 80, 80), 0.5f32);
        let lap = laplacian_pyramid(&x, 5).unwrap();
        let sizes: Vec<usize> = lap.levels.iter().map(|l| l.dims().height).collect();
        assert_eq!(sizes, vec![80, 40, 20, 10, 5]);
        for l in &lap.levels[..4] {
            assert!(l.data().iter().all(|&v| v == 0.0));
        }
        assert!(lap.level(5).data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn round_trip_identity_with_and_without_clamp() {
        let x = noise(Dims::new(2, 3, 37, 50), 3);
        let lap = laplacian_pyramid(&x, 5).unwrap();
        for clamp in [false, true] {
            let y = reconstruct(&lap, clamp).unwrap();
            assert!(y.max_abs_diff(&x) < 1e-12);
        }
    }

    #[test]
    fn zero_pyramid_reconstructs_to_zero() {
        let levels = level_sizes(21, 13, 4)
            .into_iter()
            .map(|(h, w)| Tensor::<f32>::zeros(Dims::new(1, 3, h, w)))
            .collect();
        let g = gaussian_reconstruct(&mut Eager, &K, &Pyramid::new(levels), true).unwrap();
        assert_eq!(g.len(), 4);
        for l in &g.levels {
            assert!(l.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn broken_chain_is_rejected() {
        let levels = vec![
            Tensor::<f32>::zeros(Dims::new(1, 3, 8, 8)),
            Tensor::zeros(Dims::new(1, 3, 3, 4)),
        ];
        let err = gaussian_reconstruct(&mut Eager, &K, &Pyramid::new(levels), false).unwrap_err();
        assert!(matches!(err, Error::Contract { op: "gaussian_reconstruct", .. }));
        assert!(laplacian_pyramid(&Tensor::<f32>::zeros(Dims::new(1, 1, 4, 4)), 0).is_err());
    }

    #[test]
    fn tiny_images_still_decompose() {
        let x = noise(Dims::new(1, 1, 5, 6), 9);
        let lap = laplacian_pyramid(&x, 5).unwrap();
        let sizes: Vec<(usize, usize)> = lap.levels.iter().map(|l| (l.dims().height, l.dims().width)).collect();
        assert_eq!(sizes, level_sizes(5, 6, 5));
        assert!(reconstruct(&lap, false).unwrap().max_abs_diff(&x) < 1e-12);
    }
}
