//! ℓ1, SSIM, the multi-level training objective, and PSNR.

use alloc::vec::Vec;

#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::filter::Axis;
use crate::graph::{Eager, Graph};
use crate::pyramid::{self, Pyramid, PyramidKernel};
use crate::real::Real;
use crate::tensor::Tensor;

/// Levels (counted from 1) that also carry an SSIM term.
pub const SSIM_LEVELS: usize = 2;

/// SSIM with a Gaussian window and mirrored borders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized 1-D window; the 2-D window is its outer product.
    pub fn window_taps(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    }
}

/// Mean absolute difference.
pub fn l1_loss<T: Real, G: Graph<T>>(g: &mut G, a: &G::Node, b: &G::Node) -> Result<G::Node> {
    let d = g.sub(a, b)?;
    let m = g.abs(&d);
    Ok(g.mean(&m))
}

fn blur<T: Real, G: Graph<T>>(g: &mut G, x: &G::Node, taps: &[T]) -> G::Node {
    let h = g.filter_axis(x, Axis::Height, taps);
    g.filter_axis(&h, Axis::Width, taps)
}

/// Mean local SSIM over every pixel, channel and batch item.
///
/// Every product and sum in the index is formed symmetrically in `a` and
/// `b`, so `ssim(a, b)` and `ssim(b, a)` agree bit for bit.
pub fn ssim<T: Real, G: Graph<T>>(
    g: &mut G,
    a: &G::Node,
    b: &G::Node,
    cfg: &SsimConfig,
) -> Result<G::Node> {
    g.value(a).dims().expect_eq(&g.value(b).dims(), "ssim")?;
    let taps: Vec<T> = cfg.window_taps().into_iter().map(T::from_f64).collect();
    let (c1, c2) = (T::from_f64(cfg.c1()), T::from_f64(cfg.c2()));
    let two = T::from_f64(2.0);

    let mu_a = blur(g, a, &taps);
    let mu_b = blur(g, b, &taps);
    let aa = g.mul(a, a)?;
    let bb = g.mul(b, b)?;
    let ab = g.mul(a, b)?;
    let e_aa = blur(g, &aa, &taps);
    let e_bb = blur(g, &bb, &taps);
    let e_ab = blur(g, &ab, &taps);
    let mu_aa = g.mul(&mu_a, &mu_a)?;
    let mu_bb = g.mul(&mu_b, &mu_b)?;
    let mu_ab = g.mul(&mu_a, &mu_b)?;
    let var_a = g.sub(&e_aa, &mu_aa)?;
    let var_b = g.sub(&e_bb, &mu_bb)?;
    let cov = g.sub(&e_ab, &mu_ab)?;

    let lum_num = g.affine(&mu_ab, two, c1);
    let con_num = g.affine(&cov, two, c2);
    let mu_sq = g.add(&mu_aa, &mu_bb)?;
    let lum_den = g.affine(&mu_sq, T::one(), c1);
    let var_sum = g.add(&var_a, &var_b)?;
    let con_den = g.affine(&var_sum, T::one(), c2);
    let num = g.mul(&lum_num, &con_num)?;
    let den = g.mul(&lum_den, &con_den)?;
    let map = g.div(&num, &den)?;
    Ok(g.mean(&map))
}

/// Per-term breakdown of the training objective, averaged over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    /// ℓ1 on every Gaussian level, finest first.
    pub per_level_l1: Vec<f64>,
    /// `1 − SSIM` on the finest [`SSIM_LEVELS`] levels.
    pub per_level_ssim_loss: Vec<f64>,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
            && self.per_level_l1.iter().all(|v| v.is_finite())
            && self.per_level_ssim_loss.iter().all(|v| v.is_finite())
    }
}

/// `Σₙ ℓ1(Gₙ(Y), Gₙ(Y_GT)) + Σ_{n≤2} (1 − SSIM(Gₙ(Y), Gₙ(Y_GT)))`, with the
/// ground-truth Gaussian pyramid built to the same depth as `output`.
pub fn combined_loss<T: Real, G: Graph<T>>(
    g: &mut G,
    output: &Pyramid<G::Node>,
    target: &G::Node,
) -> Result<(G::Node, LossReport)> {
    if output.is_empty() {
        return Err(Error::contract("combined_loss", "output pyramid has no levels"));
    }
    let kernel = PyramidKernel::BINOMIAL;
    let (_, truth) = pyramid::laplacian_decompose(g, &kernel, target, output.len())?;
    for (n, (o, t)) in output.levels.iter().zip(&truth.levels).enumerate() {
        let (od, td) = (g.value(o).dims(), g.value(t).dims());
        if od != td {
            return Err(Error::contract(
                "combined_loss",
                alloc::format!(
                    "level {} is {}x{}x{}x{} but the target level is {}x{}x{}x{}",
                    n + 1,
                    od.batch,
                    od.channels,
                    od.height,
                    od.width,
                    td.batch,
                    td.channels,
                    td.height,
                    td.width
                ),
            ));
        }
    }
    let cfg = SsimConfig::default();
    let mut terms = Vec::new();
    let mut per_level_l1 = Vec::with_capacity(output.len());
    for (o, t) in output.levels.iter().zip(&truth.levels) {
        let l = l1_loss(g, o, t)?;
        per_level_l1.push(g.value(&l).value().as_f64());
        terms.push(l);
    }
    let mut per_level_ssim_loss = Vec::with_capacity(SSIM_LEVELS);
    for (o, t) in output.levels.iter().zip(&truth.levels).take(SSIM_LEVELS) {
        let s = ssim(g, o, t, &cfg)?;
        let l = g.affine(&s, -T::one(), T::one());
        per_level_ssim_loss.push(g.value(&l).value().as_f64());
        terms.push(l);
    }
    let mut total = terms[0].clone();
    for t in &terms[1..] {
        total = g.add(&total, t)?;
    }
    let report = LossReport {
        total: g.value(&total).value().as_f64(),
        per_level_l1,
        per_level_ssim_loss,
    };
    Ok((total, report))
}

/// Mean SSIM between two tensors with the default configuration.
pub fn ssim_value<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    Ok(ssim(&mut Eager, a, b, &SsimConfig::default())?.value().as_f64())
}

/// Peak signal-to-noise ratio in dB for a dynamic range of 1. Identical
/// inputs give `f64::INFINITY`.
pub fn psnr<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    a.dims().expect_eq(&b.dims(), "psnr")?;
    let se: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    let mse = se / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims;
    use alloc::vec;

    #[test]
    fn window_is_normalized() {
        let cfg = SsimConfig::default();
        let t = cfg.window_taps();
        assert_eq!(t.len(), 11);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(cfg.c1() > 0.0 && cfg.c2() > 0.0);
        assert!((cfg.c1() - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn l1_examples() {
        let a = Tensor::from_vec(Dims::new(1, 1, 1, 2), vec![0.0f64, 0.5]).unwrap();
        let b = Tensor::from_vec(Dims::new(1, 1, 1, 2), vec![0.5f64, 0.5]).unwrap();
        assert_eq!(l1_loss(&mut Eager, &a, &b).unwrap().value(), 0.25);
        assert_eq!(l1_loss(&mut Eager, &a, &a).unwrap().value(), 0.0);
        let c = Tensor::<f64>::zeros(Dims::new(1, 1, 2, 1));
        assert!(matches!(l1_loss(&mut Eager, &a, &c), Err(Error::Shape { .. })));
    }

    #[test]
    fn psnr_examples() {
        let a = Tensor::from_fn(Dims::new(1, 3, 8, 8), |_, c, y, x| (c + y + x) as f64 / 20.0);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!(psnr(&a, &Tensor::zeros(Dims::new(1, 3, 8, 7))).is_err());
    }

    #[test]
    fn ssim_of_constants_has_closed_form() {
        let d = Dims::new(1, 3, 12, 12);
        let a = Tensor::full(d, 0.5f64);
        let b = Tensor::full(d, 0.25f64);
        let c1 = 1e-4;
        let want = (2.0 * 0.5 * 0.25 + c1) / (0.25 + 0.0625 + c1);
        assert!((ssim_value(&a, &b).unwrap() - want).abs() < 1e-12);
        assert_eq!(ssim_value(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn combined_loss_vectors() {
        let x = Tensor::from_fn(Dims::new(2, 3, 32, 32), |n, c, y, xx| ((n + c * y + xx) % 7) as f64 / 7.0);
        let gp = pyramid::gaussian_pyramid(&x, 5).unwrap();
        let (_, r) = combined_loss(&mut Eager, &gp, &x).unwrap();
        assert_eq!(r.per_level_l1.len(), 5);
        assert_eq!(r.per_level_ssim_loss.len(), 2);
        assert!(r.total.abs() < 1e-12);
    }
}
