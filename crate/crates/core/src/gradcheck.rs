//! Central finite-difference verification of analytic gradients.
//!
//! The network is only piecewise smooth: leaky ReLU, `abs` and the
//! reconstruction clamp all have kinks. A probe that straddles a kink
//! measures an average of two slopes, so [`kink_aware_check`] records which
//! side of every kink each evaluation lands on and only trusts differences
//! taken along kink-free segments.

use alloc::vec::Vec;

use crate::conv::Padding;
use crate::error::{Error, Result};
use crate::filter::Axis;
use crate::graph::{Eager, Graph};
use crate::real::Real;
use crate::tape::ParamId;
use crate::tensor::Tensor;

/// Outcome of [`finite_difference_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Worst relative error over all components.
    pub max_rel_error: f64,
    /// Component where it occurred.
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Magnitude below which gradients are compared absolutely. Central
/// differences of an O(1) objective summed over thousands of terms carry
/// round-off near `1e-15 / eps`, so
/// relative comparisons of smaller components only measure noise.
pub const ERROR_FLOOR: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERROR_FLOOR)
}

/// Central-difference estimate `(f(θ + eps·eᵢ) − f(θ − eps·eᵢ)) / 2eps` of
/// every component of the gradient.
pub fn numeric_gradient(theta: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::contract("finite difference", "eps must be positive"));
    }
    let mut probe = theta.to_vec();
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        probe[i] = theta[i] + eps;
        let up = f(&probe);
        probe[i] = theta[i] - eps;
        let down = f(&probe);
        probe[i] = theta[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFiniteProbe { index: i });
        }
        out.push((up - down) / (2.0 * eps));
    }
    Ok(out)
}

/// Compares `analytic` with [`numeric_gradient`] and reports the worst
/// component.
pub fn finite_difference_check(
    theta: &[f64],
    analytic: &[f64],
    eps: f64,
    f: impl FnMut(&[f64]) -> f64,
) -> Result<GradCheck> {
    if theta.len() != analytic.len() {
        return Err(Error::Shape {
            op: "finite_difference_check",
            axis: "parameter",
            expected: theta.len(),
            found: analytic.len(),
        });
    }
    let numeric = numeric_gradient(theta, eps, f)?;
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        index: 0,
        analytic: analytic.first().copied().unwrap_or(0.0),
        numeric: numeric.first().copied().unwrap_or(0.0),
    };
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = relative_error(a, n);
        if err > worst.max_rel_error {
            worst = GradCheck {
                max_rel_error: err,
                index: i,
                analytic: a,
                numeric: n,
            };
        }
    }
    Ok(worst)
}

/// Eager evaluation that also records, for every element entering a
/// leaky ReLU, ReLU or `abs`, whether it was nonnegative.
#[derive(Debug, Default, Clone)]
pub struct BranchRecorder {
    pub pattern: Vec<bool>,
}

impl BranchRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    fn record<T: Real>(&mut self, x: &Tensor<T>) {
        self.pattern.extend(x.data().iter().map(|&v| v >= T::zero()));
    }
}

impl<T: Real> Graph<T> for BranchRecorder {
    type Node = Tensor<T>;

    fn constant(&mut self, value: Tensor<T>) -> Tensor<T> {
        value
    }

    fn param(&mut self, id: ParamId, value: &Tensor<T>) -> Tensor<T> {
        Eager.param(id, value)
    }

    fn value<'a>(&'a self, node: &'a Tensor<T>) -> &'a Tensor<T> {
        node
    }

    fn conv2d(&mut self, x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, padding: Padding) -> Result<Tensor<T>> {
        Eager.conv2d(x, w, b, padding)
    }

    fn leaky_relu(&mut self, x: &Tensor<T>, slope: T) -> Tensor<T> {
        self.record(x);
        Eager.leaky_relu(x, slope)
    }

    fn relu(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.record(x);
        Graph::<T>::relu(&mut Eager, x)
    }

    fn add(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        Eager.add(a, b)
    }

    fn sub(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        Eager.sub(a, b)
    }

    fn mul(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        Eager.mul(a, b)
    }

    fn div(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        Eager.div(a, b)
    }

    fn affine(&mut self, x: &Tensor<T>, scale: T, shift: T) -> Tensor<T> {
        Eager.affine(x, scale, shift)
    }

    fn abs(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.record(x);
        Graph::<T>::abs(&mut Eager, x)
    }

    fn mean(&mut self, x: &Tensor<T>) -> Tensor<T> {
        Graph::<T>::mean(&mut Eager, x)
    }

    fn filter_axis(&mut self, x: &Tensor<T>, axis: Axis, taps: &[T]) -> Tensor<T> {
        Eager.filter_axis(x, axis, taps)
    }

    fn decimate(&mut self, x: &Tensor<T>) -> Tensor<T> {
        Graph::<T>::decimate(&mut Eager, x)
    }

    fn zero_insert(&mut self, x: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
        Eager.zero_insert(x, height, width)
    }
}

/// How a component's numeric derivative was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    /// Central difference at the requested step; no kink crossed.
    Central,
    /// Second-order one-sided difference on the kink-free side.
    OneSided,
    /// Central difference at a reduced step.
    Reduced,
    /// A kink lies within the smallest step of the point itself.
    AtKink,
}

/// Outcome of [`kink_aware_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct KinkAwareCheck {
    /// Worst component over those not [`Probe::AtKink`].
    pub worst: GradCheck,
    pub central: usize,
    pub one_sided: usize,
    pub reduced: usize,
    /// Components with a kink closer than the smallest step.
    pub at_kink: Vec<usize>,
}

impl KinkAwareCheck {
    pub fn checked(&self) -> usize {
        self.central + self.one_sided + self.reduced
    }
}

/// Step reductions tried before a component is declared at a kink.
const REDUCTIONS: usize = 3;

/// Finite-difference check of a piecewise-smooth objective.
///
/// `f` returns the objective and the branch pattern of its evaluation
/// (see [`BranchRecorder`]). For each component the central difference at
/// `eps` is used when both probes share the base pattern. Otherwise a
/// second-order one-sided difference `(∓3f(θ) ± 4f(θ±h) ∓ f(θ±2h)) / 2h` is
/// taken on a kink-free side, and failing that the step is divided by ten
/// and the procedure repeated.
pub fn kink_aware_check(
    theta: &[f64],
    analytic: &[f64],
    eps: f64,
    mut f: impl FnMut(&[f64]) -> (f64, Vec<bool>),
) -> Result<KinkAwareCheck> {
    if !(eps > 0.0) {
        return Err(Error::contract("kink_aware_check", "eps must be positive"));
    }
    if theta.len() != analytic.len() {
        return Err(Error::Shape {
            op: "kink_aware_check",
            axis: "parameter",
            expected: theta.len(),
            found: analytic.len(),
        });
    }
    let (f0, base) = f(theta);
    if !f0.is_finite() {
        return Err(Error::contract("kink_aware_check", "objective is not finite at the base point"));
    }
    let mut out = KinkAwareCheck {
        worst: GradCheck {
            max_rel_error: 0.0,
            index: 0,
            analytic: 0.0,
            numeric: 0.0,
        },
        central: 0,
        one_sided: 0,
        reduced: 0,
        at_kink: Vec::new(),
    };
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        let mut eval = |delta: f64| -> Result<(f64, bool)> {
            probe[i] = theta[i] + delta;
            let (v, pattern) = f(&probe);
            probe[i] = theta[i];
            if !v.is_finite() {
                return Err(Error::NonFiniteProbe { index: i });
            }
            Ok((v, pattern == base))
        };
        let mut found = None;
        let mut h = eps;
        for round in 0..=REDUCTIONS {
            let (up, up_ok) = eval(h)?;
            let (down, down_ok) = eval(-h)?;
            if up_ok && down_ok {
                let kind = if round == 0 { Probe::Central } else { Probe::Reduced };
                found = Some(((up - down) / (2.0 * h), kind));
                break;
            }
            if up_ok {
                let (up2, ok) = eval(2.0 * h)?;
                if ok {
                    found = Some(((-3.0 * f0 + 4.0 * up - up2) / (2.0 * h), Probe::OneSided));
                    break;
                }
            }
            if down_ok {
                let (down2, ok) = eval(-2.0 * h)?;
                if ok {
                    found = Some(((3.0 * f0 - 4.0 * down + down2) / (2.0 * h), Probe::OneSided));
                    break;
                }
            }
            h /= 10.0;
        }
        let Some((numeric, kind)) = found else {
            out.at_kink.push(i);
            continue;
        };
        match kind {
            Probe::Central => out.central += 1,
            Probe::OneSided => out.one_sided += 1,
            Probe::Reduced => out.reduced += 1,
            Probe::AtKink => unreachable!("not produced by the search"),
        }
        let err = relative_error(analytic[i], numeric);
        if err > out.worst.max_rel_error || out.checked() == 1 {
            out.worst = GradCheck {
                max_rel_error: err,
                index: i,
                analytic: analytic[i],
                numeric,
            };
        }
    }
    Ok(out)
}
