//! Bias-corrected Adam.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let m: Vec<Tensor<T>> = params.into_iter().map(|p| Tensor::zeros(p.dims())).collect();
        AdamState {
            v: m.clone(),
            m,
            step: 0,
        }
    }
}

/// Applies one update to every parameter in place.
pub fn adam_step<T: Real>(
    params: &mut [&mut Tensor<T>],
    grads: &[&Tensor<T>],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    let n = params.len();
    for (what, len) in [("gradient", grads.len()), ("first moment", state.m.len()), ("second moment", state.v.len())] {
        if len != n {
            return Err(Error::contract(
                "adam_step",
                alloc::format!("{len} {what} tensors for {n} parameters"),
            ));
        }
    }
    for i in 0..n {
        let d = params[i].dims();
        d.expect_eq(&grads[i].dims(), "adam_step gradient")?;
        d.expect_eq(&state.m[i].dims(), "adam_step first moment")?;
        d.expect_eq(&state.v[i].dims(), "adam_step second moment")?;
    }

    state.step += 1;
    let t = state.step as i32;
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let one = T::one();
    let corr1 = T::from_f64(1.0 - num_traits::Float::powi(cfg.beta1, t));
    let corr2 = T::from_f64(1.0 - num_traits::Float::powi(cfg.beta2, t));
    let lr = T::from_f64(cfg.learning_rate);
    let eps = T::from_f64(cfg.epsilon);

    for i in 0..n {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params[i].data_mut();
        for j in 0..p.len() {
            m[j] = b1 * m[j] + (one - b1) * g[j];
            v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
            let m_hat = m[j] / corr1;
            let v_hat = v[j] / corr2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims;

    fn run(p: &mut Tensor<f64>, g: &Tensor<f64>, s: &mut AdamState<f64>) {
        adam_step(&mut [p], &[g], s, &AdamConfig::default()).unwrap();
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let d = Dims::new(1, 2, 3, 3);
        let mut p = Tensor::full(d, 0.3);
        let before = p.clone();
        let mut s = AdamState::new([&p]);
        run(&mut p, &Tensor::zeros(d), &mut s);
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let d = Dims::new(1, 1, 2, 2);
        let mut p = Tensor::zeros(d);
        let mut s = AdamState::new([&p]);
        run(&mut p, &Tensor::full(d, -4.0), &mut s);
        for &v in p.data() {
            assert!((v - 1e-3).abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut p = Tensor::<f32>::zeros(Dims::new(1, 1, 2, 2));
        let g = Tensor::zeros(Dims::new(1, 1, 2, 3));
        let mut s = AdamState::new([&p]);
        assert!(adam_step(&mut [&mut p], &[&g], &mut s, &AdamConfig::default()).is_err());
        assert!(adam_step(&mut [&mut p], &[], &mut s, &AdamConfig::default()).is_err());
        assert_eq!(s.step, 0);
    }
}
