//! Procedural piecewise-smooth scenes, used as stand-in "natural" images
//! for synthetic training corpora and diagnostics.
//!
//! A scene is a smooth two-color gradient background overlaid with a few
//! filled ellipses and rotated rectangles, each with its own shading, plus
//! low-amplitude sinusoidal texture. Like photographs, such images are
//! mostly smooth with sparse edges.

use alloc::vec::Vec;

#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::real::Real;
use crate::tensor::{Dims, Tensor};

#[derive(Debug, Clone, Copy)]
enum Shape {
    Ellipse { rx: f64, ry: f64 },
    Rect { hx: f64, hy: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    shape: Shape,
    cx: f64,
    cy: f64,
    cos: f64,
    sin: f64,
    color: [f64; 3],
    /// Linear shading across the shape's own frame.
    shade: (f64, f64),
}

impl Layer {
    /// Shape-frame coordinates of a point, if it lies inside.
    fn local(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        let inside = match self.shape {
            Shape::Ellipse { rx, ry } => (u / rx).powi(2) + (v / ry).powi(2) <= 1.0,
            Shape::Rect { hx, hy } => u.abs() <= hx && v.abs() <= hy,
        };
        inside.then_some((u, v))
    }
}

fn color<R: Rng>(rng: &mut R) -> [f64; 3] {
    [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)]
}

/// A `(1, 3, height, width)` scene with values in `[0, 1]`, fully
/// determined by `seed`.
pub fn generate_scene<T: Real>(height: usize, width: usize, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (height as f64, width as f64);
    let scale = hf.max(wf);

    let top = color(&mut rng);
    let bottom = color(&mut rng);
    let tilt: f64 = rng.gen_range(-0.5..0.5);

    let count = rng.gen_range(4..=9);
    let layers: Vec<Layer> = (0..count)
        .map(|_| {
            let size = scale * rng.gen_range(0.08..0.35);
            let aspect: f64 = rng.gen_range(0.4..1.0);
            let shape = if rng.gen_bool(0.5) {
                Shape::Ellipse { rx: size, ry: size * aspect }
            } else {
                Shape::Rect { hx: size, hy: size * aspect }
            };
            let theta: f64 = rng.gen_range(0.0..core::f64::consts::PI);
            Layer {
                shape,
                cx: rng.gen_range(0.0..wf),
                cy: rng.gen_range(0.0..hf),
                cos: theta.cos(),
                sin: theta.sin(),
                color: color(&mut rng),
                shade: (rng.gen_range(-0.15..0.15) / size, rng.gen_range(-0.15..0.15) / size),
            }
        })
        .collect();

    let waves: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            let theta: f64 = rng.gen_range(0.0..core::f64::consts::TAU);
            let period = scale * rng.gen_range(0.15..0.5);
            let k = core::f64::consts::TAU / period;
            (k * theta.cos(), k * theta.sin(), rng.gen_range(0.0..core::f64::consts::TAU), rng.gen_range(0.01..0.03))
        })
        .collect();

    Tensor::from_fn(Dims::new(1, 3, height, width), |_, c, y, x| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let t = (py / hf + tilt * (px / wf - 0.5)).clamp(0.0, 1.0);
        let mut v = top[c] * (1.0 - t) + bottom[c] * t;
        for l in &layers {
            if let Some((u, w)) = l.local(px, py) {
                v = l.color[c] + l.shade.0 * u + l.shade.1 * w;
            }
        }
        for &(kx, ky, phase, amp) in &waves {
            v += amp * (kx * px + ky * py + phase).sin();
        }
        T::from_f64(v.clamp(0.0, 1.0))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_deterministic_and_in_range() {
        let a: Tensor<f32> = generate_scene(48, 64, 9);
        assert_eq!(a.dims(), Dims::new(1, 3, 48, 64));
        assert_eq!(a, generate_scene(48, 64, 9));
        assert_ne!(a, generate_scene(48, 64, 10));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn scenes_have_contrast() {
        let a: Tensor<f64> = generate_scene(64, 64, 1);
        let m = crate::stats::moments(a.data());
        assert!(m.variance > 1e-3, "{m:?}");
    }
}
