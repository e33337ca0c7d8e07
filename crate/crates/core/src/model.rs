//! The pyramid deraining network.
//!
//! Each pyramid level has its own sub-network:
//!
//! ```text
//! H0 = σ(W0 ∗ x + b0)
//! repeat T times, with W1..W3 shared across repetitions:
//!     F1 = σ(W1 ∗ H + b1)
//!     F2 = σ(W2 ∗ F1 + b2)
//!     F3 = W3 ∗ F2 + b3
//!     H  = σ(F3 + H0)
//! out = (W4 ∗ H + b4) + x
//! ```
//!
//! where σ is a leaky ReLU. The refined Laplacian levels are recombined into
//! a Gaussian pyramid whose finest level is the derained image.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conv::{ConvSpec, Padding};
use crate::error::{Error, Result};
use crate::graph::{Eager, Graph};
use crate::pyramid::{self, Pyramid, PyramidKernel};
use crate::real::Real;
use crate::tape::ParamId;
use crate::tensor::Tensor;

/// Number of convolution layers in a sub-network (W0..W4).
pub const LAYERS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Pyramid depth N.
    pub levels: usize,
    /// Recursive block repetitions T.
    pub recursions: usize,
    /// Feature maps per sub-network, finest level first.
    pub kernel_counts: Vec<usize>,
    /// Side of the feature-extraction kernel W0.
    pub first_kernel: usize,
    /// Side of the reconstruction kernel W4.
    pub recon_kernel: usize,
    pub lrelu_slope: f64,
    pub image_channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            levels: 5,
            recursions: 5,
            kernel_counts: alloc::vec![16, 8, 4, 2, 1],
            first_kernel: 3,
            recon_kernel: 1,
            lrelu_slope: 0.2,
            image_channels: 3,
        }
    }
}

impl ModelConfig {
    /// Default configuration with `k` feature maps on every level.
    pub fn uniform(k: usize) -> Self {
        let d = ModelConfig::default();
        ModelConfig {
            kernel_counts: alloc::vec![k; d.levels],
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Contract { op: "model config", msg });
        if self.levels == 0 {
            return bad("levels must be at least 1".into());
        }
        if self.kernel_counts.len() != self.levels {
            return bad(format!(
                "{} kernel counts given for {} levels",
                self.kernel_counts.len(),
                self.levels
            ));
        }
        if self.kernel_counts.contains(&0) {
            return bad("kernel counts must be at least 1".into());
        }
        for (name, k) in [("first_kernel", self.first_kernel), ("recon_kernel", self.recon_kernel)] {
            if k % 2 == 0 {
                return bad(format!("{name} must be odd, got {k}"));
            }
        }
        if !(0.0..1.0).contains(&self.lrelu_slope) {
            return bad(format!("lrelu_slope must lie in [0, 1), got {}", self.lrelu_slope));
        }
        if self.image_channels == 0 {
            return bad("image_channels must be at least 1".into());
        }
        Ok(())
    }

    /// Geometry of W0..W4 for a sub-network with `k` feature maps.
    pub fn layer_specs(&self, k: usize) -> [ConvSpec; LAYERS] {
        let c = self.image_channels;
        let z = Padding::ZeroSame;
        [
            ConvSpec::new(self.first_kernel, c, k, z),
            ConvSpec::new(3, k, k, z),
            ConvSpec::new(1, k, k, z),
            ConvSpec::new(3, k, k, z),
            ConvSpec::new(self.recon_kernel, k, c, z),
        ]
    }
}

/// Exact number of scalar weights and biases.
pub fn count_parameters(cfg: &ModelConfig) -> usize {
    cfg.kernel_counts
        .iter()
        .map(|&k| cfg.layer_specs(k).iter().map(ConvSpec::param_count).sum::<usize>())
        .sum()
}

/// Weights and biases of one level's sub-network.
#[derive(Debug, Clone, PartialEq)]
pub struct SubNetParams<T> {
    pub weights: [Tensor<T>; LAYERS],
    pub biases: [Tensor<T>; LAYERS],
}

impl<T: Real> SubNetParams<T> {
    pub fn zeros(specs: &[ConvSpec; LAYERS]) -> Self {
        SubNetParams {
            weights: specs.map(|s| Tensor::zeros(s.weight_dims())),
            biases: specs.map(|s| Tensor::zeros(s.bias_dims())),
        }
    }

    /// Feature maps K of this sub-network.
    pub fn kernel_count(&self) -> usize {
        self.weights[0].dims().batch
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Tensor::len).sum()
    }
}

/// Which tensor of the model a [`ParamId`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSlot {
    /// 0-based level.
    pub level: usize,
    pub layer: usize,
    pub is_bias: bool,
}

impl ParamSlot {
    pub fn id(&self) -> ParamId {
        ParamId((self.level * 2 * LAYERS + 2 * self.layer + self.is_bias as usize) as u32)
    }

    pub fn from_id(id: ParamId) -> Self {
        let i = id.0 as usize;
        ParamSlot {
            level: i / (2 * LAYERS),
            layer: (i % (2 * LAYERS)) / 2,
            is_bias: i % 2 == 1,
        }
    }

    /// Stable tensor name, e.g. `level1.w0` or `level5.b4`.
    pub fn name(&self) -> String {
        format!("level{}.{}{}", self.level + 1, if self.is_bias { 'b' } else { 'w' }, self.layer)
    }

    pub fn parse(name: &str) -> Option<Self> {
        let rest = name.strip_prefix("level")?;
        let (lvl, tail) = rest.split_once('.')?;
        let level = lvl.parse::<usize>().ok()?.checked_sub(1)?;
        let mut chars = tail.chars();
        let is_bias = match chars.next()? {
            'w' => false,
            'b' => true,
            _ => return None,
        };
        let layer: usize = chars.as_str().parse().ok()?;
        (layer < LAYERS).then_some(ParamSlot { level, layer, is_bias })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpNetParams<T> {
    pub config: ModelConfig,
    pub subnets: Vec<SubNetParams<T>>,
}

impl<T: Real> LpNetParams<T> {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let subnets = config
            .kernel_counts
            .iter()
            .map(|&k| SubNetParams::zeros(&config.layer_specs(k)))
            .collect();
        Ok(LpNetParams {
            config: config.clone(),
            subnets,
        })
    }

    pub fn param_count(&self) -> usize {
        self.subnets.iter().map(SubNetParams::param_count).sum()
    }

    /// Every tensor in ascending [`ParamId`] order.
    pub fn tensors(&self) -> impl Iterator<Item = (ParamSlot, &Tensor<T>)> {
        self.subnets.iter().enumerate().flat_map(|(level, s)| {
            (0..LAYERS).flat_map(move |layer| {
                [
                    (ParamSlot { level, layer, is_bias: false }, &s.weights[layer]),
                    (ParamSlot { level, layer, is_bias: true }, &s.biases[layer]),
                ]
            })
        })
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::with_capacity(self.subnets.len() * 2 * LAYERS);
        for s in &mut self.subnets {
            for (w, b) in s.weights.iter_mut().zip(s.biases.iter_mut()) {
                out.push(w);
                out.push(b);
            }
        }
        out
    }

    pub fn get(&self, slot: ParamSlot) -> Option<&Tensor<T>> {
        let s = self.subnets.get(slot.level)?;
        let set = if slot.is_bias { &s.biases } else { &s.weights };
        set.get(slot.layer)
    }

    pub fn get_mut(&mut self, slot: ParamSlot) -> Option<&mut Tensor<T>> {
        let s = self.subnets.get_mut(slot.level)?;
        let set = if slot.is_bias { &mut s.biases } else { &mut s.weights };
        set.get_mut(slot.layer)
    }

    /// Converts every tensor to another precision.
    pub fn cast<U: Real>(&self) -> LpNetParams<U> {
        LpNetParams {
            config: self.config.clone(),
            subnets: self
                .subnets
                .iter()
                .map(|s| SubNetParams {
                    weights: s.weights.each_ref().map(Tensor::cast),
                    biases: s.biases.each_ref().map(Tensor::cast),
                })
                .collect(),
        }
    }

    /// All parameters flattened in [`ParamId`] order.
    pub fn flatten(&self) -> Vec<T> {
        self.tensors().flat_map(|(_, t)| t.data().iter().copied()).collect()
    }

    pub fn load_flat(&mut self, values: &[T]) {
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[off..off + n]);
            off += n;
        }
    }
}

/// Fan-balanced uniform weights (±√(6/(fan_in+fan_out))) and zero biases.
pub fn init_params<T: Real>(config: &ModelConfig, seed: u64) -> Result<LpNetParams<T>> {
    let mut params = LpNetParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for sub in &mut params.subnets {
        for w in &mut sub.weights {
            let d = w.dims();
            let area = d.height * d.width;
            let scale = init_scale(d.channels * area, d.batch * area);
            for v in w.data_mut() {
                *v = T::from_f64(rng.gen_range(-scale..scale));
            }
        }
    }
    Ok(params)
}

/// Half-width of the initialization interval.
pub fn init_scale(fan_in: usize, fan_out: usize) -> f64 {
    num_traits::Float::sqrt(6.0 / (fan_in + fan_out) as f64)
}

/// Registers the sub-network of `level` (0-based) on the graph.
pub fn register_subnet<T: Real, G: Graph<T>>(
    g: &mut G,
    level: usize,
    p: &SubNetParams<T>,
) -> ([G::Node; LAYERS], [G::Node; LAYERS]) {
    let w = core::array::from_fn(|layer| {
        g.param(ParamSlot { level, layer, is_bias: false }.id(), &p.weights[layer])
    });
    let b = core::array::from_fn(|layer| {
        g.param(ParamSlot { level, layer, is_bias: true }.id(), &p.biases[layer])
    });
    (w, b)
}

/// Runs one sub-network on a pyramid level with `recursions` applications of
/// the shared block.
pub fn subnet_forward<T: Real, G: Graph<T>>(
    g: &mut G,
    input: &G::Node,
    weights: &[G::Node; LAYERS],
    biases: &[G::Node; LAYERS],
    recursions: usize,
    slope: T,
) -> Result<G::Node> {
    let z = Padding::ZeroSame;
    let x0 = g.conv2d(input, &weights[0], &biases[0], z)?;
    let h0 = g.leaky_relu(&x0, slope);
    let mut h = h0.clone();
    for _ in 0..recursions {
        let a = g.conv2d(&h, &weights[1], &biases[1], z)?;
        let f1 = g.leaky_relu(&a, slope);
        let a = g.conv2d(&f1, &weights[2], &biases[2], z)?;
        let f2 = g.leaky_relu(&a, slope);
        let f3 = g.conv2d(&f2, &weights[3], &biases[3], z)?;
        let s = g.add(&f3, &h0)?;
        h = g.leaky_relu(&s, slope);
    }
    let r = g.conv2d(&h, &weights[4], &biases[4], z)?;
    g.add(&r, input)
}

/// Result of a full forward pass.
#[derive(Debug, Clone)]
pub struct Forward<N> {
    /// Reconstructed clean Gaussian pyramid; level 1 is the derained image.
    pub gaussian: Pyramid<N>,
    /// Sub-network outputs (predicted clean Laplacian pyramid).
    pub laplacian: Pyramid<N>,
}

impl<N> Forward<N> {
    pub fn image(&self) -> &N {
        self.gaussian.finest()
    }
}

/// Checks that an image can be decomposed to the configured depth.
pub fn check_input_size(config: &ModelConfig, height: usize, width: usize) -> Result<()> {
    let min = pyramid::min_side(config.levels);
    if height < min || width < min {
        return Err(Error::TooSmall {
            height,
            width,
            levels: config.levels,
            min_side: min,
        });
    }
    Ok(())
}

pub fn lpnet_forward<T: Real, G: Graph<T>>(
    g: &mut G,
    x: &G::Node,
    params: &LpNetParams<T>,
) -> Result<Forward<G::Node>> {
    let cfg = &params.config;
    let d = g.value(x).dims();
    if d.channels != cfg.image_channels {
        return Err(Error::Shape {
            op: "lpnet_forward",
            axis: "channel",
            expected: cfg.image_channels,
            found: d.channels,
        });
    }
    check_input_size(cfg, d.height, d.width)?;
    let kernel = PyramidKernel::BINOMIAL;
    let (lap_in, _) = pyramid::laplacian_decompose(g, &kernel, x, cfg.levels)?;
    let slope = T::from_f64(cfg.lrelu_slope);
    let mut lap_out = Vec::with_capacity(cfg.levels);
    for (level, (sub, l)) in params.subnets.iter().zip(&lap_in.levels).enumerate() {
        let (w, b) = register_subnet(g, level, sub);
        lap_out.push(subnet_forward(g, l, &w, &b, cfg.recursions, slope)?);
    }
    let lap_out = Pyramid::new(lap_out);
    let gaussian = pyramid::gaussian_reconstruct(g, &kernel, &lap_out, true)?;
    Ok(Forward {
        gaussian,
        laplacian: lap_out,
    })
}

/// Derains a batch of images without recording gradients.
pub fn derain<T: Real>(params: &LpNetParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let mut f = lpnet_forward(&mut Eager, x, params)?;
    Ok(f.gaussian.levels.swap_remove(0))
}
