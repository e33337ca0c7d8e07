//! End-to-end training on paired clean/rainy images.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adam::{adam_step, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::loss::{combined_loss, LossReport};
use crate::model::{lpnet_forward, LpNetParams, ParamSlot};
use crate::pyramid;
use crate::real::Real;
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub epochs: usize,
    /// Patch pairs drawn per epoch.
    pub patches_per_epoch: usize,
    /// Hard cap on optimizer steps, if any.
    pub max_steps: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 10,
            patch_size: 80,
            epochs: 3,
            patches_per_epoch: 500,
            max_steps: None,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.patches_per_epoch.div_ceil(self.batch_size.max(1))
    }

    pub fn total_steps(&self) -> usize {
        let n = self.epochs * self.steps_per_epoch();
        self.max_steps.map_or(n, |m| n.min(m))
    }

    pub fn validate(&self, levels: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::contract("train config", "batch_size must be at least 1"));
        }
        let min = pyramid::min_side(levels);
        if self.patch_size < min {
            return Err(Error::contract(
                "train config",
                alloc::format!("patch_size {} is below {min} for a {levels}-level pyramid", self.patch_size),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::contract("train config", "learning_rate must be positive"));
        }
        Ok(())
    }
}

/// One clean/rainy training image pair, each `(1, C, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair<T> {
    pub name: String,
    pub clean: Tensor<T>,
    pub rainy: Tensor<T>,
}

impl<T: Real> ImagePair<T> {
    pub fn new(name: impl Into<String>, clean: Tensor<T>, rainy: Tensor<T>) -> Result<Self> {
        clean.dims().expect_eq(&rainy.dims(), "image pair")?;
        if clean.dims().batch != 1 {
            return Err(Error::contract("image pair", "images must have batch size 1"));
        }
        Ok(ImagePair {
            name: name.into(),
            clean,
            rainy,
        })
    }
}

/// Rejects corpora with missing or undersized images.
pub fn check_corpus<T: Real>(corpus: &[ImagePair<T>], patch: usize) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::contract("corpus", "no image pairs"));
    }
    for p in corpus {
        let d = p.clean.dims();
        if d.height < patch || d.width < patch {
            return Err(Error::contract(
                "corpus",
                alloc::format!(
                    "{} is {}x{}, smaller than the {patch}x{patch} patch",
                    p.name,
                    d.height,
                    d.width
                ),
            ));
        }
    }
    Ok(())
}

/// Draws `batch` patch pairs. For each, an image and a top-left corner are
/// chosen uniformly; clean and rainy crops share both. Returns
/// `(clean, rainy)`.
pub fn sample_patch_batch<T: Real, R: Rng>(
    corpus: &[ImagePair<T>],
    batch: usize,
    patch: usize,
    rng: &mut R,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_corpus(corpus, patch)?;
    let mut clean = Vec::with_capacity(batch);
    let mut rainy = Vec::with_capacity(batch);
    for _ in 0..batch {
        let pair = &corpus[rng.gen_range(0..corpus.len())];
        let d = pair.clean.dims();
        let y = rng.gen_range(0..=d.height - patch);
        let x = rng.gen_range(0..=d.width - patch);
        clean.push(pair.clean.crop(0, y, x, patch, patch)?);
        rainy.push(pair.rainy.crop(0, y, x, patch, patch)?);
    }
    Ok((Tensor::stack(&clean)?, Tensor::stack(&rainy)?))
}

/// Loss and gradients of the objective on one batch.
pub fn loss_and_gradients<T: Real>(
    params: &LpNetParams<T>,
    rainy: &Tensor<T>,
    clean: &Tensor<T>,
) -> Result<(LossReport, Vec<Tensor<T>>)> {
    let mut tape = Tape::new();
    let x = tape.constant(rainy.clone());
    let y = tape.constant(clean.clone());
    let fwd = lpnet_forward(&mut tape, &x, params)?;
    let (loss, report) = combined_loss(&mut tape, &fwd.gaussian, &y)?;
    if !report.is_finite() {
        return Ok((report, Vec::new()));
    }
    let grads = tape.backward(loss)?;
    let ordered = params
        .tensors()
        .map(|(slot, t)| {
            grads
                .get(slot.id())
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.dims()))
        })
        .collect();
    Ok((report, ordered))
}

/// Loss at `step`, evaluated before that step's update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub report: LossReport,
}

/// Optimizer state that advances one batch at a time.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub params: LpNetParams<T>,
    pub state: AdamState<T>,
    cfg: TrainConfig,
    rng: ChaCha8Rng,
}

impl<T: Real> Trainer<T> {
    pub fn new(params: LpNetParams<T>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate(params.config.levels)?;
        let state = AdamState::new(params.tensors().map(|(_, t)| t));
        Ok(Self::resume(params, state, cfg))
    }

    /// Continues from saved optimizer state.
    pub fn resume(params: LpNetParams<T>, state: AdamState<T>, cfg: TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        // keep batch sampling off the initialization stream
        rng.set_stream(1);
        Trainer {
            params,
            state,
            cfg,
            rng,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn steps_done(&self) -> usize {
        self.state.step as usize
    }

    /// Samples a batch, evaluates the loss and applies one Adam update. A
    /// non-finite loss leaves the parameters untouched.
    pub fn step(&mut self, corpus: &[ImagePair<T>]) -> Result<StepRecord> {
        let step = self.steps_done();
        let (clean, rainy) = sample_patch_batch(corpus, self.cfg.batch_size, self.cfg.patch_size, &mut self.rng)?;
        let (report, grads) = loss_and_gradients(&self.params, &rainy, &clean)?;
        if !report.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { step });
        }
        let grad_refs: Vec<&Tensor<T>> = grads.iter().collect();
        let mut param_refs = self.params.tensors_mut();
        adam_step(&mut param_refs, &grad_refs, &mut self.state, &self.cfg.adam())?;
        Ok(StepRecord { step, report })
    }
}

/// Outcome of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: LpNetParams<T>,
    pub state: AdamState<T>,
    pub curve: Vec<StepRecord>,
}

/// Runs `cfg.total_steps()` optimizer steps from `init`.
pub fn train<T: Real>(
    corpus: &[ImagePair<T>],
    init: LpNetParams<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    check_corpus(corpus, cfg.patch_size)?;
    let mut trainer = Trainer::new(init, cfg.clone())?;
    let total = cfg.total_steps();
    let mut curve = Vec::with_capacity(total);
    for _ in 0..total {
        curve.push(trainer.step(corpus)?);
    }
    Ok(TrainOutcome {
        params: trainer.params,
        state: trainer.state,
        curve,
    })
}

/// Name of every trainable tensor in [`ParamSlot`] order.
pub fn tensor_names<T: Real>(params: &LpNetParams<T>) -> Vec<String> {
    params.tensors().map(|(s, _): (ParamSlot, _)| s.name()).collect()
}
