//! Plain-text `key = value` run configuration.
//!
//! Settings are applied in order: built-in defaults, then the config file,
//! then command-line flags. Unknown keys are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lpnet_core::model::ModelConfig;
use lpnet_core::rain::RainParams;
use lpnet_core::train::TrainConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err("expected f32 or f64".into()),
        }
    }
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub precision: Precision,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub rain: RainParams,
    /// Save a checkpoint every this many steps; 0 saves only at the end.
    pub checkpoint_every: usize,
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub loss_csv: Option<PathBuf>,
    pub clean_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            precision: Precision::F32,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            rain: RainParams::default(),
            checkpoint_every: 0,
            corpus: None,
            checkpoint: None,
            init: None,
            loss_csv: None,
            clean_dir: None,
            out_dir: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: ToString,
{
    value.parse().map_err(|e: T::Err| CliError::BadValue {
        key: key.into(),
        value: value.into(),
        msg: e.to_string(),
    })
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let path = || (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "seed" => {
                self.seed = parse(key, v)?;
                self.train.seed = self.seed;
            }
            "precision" => self.precision = parse(key, v)?,
            "levels" => self.model.levels = parse(key, v)?,
            "recursions" => self.model.recursions = parse(key, v)?,
            "kernel_counts" => self.model.kernel_counts = parse_list(key, v)?,
            "first_kernel" => self.model.first_kernel = parse(key, v)?,
            "recon_kernel" => self.model.recon_kernel = parse(key, v)?,
            "lrelu_slope" => self.model.lrelu_slope = parse(key, v)?,
            "learning_rate" => self.train.learning_rate = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "patch_size" => self.train.patch_size = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "patches_per_epoch" => self.train.patches_per_epoch = parse(key, v)?,
            "max_steps" => self.train.max_steps = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "beta1" => self.train.beta1 = parse(key, v)?,
            "beta2" => self.train.beta2 = parse(key, v)?,
            "epsilon" => self.train.epsilon = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "density" => self.rain.density = parse(key, v)?,
            "angle_deg" => self.rain.angle_deg = parse(key, v)?,
            "angle_jitter_deg" => self.rain.angle_jitter_deg = parse(key, v)?,
            "length" => self.rain.length = parse(key, v)?,
            "length_jitter" => self.rain.length_jitter = parse(key, v)?,
            "width" => self.rain.width = parse(key, v)?,
            "intensity" => self.rain.intensity = parse(key, v)?,
            "blur_sigma" => self.rain.blur_sigma = parse(key, v)?,
            "corpus" => self.corpus = path(),
            "checkpoint" => self.checkpoint = path(),
            "init" => self.init = path(),
            "loss_csv" => self.loss_csv = path(),
            "clean_dir" => self.clean_dir = path(),
            "out_dir" => self.out_dir = path(),
            _ => return Err(CliError::UnknownKey { key: key.into() }),
        }
        Ok(())
    }

    /// Applies the settings in `text`. Blank lines and `#` comments are
    /// ignored.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected `key = value`, found `{line}`"),
                });
            };
            self.set(key.trim(), value).map_err(|e| match e {
                CliError::UnknownKey { key } => CliError::Config {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    msg: format!("unknown config key `{key}`"),
                },
                other => CliError::Config {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    msg: other.to_string(),
                },
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// Checks the model, training and rain settings.
    pub fn validate(&self) -> Result<()> {
        let usage = |e: lpnet_core::Error| CliError::Usage(e.to_string());
        self.model.validate().map_err(usage)?;
        self.train.validate(self.model.levels).map_err(usage)?;
        self.rain.validate().map_err(usage)
    }

    /// Every setting as `key = value` lines, readable by [`apply_text`].
    ///
    /// [`apply_text`]: RunConfig::apply_text
    pub fn render(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let r = &self.rain;
        let counts: Vec<String> = m.kernel_counts.iter().map(usize::to_string).collect();
        let rows: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("precision", self.precision.name().into()),
            ("levels", m.levels.to_string()),
            ("recursions", m.recursions.to_string()),
            ("kernel_counts", counts.join(",")),
            ("first_kernel", m.first_kernel.to_string()),
            ("recon_kernel", m.recon_kernel.to_string()),
            ("lrelu_slope", m.lrelu_slope.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("patch_size", t.patch_size.to_string()),
            ("epochs", t.epochs.to_string()),
            ("patches_per_epoch", t.patches_per_epoch.to_string()),
            ("max_steps", t.max_steps.map(|s| s.to_string()).unwrap_or_default()),
            ("beta1", t.beta1.to_string()),
            ("beta2", t.beta2.to_string()),
            ("epsilon", t.epsilon.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("density", r.density.to_string()),
            ("angle_deg", r.angle_deg.to_string()),
            ("angle_jitter_deg", r.angle_jitter_deg.to_string()),
            ("length", r.length.to_string()),
            ("length_jitter", r.length_jitter.to_string()),
            ("width", r.width.to_string()),
            ("intensity", r.intensity.to_string()),
            ("blur_sigma", r.blur_sigma.to_string()),
            ("corpus", show_path(&self.corpus)),
            ("checkpoint", show_path(&self.checkpoint)),
            ("init", show_path(&self.init)),
            ("loss_csv", show_path(&self.loss_csv)),
            ("clean_dir", show_path(&self.clean_dir)),
            ("out_dir", show_path(&self.out_dir)),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Rain settings as stored next to a generated corpus.
pub fn render_rain(p: &RainParams) -> String {
    format!(
        "density = {}\nangle_deg = {}\nangle_jitter_deg = {}\nlength = {}\nlength_jitter = {}\n\
         width = {}\nintensity = {}\nblur_sigma = {}\nseed = {}\n",
        p.density, p.angle_deg, p.angle_jitter_deg, p.length, p.length_jitter, p.width, p.intensity, p.blur_sigma, p.seed
    )
}

/// Reads a file written by [`render_rain`].
pub fn parse_rain(text: &str, origin: &Path) -> Result<RainParams> {
    let mut cfg = RunConfig::default();
    cfg.apply_text(text, origin)?;
    Ok(RainParams { seed: cfg.seed, ..cfg.rain })
}
