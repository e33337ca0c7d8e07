//! The `lpnet` command line.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lpnet_core::adam::AdamState;
use lpnet_core::loss::{psnr, ssim_value};
use lpnet_core::model::{derain, init_params, LpNetParams};
use lpnet_core::pyramid::{laplacian_decompose, PyramidKernel};
use lpnet_core::scene::generate_scene;
use lpnet_core::stats::{moments, Histogram};
use lpnet_core::train::{check_corpus, StepRecord, Trainer};
use lpnet_core::{Eager, Real, Tensor};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::{Precision, RunConfig};
use crate::corpus::{build_corpus, image_seed, pair_by_stem, PairedCorpus};
use crate::error::{CliError, Result};
use crate::image_io::{list_pngs, load_image, save_image, stem};

/// Bins of every histogram written by `inspect`.
pub const HISTOGRAM_BINS: usize = 256;
/// Value range covered by the `inspect` histograms.
pub const HISTOGRAM_RANGE: (f64, f64) = (-1.0, 1.0);

#[derive(Debug, Parser)]
#[command(name = "lpnet", version, about = "Train and run the Laplacian pyramid deraining network")]
pub struct Cli {
    /// Settings file of `key = value` lines; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for initialization, patch sampling, rain and scenes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Floating-point type used for all arithmetic.
    #[arg(long, global = true, value_enum)]
    pub precision: Option<Precision>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add synthetic rain to a directory of clean PNGs.
    Synth(SynthArgs),
    /// Train a model on a paired corpus.
    Train(TrainArgs),
    /// Derain one PNG or every PNG in a directory.
    Derain(DerainArgs),
    /// PSNR and SSIM between same-named PNGs of two directories.
    Eval(EvalArgs),
    /// Write the pyramid levels of an image with histograms and statistics.
    Inspect(InspectArgs),
    /// Write procedurally generated clean scenes.
    Scenes(ScenesArgs),
}

#[derive(Debug, Args)]
pub struct RainArgs {
    /// Streaks per megapixel.
    #[arg(long)]
    pub density: Option<f64>,
    /// Mean streak angle from vertical, in degrees.
    #[arg(long)]
    pub angle: Option<f64>,
    #[arg(long)]
    pub angle_jitter: Option<f64>,
    #[arg(long)]
    pub length: Option<f64>,
    #[arg(long)]
    pub length_jitter: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    /// Brightness added by a fully covered pixel, in [0, 1].
    #[arg(long)]
    pub intensity: Option<f64>,
    #[arg(long)]
    pub blur: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    pub clean_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub rain: RainArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus root holding `clean/` and `rainy/`.
    pub corpus: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Loss curve CSV; defaults to the checkpoint path with a `.csv` extension.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patches_per_epoch: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Comma-separated feature maps per level, finest first.
    #[arg(long)]
    pub kernel_counts: Option<String>,
    #[arg(long)]
    pub recursions: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DerainArgs {
    pub checkpoint: PathBuf,
    /// A PNG file or a directory of them.
    pub input: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Restored or rainy images.
    pub dir_a: PathBuf,
    /// Reference images.
    pub dir_b: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub image: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScenesArgs {
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    /// Index of the first scene, so sets drawn with one seed can be split.
    #[arg(long, default_value_t = 0)]
    pub first: usize,
}

fn push<V: Display>(out: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<V>) {
    if let Some(v) = v {
        out.push((key, v.to_string()));
    }
}

fn push_path(out: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<PathBuf>) {
    push(out, key, &v.as_ref().map(|p| p.display()));
}

impl RainArgs {
    fn overrides(&self, out: &mut Vec<(&'static str, String)>) {
        push(out, "density", &self.density);
        push(out, "angle_deg", &self.angle);
        push(out, "angle_jitter_deg", &self.angle_jitter);
        push(out, "length", &self.length);
        push(out, "length_jitter", &self.length_jitter);
        push(out, "width", &self.width);
        push(out, "intensity", &self.intensity);
        push(out, "blur_sigma", &self.blur);
    }
}

impl Command {
    /// Flags that map onto config keys.
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        match self {
            Command::Synth(a) => {
                push_path(&mut out, "clean_dir", &a.clean_dir);
                push_path(&mut out, "out_dir", &a.out_dir);
                a.rain.overrides(&mut out);
            }
            Command::Train(a) => {
                push_path(&mut out, "corpus", &a.corpus);
                push_path(&mut out, "checkpoint", &a.out);
                push_path(&mut out, "loss_csv", &a.loss_csv);
                push_path(&mut out, "init", &a.init);
                push(&mut out, "epochs", &a.epochs);
                push(&mut out, "patches_per_epoch", &a.patches_per_epoch);
                push(&mut out, "max_steps", &a.max_steps);
                push(&mut out, "batch_size", &a.batch_size);
                push(&mut out, "patch_size", &a.patch_size);
                push(&mut out, "learning_rate", &a.learning_rate);
                push(&mut out, "checkpoint_every", &a.checkpoint_every);
                push(&mut out, "kernel_counts", &a.kernel_counts);
                push(&mut out, "recursions", &a.recursions);
            }
            Command::Derain(_) | Command::Eval(_) | Command::Inspect(_) | Command::Scenes(_) => {}
        }
        out
    }
}

/// Defaults, then the config file, then flags.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(p) = cli.precision {
        cfg.precision = p;
    }
    for (key, value) in cli.command.overrides() {
        cfg.set(key, &value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli)?;
    eprintln!("effective config:");
    for line in cfg.render().lines() {
        eprintln!("  {line}");
    }
    match (&cli.command, cfg.precision) {
        (Command::Synth(_), _) => cmd_synth(&cfg),
        (Command::Train(_), Precision::F32) => cmd_train::<f32>(&cfg),
        (Command::Train(_), Precision::F64) => cmd_train::<f64>(&cfg),
        (Command::Derain(a), Precision::F32) => cmd_derain::<f32>(a),
        (Command::Derain(a), Precision::F64) => cmd_derain::<f64>(a),
        (Command::Eval(a), Precision::F32) => cmd_eval::<f32>(a),
        (Command::Eval(a), Precision::F64) => cmd_eval::<f64>(a),
        (Command::Inspect(a), Precision::F32) => cmd_inspect::<f32>(&cfg, a),
        (Command::Inspect(a), Precision::F64) => cmd_inspect::<f64>(&cfg, a),
        (Command::Scenes(a), _) => cmd_scenes(&cfg, a),
    }
}

fn required<'a>(v: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    v.as_deref().ok_or_else(|| CliError::Usage(format!("missing {what}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn load_ckpt(path: &Path) -> Result<Checkpoint> {
    load_checkpoint(path).map_err(|source| CliError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

fn save_ckpt<T: Real>(path: &Path, params: &LpNetParams<T>, state: &AdamState<T>) -> Result<()> {
    let state = AdamState {
        m: state.m.iter().map(Tensor::cast).collect(),
        v: state.v.iter().map(Tensor::cast).collect(),
        step: state.step,
    };
    save_checkpoint(path, &params.cast(), Some(&state)).map_err(|source| CliError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.2}")
    }
}

fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let clean_dir = required(&cfg.clean_dir, "clean image directory")?;
    let out_dir = required(&cfg.out_dir, "output directory")?;
    let rain = lpnet_core::rain::RainParams { seed: cfg.seed, ..cfg.rain };
    let summary = build_corpus(clean_dir, out_dir, &rain)?;
    println!(
        "synthesized {} pairs in {}, mean PSNR(rainy, clean) {} dB",
        summary.corpus.len(),
        out_dir.display(),
        fmt_db(summary.mean_psnr)
    );
    Ok(())
}

fn csv_header(levels: usize, ssim_levels: usize) -> String {
    let mut cols = vec!["step".to_string(), "total".to_string()];
    cols.extend((1..=levels).map(|n| format!("l1_{n}")));
    cols.extend((1..=ssim_levels).map(|n| format!("ssim_{n}")));
    cols.join(",")
}

fn csv_row(r: &StepRecord) -> String {
    let mut cols = vec![r.step.to_string(), r.report.total.to_string()];
    cols.extend(r.report.per_level_l1.iter().map(f64::to_string));
    cols.extend(r.report.per_level_ssim_loss.iter().map(f64::to_string));
    cols.join(",")
}

fn cmd_train<T: Real>(cfg: &RunConfig) -> Result<()> {
    let corpus_dir = required(&cfg.corpus, "corpus directory")?;
    let ckpt_path = required(&cfg.checkpoint, "output checkpoint (--out)")?;
    let csv_path = cfg.loss_csv.clone().unwrap_or_else(|| ckpt_path.with_extension("csv"));

    let corpus = PairedCorpus::open(corpus_dir)?.load::<T>()?;
    check_corpus(&corpus, cfg.train.patch_size)?;

    let mut trainer = match &cfg.init {
        Some(path) => {
            let ck = load_ckpt(path)?;
            if ck.params.config != cfg.model {
                eprintln!("note: using the model geometry stored in {}", path.display());
            }
            let params = ck.params.cast::<T>();
            match ck.adam {
                Some(s) => {
                    cfg.train.validate(params.config.levels)?;
                    let state = AdamState {
                        m: s.m.iter().map(Tensor::cast).collect(),
                        v: s.v.iter().map(Tensor::cast).collect(),
                        step: s.step,
                    };
                    Trainer::resume(params, state, cfg.train.clone())
                }
                None => Trainer::new(params, cfg.train.clone())?,
            }
        }
        None => Trainer::new(init_params::<T>(&cfg.model, cfg.seed)?, cfg.train.clone())?,
    };
    println!("parameters: {}", trainer.params.param_count());

    let file = File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    let mut csv = BufWriter::new(file);
    let io_err = |e| CliError::io(&csv_path, e);
    writeln!(csv, "{}", csv_header(trainer.params.config.levels, lpnet_core::loss::SSIM_LEVELS)).map_err(io_err)?;

    let total = cfg.train.total_steps();
    let per_epoch = cfg.train.steps_per_epoch().max(1);
    let mut last = None;
    for k in 0..total {
        let rec = match trainer.step(&corpus) {
            Ok(rec) => rec,
            Err(e) => {
                csv.flush().map_err(io_err)?;
                return Err(e.into());
            }
        };
        writeln!(csv, "{}", csv_row(&rec)).map_err(io_err)?;
        let done = k + 1;
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < total {
            save_ckpt(ckpt_path, &trainer.params, &trainer.state)?;
        }
        if done % per_epoch == 0 || done == total {
            eprintln!("step {done}/{total}  loss {:.6}", rec.report.total);
        }
        last = Some(rec.report.total);
    }
    csv.flush().map_err(io_err)?;
    save_ckpt(ckpt_path, &trainer.params, &trainer.state)?;
    match last {
        Some(loss) => println!("trained {total} steps, final loss {loss:.6}"),
        None => println!("trained 0 steps"),
    }
    Ok(())
}

fn derain_file<T: Real>(params: &LpNetParams<T>, src: &Path, dst: &Path) -> Result<()> {
    let x = load_image::<T>(src)?;
    let y = derain(params, &x).map_err(|e| CliError::Image {
        path: src.to_path_buf(),
        msg: e.to_string(),
    })?;
    save_image(&y, dst)
}

fn cmd_derain<T: Real>(a: &DerainArgs) -> Result<()> {
    let params = load_ckpt(&a.checkpoint)?.params.cast::<T>();
    let inputs = if a.input.is_dir() {
        list_pngs(&a.input)?
    } else {
        vec![a.input.clone()]
    };
    if inputs.is_empty() {
        return Err(CliError::Data(format!("{}: no PNG images", a.input.display())));
    }
    create_dir(&a.out_dir)?;
    let out_dir = a.out_dir.canonicalize().map_err(|e| CliError::io(&a.out_dir, e))?;
    let mut failed = 0;
    for src in &inputs {
        let name = src.file_name().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out.png"));
        let dst = out_dir.join(&name);
        let same = src.canonicalize().is_ok_and(|s| s == dst);
        let result = if same {
            Err(CliError::Usage(format!("{}: refusing to overwrite an input", src.display())))
        } else {
            derain_file(&params, src, &dst)
        };
        if let Err(e) = result {
            eprintln!("error: {e}");
            failed += 1;
        }
    }
    println!("derained {} of {} images into {}", inputs.len() - failed, inputs.len(), a.out_dir.display());
    if failed > 0 {
        return Err(CliError::Partial {
            failed,
            total: inputs.len(),
        });
    }
    Ok(())
}

/// PSNR and SSIM of one pair.
pub fn score_pair<T: Real>(a: &Path, b: &Path) -> Result<(f64, f64)> {
    let x = load_image::<T>(a)?;
    let y = load_image::<T>(b)?;
    let wrap = |e: lpnet_core::Error| CliError::Image {
        path: a.to_path_buf(),
        msg: e.to_string(),
    };
    Ok((psnr(&x, &y).map_err(wrap)?, ssim_value(&x, &y).map_err(wrap)?))
}

fn cmd_eval<T: Real>(a: &EvalArgs) -> Result<()> {
    let pairing = pair_by_stem(&a.dir_a, &a.dir_b)?;
    for p in &pairing.unpaired {
        eprintln!("unpaired: {}", p.display());
    }
    println!("image,psnr,ssim");
    let (mut psnr_sum, mut ssim_sum, mut scored, mut failed) = (0.0, 0.0, 0usize, 0usize);
    for e in &pairing.pairs {
        match score_pair::<T>(&e.clean, &e.rainy) {
            Ok((p, s)) => {
                println!("{},{},{s:.2}", e.stem, fmt_db(p));
                psnr_sum += p;
                ssim_sum += s;
                scored += 1;
            }
            Err(err) => {
                eprintln!("error: {err}");
                failed += 1;
            }
        }
    }
    if scored > 0 {
        println!("mean,{},{:.2}", fmt_db(psnr_sum / scored as f64), ssim_sum / scored as f64);
    }
    if scored == 0 {
        return Err(CliError::Data("no image pairs to evaluate".into()));
    }
    if !pairing.unpaired.is_empty() || failed > 0 {
        return Err(CliError::Data(format!(
            "{} unpaired and {failed} unreadable files excluded",
            pairing.unpaired.len()
        )));
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin,lo,hi,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        out.push_str(&format!("{i},{},{},{c}\n", h.edge(i), h.edge(i + 1)));
    }
    out
}

/// Affine map of `t` onto `[0, 1]`, with the `(lo, hi)` it used. A constant
/// tensor maps to mid-gray.
fn rescale<T: Real>(t: &Tensor<T>) -> (Tensor<T>, f64, f64) {
    let lo = t.data().iter().fold(f64::INFINITY, |a, v| a.min(v.as_f64()));
    let hi = t.data().iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.as_f64()));
    let span = hi - lo;
    let view = t.map(|v| {
        if span > 0.0 {
            T::from_f64((v.as_f64() - lo) / span)
        } else {
            T::from_f64(0.5)
        }
    });
    (view, lo, hi)
}

fn cmd_inspect<T: Real>(cfg: &RunConfig, a: &InspectArgs) -> Result<()> {
    let x = load_image::<T>(&a.image)?;
    let levels = cfg.model.levels;
    let (lap, gauss) = laplacian_decompose(&mut Eager, &PyramidKernel::BINOMIAL, &x, levels)?;
    create_dir(&a.out_dir)?;
    let (lo, hi) = HISTOGRAM_RANGE;

    let mut scales = String::from("image,lo,hi\n");
    for (kind, pyr) in [("lap", &lap), ("gauss", &gauss)] {
        for (n, level) in pyr.levels.iter().enumerate() {
            let name = format!("{kind}_{}", n + 1);
            let (view, vlo, vhi) = rescale(level);
            save_image(&view, &a.out_dir.join(format!("{name}.png")))?;
            scales.push_str(&format!("{name},{vlo},{vhi}\n"));
        }
    }
    write_text(&a.out_dir.join("scales.csv"), &scales)?;

    let mut stats = String::from("signal,count,mean,variance,excess_kurtosis\n");
    let signals = std::iter::once(("image".to_string(), &x))
        .chain(lap.levels.iter().enumerate().map(|(n, l)| (format!("lap_{}", n + 1), l)));
    for (name, t) in signals {
        let h = Histogram::new(t.data(), HISTOGRAM_BINS, lo, hi);
        write_text(&a.out_dir.join(format!("hist_{name}.csv")), &histogram_csv(&h))?;
        let m = moments(t.data());
        stats.push_str(&format!("{name},{},{},{},{}\n", m.count, m.mean, m.variance, m.excess_kurtosis));
    }
    write_text(&a.out_dir.join("stats.csv"), &stats)?;

    let base = moments(x.data()).excess_kurtosis;
    let first = moments(lap.levels[0].data()).excess_kurtosis;
    println!(
        "{}: excess kurtosis image {base:.3}, laplacian level 1 {first:.3}",
        stem(&a.image)
    );
    Ok(())
}

fn cmd_scenes(cfg: &RunConfig, a: &ScenesArgs) -> Result<()> {
    create_dir(&a.out_dir)?;
    for i in a.first..a.first + a.count {
        let img: Tensor<f64> = generate_scene(a.height, a.width, image_seed(cfg.seed, i));
        save_image(&img, &a.out_dir.join(format!("scene_{i:04}.png")))?;
    }
    println!("wrote {} scenes to {}", a.count, a.out_dir.display());
    Ok(())
}
