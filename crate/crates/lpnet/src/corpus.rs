//! Paired clean/rainy corpora on disk.
//!
//! ```text
//! <root>/clean/<stem>.png
//! <root>/rainy/<stem>.png
//! <root>/rain.txt          rain settings used to generate the set
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lpnet_core::loss::psnr;
use lpnet_core::rain::{synthesize_rain, RainParams};
use lpnet_core::train::ImagePair;
use lpnet_core::Real;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::render_rain;
use crate::error::{CliError, Result};
use crate::image_io::{list_pngs, load_image, save_image, stem};

pub const RAIN_FILE: &str = "rain.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairEntry {
    pub stem: String,
    pub clean: PathBuf,
    pub rainy: PathBuf,
}

/// Files of two directories matched by stem.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pairing {
    pub pairs: Vec<PairEntry>,
    /// Files with no partner in the other directory.
    pub unpaired: Vec<PathBuf>,
}

pub fn pair_by_stem(a_dir: &Path, b_dir: &Path) -> Result<Pairing> {
    let mut a: BTreeMap<String, PathBuf> = list_pngs(a_dir)?.into_iter().map(|p| (stem(&p), p)).collect();
    let mut out = Pairing::default();
    for b in list_pngs(b_dir)? {
        match a.remove(&stem(&b)) {
            Some(clean) => out.pairs.push(PairEntry {
                stem: stem(&b),
                clean,
                rainy: b,
            }),
            None => out.unpaired.push(b),
        }
    }
    out.unpaired.extend(a.into_values());
    out.pairs.sort_by(|x, y| x.stem.cmp(&y.stem));
    out.unpaired.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedCorpus {
    pub root: PathBuf,
    pub entries: Vec<PairEntry>,
}

impl PairedCorpus {
    /// Indexes `<root>/clean` and `<root>/rainy`. Every file must have a
    /// partner and at least one pair must exist.
    pub fn open(root: &Path) -> Result<Self> {
        let pairing = pair_by_stem(&root.join("clean"), &root.join("rainy"))?;
        if let Some(p) = pairing.unpaired.first() {
            return Err(CliError::Data(format!(
                "{}: no partner in the other directory ({} unpaired files)",
                p.display(),
                pairing.unpaired.len()
            )));
        }
        if pairing.pairs.is_empty() {
            return Err(CliError::Data(format!("{}: corpus has no image pairs", root.display())));
        }
        Ok(PairedCorpus {
            root: root.to_path_buf(),
            entries: pairing.pairs,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Loads every pair, checking that partners share dimensions.
    pub fn load<T: Real>(&self) -> Result<Vec<ImagePair<T>>> {
        self.entries
            .iter()
            .map(|e| {
                let clean = load_image(&e.clean)?;
                let rainy = load_image(&e.rainy)?;
                ImagePair::new(e.stem.clone(), clean, rainy).map_err(|err| CliError::Image {
                    path: e.rainy.clone(),
                    msg: err.to_string(),
                })
            })
            .collect()
    }
}

/// Seed for the `index`-th image of a corpus generated with `base`.
pub fn image_seed(base: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index as u64);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildSummary {
    pub corpus: PairedCorpus,
    /// Mean PSNR of rainy against clean, in dB.
    pub mean_psnr: f64,
}

/// Writes `clean/` and `rainy/` mirrors of the PNGs in `clean_dir` under
/// `out_dir`, each rainy image drawn with its own derived seed.
pub fn build_corpus(clean_dir: &Path, out_dir: &Path, p: &RainParams) -> Result<BuildSummary> {
    p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if !clean_dir.is_dir() {
        return Err(CliError::Data(format!("{}: not a directory", clean_dir.display())));
    }
    let inputs = list_pngs(clean_dir)?;
    if inputs.is_empty() {
        return Err(CliError::Data(format!("{}: no PNG images", clean_dir.display())));
    }
    let (clean_out, rainy_out) = (out_dir.join("clean"), out_dir.join("rainy"));
    for d in [&clean_out, &rainy_out] {
        std::fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
    }
    let mut entries = Vec::with_capacity(inputs.len());
    let mut psnr_sum = 0.0;
    for (i, src) in inputs.iter().enumerate() {
        let clean = load_image::<f64>(src)?;
        let rainy = synthesize_rain(
            &clean,
            &RainParams {
                seed: image_seed(p.seed, i),
                ..*p
            },
        )?;
        let name = format!("{}.png", stem(src));
        let entry = PairEntry {
            stem: stem(src),
            clean: clean_out.join(&name),
            rainy: rainy_out.join(&name),
        };
        save_image(&clean, &entry.clean)?;
        save_image(&rainy, &entry.rainy)?;
        // score the stored 8-bit images, which is what training sees
        psnr_sum += psnr(&load_image::<f64>(&entry.rainy)?, &load_image::<f64>(&entry.clean)?)?;
        entries.push(entry);
    }
    let rain_file = out_dir.join(RAIN_FILE);
    std::fs::write(&rain_file, render_rain(p)).map_err(|e| CliError::io(&rain_file, e))?;
    Ok(BuildSummary {
        mean_psnr: psnr_sum / entries.len() as f64,
        corpus: PairedCorpus {
            root: out_dir.to_path_buf(),
            entries,
        },
    })
}
