//! Subcommand implementations. Each one reads its inputs, stages its
//! outputs, and fills in the run manifest; [`run`] commits everything.

mod baseline;
mod evaluate;
mod predict;
mod sample;
mod synth;
mod train;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use comot::comot::TrainConfig;
use comot::data::{load_jsonl, preprocess, Dataset};
use comot::net::{Checkpoint, PotentialModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{CommandKind, RunConfig};
use crate::manifest::{InputFile, Manifest};
use crate::report::Staged;

/// Sibling of the checkpoint holding the training configuration.
pub const TRAIN_CONFIG_FILE: &str = "train_config.json";

/// Runs the configured command and commits its outputs. Returns the paths
/// written.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .context("building worker pool")?;
    let mut manifest = Manifest::new(cfg);
    let mut staged = Staged::new();
    pool.install(|| match cfg.command {
        CommandKind::Train => train::run(cfg, &mut manifest, &mut staged),
        CommandKind::Predict => predict::run(cfg, &mut manifest, &mut staged),
        CommandKind::Evaluate => evaluate::run(cfg, &mut manifest, &mut staged),
        CommandKind::Baseline => baseline::run(cfg, &mut manifest, &mut staged),
        CommandKind::Sample => sample::run(cfg, &mut manifest, &mut staged),
        CommandKind::Synth => synth::run(cfg, &mut manifest, &mut staged),
    })?;
    let name = manifest.file_name();
    manifest.outputs = staged.names();
    manifest.outputs.push(name.clone());
    staged.add_bytes(name, manifest.to_bytes()?);
    let written = staged.names().iter().map(|n| cfg.out_dir.join(n)).collect();
    staged.commit(&cfg.out_dir)?;
    Ok(written)
}

fn path<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .with_context(|| format!("--{flag} is required"))
}

/// Loads a split as given.
fn load_raw(path: &Path, manifest: &mut Manifest) -> Result<Dataset> {
    manifest.inputs.push(InputFile::digest(path)?);
    load_jsonl(path).with_context(|| format!("loading {}", path.display()))
}

/// Loads a split and drops queries that cannot be scored for fairness.
fn load_split(path: &Path, manifest: &mut Manifest) -> Result<Dataset> {
    let raw = load_raw(path, manifest)?;
    let (data, removed) = preprocess(&raw);
    if !removed.is_empty() {
        log::warn!(
            "{}: dropped {} of {} queries (fewer than 3 documents or a single group)",
            path.display(),
            removed.len(),
            raw.len()
        );
    }
    manifest.removed_queries.extend(removed);
    Ok(data)
}

/// Loads a checkpoint with the configuration it was trained under.
///
/// The configuration comes from `train_config.json` next to the
/// checkpoint when present, and from the run configuration otherwise.
fn load_model(
    path: &Path,
    fallback: &TrainConfig,
    manifest: &mut Manifest,
) -> Result<(PotentialModel, TrainConfig)> {
    manifest.inputs.push(InputFile::digest(path)?);
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let model = ckpt.to_model()?;
    let sibling = path.with_file_name(TRAIN_CONFIG_FILE);
    let cfg = if sibling.is_file() {
        manifest.inputs.push(InputFile::digest(&sibling)?);
        let text = fs::read_to_string(&sibling)?;
        let cfg: TrainConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", sibling.display()))?;
        anyhow::ensure!(
            cfg.config_hash() == ckpt.config_hash,
            "{} does not belong to checkpoint {}",
            sibling.display(),
            path.display()
        );
        cfg
    } else {
        if fallback.config_hash() != ckpt.config_hash {
            log::warn!(
                "no {TRAIN_CONFIG_FILE} next to {}; inference settings may differ from training",
                path.display()
            );
        }
        fallback.clone()
    };
    anyhow::ensure!(
        model.hidden() == cfg.hidden,
        "checkpoint hidden width {} differs from configured {}",
        model.hidden(),
        cfg.hidden
    );
    Ok((model, cfg))
}

/// Independent random stream for one task, whatever thread runs it.
fn task_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn elapsed_ms(start: std::time::Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}
