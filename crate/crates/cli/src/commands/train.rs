use anyhow::{ensure, Result};
use comot::comot::{train, EpochStats};
use comot::net::Checkpoint;
use serde_json::json;

use super::{load_split, path, TRAIN_CONFIG_FILE};
use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::report::{Staged, Table};

impl Table for EpochStats {
    const COLUMNS: &'static [&'static str] = &[
        "epoch",
        "mean_mot_loss",
        "mean_fair_loss",
        "mean_foe_abs",
        "mean_total_loss",
        "wall_ms",
    ];
}

pub fn run(cfg: &RunConfig, manifest: &mut Manifest, staged: &mut Staged) -> Result<()> {
    let data = load_split(path(&cfg.train_path, "train")?, manifest)?;
    ensure!(
        !data.is_empty(),
        "no training queries left after preprocessing"
    );
    let outcome = train(&data, &cfg.train, &mut |_| {})?;
    let hash = cfg.train.config_hash();
    let ckpt = Checkpoint::from_model(&outcome.model, hash.clone());
    staged.add_bytes("model.json", ckpt.to_json().into_bytes());
    let mut train_cfg = serde_json::to_vec_pretty(&cfg.train)?;
    train_cfg.push(b'\n');
    staged.add_bytes(TRAIN_CONFIG_FILE, train_cfg);
    staged.add_table("trace", &outcome.trace, cfg.format)?;
    let last = outcome.trace.last();
    manifest.summary = json!({
        "queries": data.len(),
        "train_config_hash": hash,
        "epochs_run": outcome.trace.len(),
        "stopped_early": outcome.stopped_early,
        "final_mean_foe_abs": last.map(|s| s.mean_foe_abs),
        "final_mean_total_loss": last.map(|s| s.mean_total_loss),
    });
    Ok(())
}
