use anyhow::{ensure, Result};
use comot::data::{synth_generate, write_jsonl};
use serde_json::json;

use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::report::Staged;

pub fn run(cfg: &RunConfig, manifest: &mut Manifest, staged: &mut Staged) -> Result<()> {
    let split = &cfg.synth.split;
    ensure!(
        !split.is_empty() && !split.contains(['/', '\\']) && split != "..",
        "split name {split:?} is not a plain file name"
    );
    let data = synth_generate(&cfg.synth)?;
    let mut bytes = Vec::new();
    write_jsonl(&data, &mut bytes)?;
    staged.add_bytes(format!("{split}.jsonl"), bytes);
    let docs: usize = data.queries.iter().map(|q| q.len()).sum();
    manifest.summary = json!({ "queries": data.len(), "documents": docs });
    Ok(())
}
