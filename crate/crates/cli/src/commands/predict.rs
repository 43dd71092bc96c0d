use anyhow::Result;
use comot::comot::predict_policy;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::{load_model, load_raw, path};
use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::report::{Staged, Table};

/// One policy entry in long form; positions start at 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyRow {
    pub query_id: String,
    pub doc_id: String,
    pub position: usize,
    pub probability: f64,
}

impl Table for PolicyRow {
    const COLUMNS: &'static [&'static str] = &["query_id", "doc_id", "position", "probability"];
}

pub fn run(cfg: &RunConfig, manifest: &mut Manifest, staged: &mut Staged) -> Result<()> {
    let (model, train_cfg) = load_model(path(&cfg.model_path, "model")?, &cfg.train, manifest)?;
    let data = load_raw(path(&cfg.test_path, "test")?, manifest)?;
    let per_query = data
        .queries
        .par_iter()
        .map(|q| {
            let policy = predict_policy(&model, &q.scores, &train_cfg)?;
            let p = policy.matrix();
            let mut rows = Vec::with_capacity(q.len() * q.len());
            for (i, doc) in q.doc_ids.iter().enumerate() {
                for j in 0..q.len() {
                    rows.push(PolicyRow {
                        query_id: q.query_id.clone(),
                        doc_id: doc.clone(),
                        position: j + 1,
                        probability: p[(i, j)],
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<PolicyRow> = per_query.into_iter().flatten().collect();
    staged.add_table("policies", &rows, cfg.format)?;
    manifest.summary = json!({ "queries": data.len() });
    Ok(())
}
