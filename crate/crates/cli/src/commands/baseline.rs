use anyhow::{ensure, Result};
use comot::foe_lp::{rho_sweep, SweepRow, FEASIBILITY_TOL};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::{load_split, path};
use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::report::{Staged, Table};
use crate::stats::mean;

impl Table for SweepRow {
    const COLUMNS: &'static [&'static str] = &[
        "query_id", "rho", "cost", "foe_abs", "ndcg5", "ndcg10", "wall_ms",
    ];
}

/// Means over queries at one fairness level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoSummaryRow {
    pub rho: f64,
    pub queries: usize,
    pub cost: f64,
    pub foe_abs: f64,
    pub max_foe_abs: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub wall_ms: f64,
}

impl Table for RhoSummaryRow {
    const COLUMNS: &'static [&'static str] = &[
        "rho",
        "queries",
        "cost",
        "foe_abs",
        "max_foe_abs",
        "ndcg5",
        "ndcg10",
        "wall_ms",
    ];
}

pub fn run(cfg: &RunConfig, manifest: &mut Manifest, staged: &mut Staged) -> Result<()> {
    let data = load_split(path(&cfg.test_path, "test")?, manifest)?;
    ensure!(!data.is_empty(), "no test queries left after preprocessing");
    let per_query = data
        .queries
        .par_iter()
        .map(|q| Ok(rho_sweep(q, &cfg.rho, cfg.gain)?))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<SweepRow> = per_query.into_iter().flatten().collect();
    for r in &rows {
        ensure!(
            r.foe_abs <= r.rho + FEASIBILITY_TOL,
            "query {}: LP policy has FOE-abs {} above rho {}",
            r.query_id,
            r.foe_abs,
            r.rho
        );
    }
    let summary = summarize_levels(&rows, &cfg.rho)?;
    staged.add_table("rho_sweep", &rows, cfg.format)?;
    staged.add_table("rho_summary", &summary, cfg.format)?;
    manifest.summary = json!({ "queries": data.len(), "solves": rows.len() });
    Ok(())
}

fn summarize_levels(rows: &[SweepRow], rhos: &[f64]) -> Result<Vec<RhoSummaryRow>> {
    rhos.iter()
        .enumerate()
        .map(|(k, &rho)| {
            // Rows repeat the grid once per query, in grid order.
            let at: Vec<&SweepRow> = rows.iter().skip(k).step_by(rhos.len()).collect();
            let col = |f: fn(&SweepRow) -> f64| at.iter().map(|r| f(r)).collect::<Vec<_>>();
            Ok(RhoSummaryRow {
                rho,
                queries: at.len(),
                cost: mean(&col(|r| r.cost))?,
                foe_abs: mean(&col(|r| r.foe_abs))?,
                max_foe_abs: col(|r| r.foe_abs).into_iter().fold(0.0, f64::max),
                ndcg5: mean(&col(|r| r.ndcg5))?,
                ndcg10: mean(&col(|r| r.ndcg10))?,
                wall_ms: mean(&col(|r| r.wall_ms))?,
            })
        })
        .collect()
}
