use std::time::Instant;

use anyhow::{ensure, Result};
use comot::comot::{predict_policy, TrainConfig};
use comot::data::QueryInstance;
use comot::foe_lp::{solve_foe_lp, FoeLpProblem};
use comot::net::PotentialModel;
use comot::ot::{build_cost, minmax_scale, Permutation};
use rayon::prelude::*;
use serde_json::json;

use super::{elapsed_ms, load_model, load_split, path};
use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::metrics::{paired_tests, policy_metrics, summarize, MetricRow};
use crate::report::Staged;

pub const ORIG: &str = "orig";
pub const COMOT: &str = "comot";
pub const LP: &str = "lp";

pub fn run(cfg: &RunConfig, manifest: &mut Manifest, staged: &mut Staged) -> Result<()> {
    let (model, train_cfg) = load_model(path(&cfg.model_path, "model")?, &cfg.train, manifest)?;
    let data = load_split(path(&cfg.test_path, "test")?, manifest)?;
    ensure!(!data.is_empty(), "no test queries left after preprocessing");
    let per_query = data
        .queries
        .par_iter()
        .map(|q| evaluate_query(q, &model, &train_cfg, cfg))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<MetricRow> = per_query.into_iter().flatten().collect();

    let mut sources = vec![ORIG, COMOT];
    let mut pairs = vec![(ORIG, COMOT)];
    if cfg.lp_rho.is_some() {
        sources.push(LP);
        pairs.extend([(ORIG, LP), (COMOT, LP)]);
    }
    let summary = summarize(&rows, &sources)?;
    let tests = paired_tests(&rows, &pairs, cfg.alpha)?;
    staged.add_table("metrics", &rows, cfg.format)?;
    staged.add_table("summary", &summary, cfg.format)?;
    staged.add_table("ttest", &tests, cfg.format)?;
    manifest.summary = json!({
        "queries": data.len(),
        "sources": sources,
        "train_config_hash": train_cfg.config_hash(),
    });
    Ok(())
}

fn evaluate_query(
    q: &QueryInstance,
    model: &PotentialModel,
    train_cfg: &TrainConfig,
    cfg: &RunConfig,
) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::with_capacity(3);

    let start = Instant::now();
    let orig = Permutation::from_ranking(&q.score_order())?.to_matrix();
    rows.push(policy_metrics(q, &orig, ORIG, elapsed_ms(start), cfg.gain)?);

    let start = Instant::now();
    let policy = predict_policy(model, &q.scores, train_cfg)?;
    let wall = elapsed_ms(start);
    rows.push(policy_metrics(q, policy.matrix(), COMOT, wall, cfg.gain)?);

    if let Some(rho) = cfg.lp_rho {
        let start = Instant::now();
        let cost = build_cost(&minmax_scale(&q.scores)?)?;
        let sol = solve_foe_lp(&FoeLpProblem::new(cost, q.groups.clone(), rho)?)?;
        let wall = elapsed_ms(start);
        rows.push(policy_metrics(q, sol.policy.matrix(), LP, wall, cfg.gain)?);
    }
    Ok(rows)
}
