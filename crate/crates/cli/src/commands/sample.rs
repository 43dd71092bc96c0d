//! Online sampling from predicted policies.
//!
//! For every query and repeat, a stream of `max(k_grid)` rankings is drawn
//! from each sampler, and the squared error between the policy and the
//! running empirical mean is recorded at each grid point. The first
//! repeat's full-length estimate is scored like a policy, next to the
//! policy itself.

use std::time::Instant;

use anyhow::{Context, Result};
use comot::comot::{predict_policy, TrainConfig};
use comot::data::QueryInstance;
use comot::net::PotentialModel;
use comot::ot::{DoublyStochasticPolicy, Permutation};
use comot::sampler::{bvnd_decompose, bvnd_sample, gumms_sample, BvnDecomposition};
use comot::Matrix;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::{elapsed_ms, load_model, load_split, path, task_rng};
use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::metrics::{paired_tests, policy_metrics, summarize, MetricRow};
use crate::report::{Staged, Table};
use crate::stats::{mean, median};

const REFERENCE: &str = "comot";
const SAMPLERS: [&str; 2] = ["gumms", "bvnd"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCurveRow {
    pub sampler: String,
    pub k: usize,
    pub repeat: usize,
    /// Mean over queries of the squared Frobenius error.
    pub mean_sq_error: f64,
}

impl Table for ErrorCurveRow {
    const COLUMNS: &'static [&'static str] = &["sampler", "k", "repeat", "mean_sq_error"];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorMedianRow {
    pub sampler: String,
    pub k: usize,
    pub repeats: usize,
    pub median_sq_error: f64,
    pub min_sq_error: f64,
    pub max_sq_error: f64,
}

impl Table for ErrorMedianRow {
    const COLUMNS: &'static [&'static str] = &[
        "sampler",
        "k",
        "repeats",
        "median_sq_error",
        "min_sq_error",
        "max_sq_error",
    ];
}

/// One sampled ranking, documents in rank order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleLine {
    pub query_id: String,
    pub sampler: &'static str,
    pub ranking: Vec<String>,
}

struct QueryResult {
    /// `errors[sampler][repeat][k index]`
    errors: Vec<Vec<Vec<f64>>>,
    lines: Vec<SampleLine>,
    metrics: Vec<MetricRow>,
}

enum Sampler<'a> {
    Gumms(&'a DoublyStochasticPolicy),
    Bvnd(&'a BvnDecomposition),
}

impl Sampler<'_> {
    fn draw(&self, cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Permutation> {
        Ok(match self {
            Sampler::Gumms(p) => gumms_sample(p, &cfg.gumms, rng)?,
            Sampler::Bvnd(d) => bvnd_sample(d, rng)?.0,
        })
    }
}

pub fn run(cfg: &RunConfig, manifest: &mut Manifest, staged: &mut Staged) -> Result<()> {
    let (model, train_cfg) = load_model(path(&cfg.model_path, "model")?, &cfg.train, manifest)?;
    let data = load_split(path(&cfg.test_path, "test")?, manifest)?;
    anyhow::ensure!(!data.is_empty(), "no test queries left after preprocessing");
    let mut ks = cfg.k_grid.clone();
    ks.sort_unstable();
    ks.dedup();

    let results = data
        .queries
        .par_iter()
        .enumerate()
        .map(|(qi, q)| {
            sample_query(qi as u64, q, &model, &train_cfg, cfg, &ks)
                .with_context(|| format!("query {}", q.query_id))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut curve = Vec::new();
    let mut medians = Vec::new();
    for (s, name) in SAMPLERS.iter().enumerate() {
        for (ki, &k) in ks.iter().enumerate() {
            let mut per_repeat = Vec::with_capacity(cfg.repeats);
            for r in 0..cfg.repeats {
                let errs: Vec<f64> = results.iter().map(|res| res.errors[s][r][ki]).collect();
                let m = mean(&errs)?;
                per_repeat.push(m);
                curve.push(ErrorCurveRow {
                    sampler: name.to_string(),
                    k,
                    repeat: r,
                    mean_sq_error: m,
                });
            }
            medians.push(ErrorMedianRow {
                sampler: name.to_string(),
                k,
                repeats: cfg.repeats,
                median_sq_error: median(&per_repeat)?,
                min_sq_error: per_repeat.iter().copied().fold(f64::INFINITY, f64::min),
                max_sq_error: per_repeat.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }

    let mut lines = Vec::new();
    let mut metrics = Vec::new();
    for res in results {
        lines.extend(res.lines);
        metrics.extend(res.metrics);
    }
    let sources = [REFERENCE, SAMPLERS[0], SAMPLERS[1]];
    let summary = summarize(&metrics, &sources)?;
    let tests = paired_tests(
        &metrics,
        &[(REFERENCE, SAMPLERS[0]), (REFERENCE, SAMPLERS[1])],
        cfg.alpha,
    )?;

    let mut samples = Vec::new();
    for line in &lines {
        serde_json::to_writer(&mut samples, line)?;
        samples.push(b'\n');
    }
    staged.add_bytes("samples.jsonl", samples);
    staged.add_table("error_curve", &curve, cfg.format)?;
    staged.add_table("error_median", &medians, cfg.format)?;
    staged.add_table("sampled_metrics", &metrics, cfg.format)?;
    staged.add_table("sampled_summary", &summary, cfg.format)?;
    staged.add_table("sampled_ttest", &tests, cfg.format)?;
    manifest.summary = json!({
        "queries": data.len(),
        "k_grid": ks,
        "samples_per_estimate": ks.last(),
    });
    Ok(())
}

fn sample_query(
    qi: u64,
    q: &QueryInstance,
    model: &PotentialModel,
    train_cfg: &TrainConfig,
    cfg: &RunConfig,
    ks: &[usize],
) -> Result<QueryResult> {
    let n = q.len();
    let k_max = *ks.last().context("empty k grid")?;
    let start = Instant::now();
    let policy = predict_policy(model, &q.scores, train_cfg)?;
    let mut metrics = vec![policy_metrics(
        q,
        policy.matrix(),
        REFERENCE,
        elapsed_ms(start),
        cfg.gain,
    )?];
    // Truncated Sinkhorn leaves a small marginal residual, which the
    // decomposition must be allowed to leave behind.
    let tolerance = cfg.bvn_tolerance.max(2.0 * policy.tolerance());
    let decomposition = bvnd_decompose(&policy, tolerance)?;
    let samplers = [Sampler::Gumms(&policy), Sampler::Bvnd(&decomposition)];

    let mut errors = Vec::with_capacity(samplers.len());
    let mut lines = Vec::new();
    for (s, sampler) in samplers.iter().enumerate() {
        let mut per_repeat = Vec::with_capacity(cfg.repeats);
        for r in 0..cfg.repeats {
            let mut rng = task_rng(cfg.gumms.seed, (qi << 32) | ((s as u64) << 24) | r as u64);
            let mut counts = vec![0u32; n * n];
            let mut errs = Vec::with_capacity(ks.len());
            let mut next = 0;
            let start = Instant::now();
            for drawn in 1..=k_max {
                let perm = sampler.draw(cfg, &mut rng)?;
                for (i, &j) in perm.assignment().iter().enumerate() {
                    counts[i * n + j] += 1;
                }
                if r == 0 && drawn <= cfg.samples {
                    lines.push(SampleLine {
                        query_id: q.query_id.clone(),
                        sampler: SAMPLERS[s],
                        ranking: perm
                            .ranking()
                            .iter()
                            .map(|&d| q.doc_ids[d].clone())
                            .collect(),
                    });
                }
                if drawn == ks[next] {
                    errs.push(squared_error(policy.matrix(), &counts, drawn));
                    next += 1;
                }
            }
            if r == 0 {
                let wall = elapsed_ms(start);
                let est = Matrix::from_vec(
                    n,
                    n,
                    counts.iter().map(|&c| c as f64 / k_max as f64).collect(),
                );
                metrics.push(policy_metrics(q, &est, SAMPLERS[s], wall, cfg.gain)?);
            }
            per_repeat.push(errs);
        }
        errors.push(per_repeat);
    }
    Ok(QueryResult {
        errors,
        lines,
        metrics,
    })
}

fn squared_error(policy: &Matrix, counts: &[u32], k: usize) -> f64 {
    policy
        .as_slice()
        .iter()
        .zip(counts)
        .map(|(p, &c)| {
            let d = p - c as f64 / k as f64;
            d * d
        })
        .sum()
}
