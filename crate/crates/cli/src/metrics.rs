//! Per-policy metric rows, aggregates and paired comparisons.

use anyhow::{ensure, Result};
use comot::data::QueryInstance;
use comot::fairness::{expected_ndcg_at_most, foe_abs, policy_utility, Gain};
use comot::ot::{minmax_scale, DiscountVector};
use comot::Matrix;
use serde::Serialize;

use crate::report::Table;
use crate::stats::{mean, paired_t_test};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub query_id: String,
    pub source: String,
    pub n_docs: usize,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub foe_abs: f64,
    /// Negative transport cost.
    pub utility: f64,
    pub wall_ms: f64,
}

impl Table for MetricRow {
    const COLUMNS: &'static [&'static str] = &[
        "query_id", "source", "n_docs", "ndcg5", "ndcg10", "foe_abs", "utility", "wall_ms",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub source: String,
    pub queries: usize,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub foe_abs: f64,
    pub utility: f64,
    pub wall_ms: f64,
}

impl Table for SummaryRow {
    const COLUMNS: &'static [&'static str] = &[
        "source", "queries", "ndcg5", "ndcg10", "foe_abs", "utility", "wall_ms",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TTestRow {
    pub metric: String,
    pub source_a: String,
    pub source_b: String,
    pub queries: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_diff: f64,
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub alpha: f64,
    pub significant: bool,
}

impl Table for TTestRow {
    const COLUMNS: &'static [&'static str] = &[
        "metric",
        "source_a",
        "source_b",
        "queries",
        "mean_a",
        "mean_b",
        "mean_diff",
        "t_stat",
        "p_value",
        "alpha",
        "significant",
    ];
}

pub const METRICS: [&str; 4] = ["ndcg5", "ndcg10", "foe_abs", "utility"];

impl MetricRow {
    fn metric(&self, name: &str) -> f64 {
        match name {
            "ndcg5" => self.ndcg5,
            "ndcg10" => self.ndcg10,
            "foe_abs" => self.foe_abs,
            "utility" => self.utility,
            "wall_ms" => self.wall_ms,
            _ => unreachable!("unknown metric {name}"),
        }
    }
}

pub fn policy_metrics(
    query: &QueryInstance,
    policy: &Matrix,
    source: &str,
    wall_ms: f64,
    gain: Gain,
) -> Result<MetricRow> {
    let n = query.len();
    let v = DiscountVector::new(n);
    let u = minmax_scale(&query.scores)?;
    Ok(MetricRow {
        query_id: query.query_id.clone(),
        source: source.to_string(),
        n_docs: n,
        ndcg5: expected_ndcg_at_most(policy, &query.relevance, 5, gain)?,
        ndcg10: expected_ndcg_at_most(policy, &query.relevance, 10, gain)?,
        foe_abs: foe_abs(policy, &query.groups, &v)?,
        utility: policy_utility(policy, &u, &v)?,
        wall_ms,
    })
}

fn column(rows: &[MetricRow], source: &str, metric: &str) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.source == source)
        .map(|r| r.metric(metric))
        .collect()
}

/// Mean of every metric per source. Errors when a source has no rows.
pub fn summarize(rows: &[MetricRow], sources: &[&str]) -> Result<Vec<SummaryRow>> {
    sources
        .iter()
        .map(|&s| {
            let count = rows.iter().filter(|r| r.source == s).count();
            ensure!(count > 0, "no queries to aggregate for source `{s}`");
            Ok(SummaryRow {
                source: s.to_string(),
                queries: count,
                ndcg5: mean(&column(rows, s, "ndcg5"))?,
                ndcg10: mean(&column(rows, s, "ndcg10"))?,
                foe_abs: mean(&column(rows, s, "foe_abs"))?,
                utility: mean(&column(rows, s, "utility"))?,
                wall_ms: mean(&column(rows, s, "wall_ms"))?,
            })
        })
        .collect()
}

/// Paired two-sided t-tests per metric. Rows of each source must list the
/// queries in the same order.
pub fn paired_tests(
    rows: &[MetricRow],
    pairs: &[(&str, &str)],
    alpha: f64,
) -> Result<Vec<TTestRow>> {
    let mut out = Vec::new();
    for &(a, b) in pairs {
        let ids_a: Vec<&str> = rows
            .iter()
            .filter(|r| r.source == a)
            .map(|r| r.query_id.as_str())
            .collect();
        let ids_b: Vec<&str> = rows
            .iter()
            .filter(|r| r.source == b)
            .map(|r| r.query_id.as_str())
            .collect();
        ensure!(
            ids_a == ids_b,
            "sources `{a}` and `{b}` cover different queries"
        );
        for metric in METRICS {
            let xa = column(rows, a, metric);
            let xb = column(rows, b, metric);
            let t = paired_t_test(&xa, &xb)?;
            out.push(TTestRow {
                metric: metric.to_string(),
                source_a: a.to_string(),
                source_b: b.to_string(),
                queries: xa.len(),
                mean_a: mean(&xa)?,
                mean_b: mean(&xb)?,
                mean_diff: t.mean_diff,
                t_stat: t.t_stat,
                p_value: t.p_value,
                alpha,
                significant: t.p_value.is_some_and(|p| p < alpha),
            });
        }
    }
    Ok(out)
}
