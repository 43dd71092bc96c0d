//! The training loop and policy inference.
//!
//! Per query: scale the scores, build the cost, predict the row potential
//! `f`, recover the column potential and the primal plan, Sinkhorn-project
//! the plan into a policy, then penalize the dual objective and the
//! exposure gap of that policy. The whole composition, including the
//! unrolled Sinkhorn rounds, is recorded on a tape for the update.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, QueryInstance};
use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::fairness::{exposure_difference_weights, foe_abs, GroupLabels};
use crate::matrix::Matrix;
use crate::net::{
    AdamWConfig, OptimizerState, PotentialModel, Tape, DEFAULT_CLAMP, DEFAULT_HIDDEN,
};
use crate::numerics::logsumexp_iter;
use crate::ot::{
    build_cost, gibbs_kernel_log, minmax_scale, sinkhorn_project, CostMatrix, DiscountVector,
    DoublyStochasticPolicy, SinkhornInput,
};

/// Early stopping fires after this many consecutive small changes.
pub const EARLY_STOP_WINDOW: usize = 3;
pub const EARLY_STOP_REL_CHANGE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epsilon: f64,
    pub lambda_fair: f64,
    pub sinkhorn_iters: usize,
    pub epochs: usize,
    #[serde(flatten)]
    pub optimizer: AdamWConfig,
    pub clamp: f64,
    pub hidden: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub sinkhorn_input: SinkhornInput,
    pub early_stop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            lambda_fair: 1e5,
            sinkhorn_iters: 10,
            epochs: 30,
            optimizer: AdamWConfig::default(),
            clamp: DEFAULT_CLAMP,
            hidden: DEFAULT_HIDDEN,
            seed: 0,
            shuffle: true,
            sinkhorn_input: SinkhornInput::Logits,
            early_stop: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid_param(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.lambda_fair >= 0.0 && self.lambda_fair.is_finite()) {
            return Err(invalid_param(format!(
                "lambda_fair must be nonnegative, got {}",
                self.lambda_fair
            )));
        }
        if self.sinkhorn_iters == 0 {
            return Err(invalid_param("sinkhorn_iters must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(invalid_param("epochs must be at least 1"));
        }
        if !(self.clamp > 0.0) {
            return Err(invalid_param("clamp must be positive"));
        }
        if self.hidden == 0 {
            return Err(invalid_param("hidden width must be positive"));
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0)
            || !(0.0..1.0).contains(&o.beta1)
            || !(0.0..1.0).contains(&o.beta2)
        {
            return Err(invalid_param("optimizer settings out of range"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-query constants shared by every pass over the query.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    pub u_scaled: Vec<f64>,
    pub cost: CostMatrix,
    pub log_kernel: Matrix,
    pub discount: DiscountVector,
    /// Exposure-difference weights; absent when fairness is not evaluated.
    pub exposure_weights: Option<Matrix>,
}

impl PreparedQuery {
    pub fn new(scores: &[f64], groups: Option<&GroupLabels>, epsilon: f64) -> Result<Self> {
        if scores.is_empty() {
            return Err(invalid_input("query has no documents"));
        }
        let u_scaled = minmax_scale(scores)?;
        let cost = build_cost(&u_scaled)?;
        let log_kernel = gibbs_kernel_log(&cost, epsilon)?;
        let discount = DiscountVector::new(scores.len());
        let exposure_weights = match groups {
            Some(g) => {
                if g.len() != scores.len() {
                    return Err(invalid_input("group labels and scores differ in length"));
                }
                Some(exposure_difference_weights(g, &discount)?)
            }
            None => None,
        };
        Ok(Self {
            u_scaled,
            cost,
            log_kernel,
            discount,
            exposure_weights,
        })
    }

    pub fn from_query(query: &QueryInstance, epsilon: f64) -> Result<Self> {
        if query.len() < 3 || !query.groups.has_both_groups() {
            return Err(invalid_input(format!(
                "query {} needs at least three documents from both groups",
                query.query_id
            )));
        }
        Self::new(&query.scores, Some(&query.groups), epsilon)
    }

    pub fn n(&self) -> usize {
        self.u_scaled.len()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub policy: DoublyStochasticPolicy,
    pub mot_loss: f64,
    pub fair_loss: f64,
    pub total_loss: f64,
}

struct Recorded {
    tape: Tape,
    total: crate::net::Var,
    params: crate::net::ParamVars,
    policy: Matrix,
    mot_loss: f64,
    fair_loss: f64,
}

fn record(model: &PotentialModel, prep: &PreparedQuery, cfg: &TrainConfig) -> Result<Recorded> {
    let weights = prep
        .exposure_weights
        .clone()
        .ok_or_else(|| invalid_input("training needs group labels"))?;
    let eps = cfg.epsilon;
    let mut tape = Tape::new();
    let input = tape.leaf(Matrix::column(&prep.u_scaled));
    let (f, params) = model.forward_taped(&mut tape, input);

    // (f_i − C_ij)/ε, then g_j = −ε·lse_i of it.
    let f_scaled = tape.scale(f, 1.0 / eps);
    let log_k = tape.leaf(prep.log_kernel.clone());
    let shifted = tape.add_col(log_k, f_scaled);
    let lse = tape.logsumexp_cols(shifted);
    let g = tape.scale(lse, -eps);
    let neg_lse = tape.scale(lse, -1.0);
    let log_p = tape.add_row(shifted, neg_lse);
    let p_mot = tape.exp(log_p);

    let mut a = match cfg.sinkhorn_input {
        SinkhornInput::Logits => tape.scale(p_mot, 1.0 / eps),
        SinkhornInput::LogProbabilities => tape.scale(log_p, 1.0 / eps),
    };
    for _ in 0..cfg.sinkhorn_iters {
        a = tape.normalize_rows_log(a);
        a = tape.normalize_cols_log(a);
    }
    let policy = tape.exp(a);

    let gap = tape.weighted_sum(policy, weights);
    let fair = tape.abs(gap);

    let sum_f = tape.sum(f);
    let sum_g = tape.sum(g);
    let sum_p = tape.sum(p_mot);
    let dual_lin = tape.add(sum_f, sum_g);
    let mass = tape.scale(sum_p, eps);
    let mot = tape.sub(mass, dual_lin);
    let fair_weighted = tape.scale(fair, cfg.lambda_fair);
    let total = tape.add(mot, fair_weighted);

    let mot_loss = tape.scalar(mot);
    let fair_loss = tape.scalar(fair);
    let policy = tape.value(policy).clone();
    Ok(Recorded {
        tape,
        total,
        params,
        policy,
        mot_loss,
        fair_loss,
    })
}

fn divergence(query: &str, detail: impl Into<String>) -> Error {
    Error::TrainingDivergence {
        epoch: 0,
        query: query.to_string(),
        detail: detail.into(),
    }
}

fn output(rec: &Recorded, query_id: &str) -> Result<ForwardOutput> {
    let total_loss = rec.tape.scalar(rec.total);
    if !total_loss.is_finite() || !rec.policy.all_finite() {
        return Err(divergence(
            query_id,
            format!(
                "non-finite loss (mot {}, fair {})",
                rec.mot_loss, rec.fair_loss
            ),
        ));
    }
    Ok(ForwardOutput {
        policy: DoublyStochasticPolicy::from_measured(rec.policy.clone()),
        mot_loss: rec.mot_loss,
        fair_loss: rec.fair_loss,
        total_loss,
    })
}

/// Policy and loss parts for one query.
pub fn comot_forward(
    model: &PotentialModel,
    query: &QueryInstance,
    cfg: &TrainConfig,
) -> Result<ForwardOutput> {
    cfg.validate()?;
    let prep = PreparedQuery::from_query(query, cfg.epsilon)?;
    let rec = record(model, &prep, cfg)?;
    output(&rec, &query.query_id)
}

/// Forward pass plus the gradient of the total loss for every parameter.
pub fn loss_and_gradients(
    model: &PotentialModel,
    prep: &PreparedQuery,
    cfg: &TrainConfig,
    query_id: &str,
) -> Result<(ForwardOutput, Vec<Matrix>)> {
    let rec = record(model, prep, cfg)?;
    let out = output(&rec, query_id)?;
    let grads = rec
        .tape
        .backward(rec.total)
        .map_err(|e| divergence(query_id, e.to_string()))?;
    let grads = rec.params.0.iter().map(|&v| grads.wrt(v)).collect();
    Ok((out, grads))
}

/// Total loss only, without taping.
pub fn total_loss(model: &PotentialModel, prep: &PreparedQuery, cfg: &TrainConfig) -> Result<f64> {
    let weights = prep
        .exposure_weights
        .as_ref()
        .ok_or_else(|| invalid_input("loss needs group labels"))?;
    let f = model.forward(&prep.u_scaled);
    let (log_p, g) = primal_log(&f, &prep.log_kernel, cfg.epsilon);
    let p_mot = log_p.map(f64::exp);
    let policy = project(&p_mot, &log_p, cfg);
    let fair = policy.dot(weights).abs();
    let mot = cfg.epsilon * p_mot.sum() - f.iter().sum::<f64>() - g.iter().sum::<f64>();
    Ok(mot + cfg.lambda_fair * fair)
}

/// `log P` with `P_ij = exp((f_i + g_j − C_ij)/ε)` and the matching `g`.
fn primal_log(f: &[f64], log_kernel: &Matrix, eps: f64) -> (Matrix, Vec<f64>) {
    let n = f.len();
    let shifted = Matrix::from_fn(n, n, |i, j| log_kernel[(i, j)] + f[i] * (1.0 / eps));
    let lse: Vec<f64> = (0..n)
        .map(|j| logsumexp_iter((0..n).map(|i| shifted[(i, j)])))
        .collect();
    let g = lse.iter().map(|l| l * -eps).collect();
    let log_p = Matrix::from_fn(n, n, |i, j| shifted[(i, j)] + lse[j] * -1.0);
    (log_p, g)
}

fn project(p_mot: &Matrix, log_p: &Matrix, cfg: &TrainConfig) -> Matrix {
    let inv = 1.0 / cfg.epsilon;
    let mut a = match cfg.sinkhorn_input {
        SinkhornInput::Logits => p_mot.map(|x| x * inv),
        SinkhornInput::LogProbabilities => log_p.map(|x| x * inv),
    };
    for _ in 0..cfg.sinkhorn_iters {
        crate::ot::normalize_rows_log(&mut a);
        crate::ot::normalize_cols_log(&mut a);
    }
    a.map(f64::exp)
}

/// Inference: scale, cost, potentials, primal, Sinkhorn.
pub fn predict_policy(
    model: &PotentialModel,
    scores: &[f64],
    cfg: &TrainConfig,
) -> Result<DoublyStochasticPolicy> {
    if scores.is_empty() {
        return Err(invalid_input("query has no documents"));
    }
    let prep = PreparedQuery::new(scores, None, cfg.epsilon)?;
    predict_prepared(model, &prep, cfg)
}

pub fn predict_prepared(
    model: &PotentialModel,
    prep: &PreparedQuery,
    cfg: &TrainConfig,
) -> Result<DoublyStochasticPolicy> {
    let f = model.forward(&prep.u_scaled);
    let (log_p, _) = primal_log(&f, &prep.log_kernel, cfg.epsilon);
    let p_mot = log_p.map(f64::exp);
    let p = project(&p_mot, &log_p, cfg);
    if !p.all_finite() {
        return Err(invalid_input("policy is not finite"));
    }
    Ok(DoublyStochasticPolicy::from_measured(p))
}

/// Sinkhorn projection with the library routine, for cross-checking.
pub fn predict_policy_reference(
    model: &PotentialModel,
    scores: &[f64],
    cfg: &TrainConfig,
) -> Result<DoublyStochasticPolicy> {
    let prep = PreparedQuery::new(scores, None, cfg.epsilon)?;
    let f = model.forward(&prep.u_scaled);
    let (log_p, _) = primal_log(&f, &prep.log_kernel, cfg.epsilon);
    sinkhorn_project(
        &log_p.map(f64::exp),
        cfg.epsilon,
        cfg.sinkhorn_iters,
        cfg.sinkhorn_input,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_mot_loss: f64,
    pub mean_fair_loss: f64,
    /// FOE-abs of the predicted policies after the epoch's updates.
    pub mean_foe_abs: f64,
    pub mean_total_loss: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PotentialModel,
    pub trace: Vec<EpochStats>,
    pub stopped_early: bool,
}

/// Trains a freshly initialized model.
pub fn train(
    dataset: &Dataset,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = PotentialModel::new(cfg.hidden, cfg.clamp, cfg.seed);
    train_model(model, dataset, cfg, progress)
}

/// Per-query AdamW updates over `cfg.epochs` epochs.
pub fn train_model(
    mut model: PotentialModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(invalid_input("cannot train on an empty dataset"));
    }
    let prepared = dataset
        .queries
        .iter()
        .map(|q| PreparedQuery::from_query(q, cfg.epsilon))
        .collect::<Result<Vec<_>>>()?;
    let mut optimizer = OptimizerState::new(&model, cfg.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut small_changes = 0;
    let mut stopped_early = false;
    let count = prepared.len() as f64;

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let (mut mot_sum, mut fair_sum, mut total_sum) = (0.0, 0.0, 0.0);
        for &qi in &order {
            let query_id = &dataset.queries[qi].query_id;
            let with_epoch = |e: Error| match e {
                Error::TrainingDivergence { query, detail, .. } => Error::TrainingDivergence {
                    epoch,
                    query,
                    detail,
                },
                other => other,
            };
            let (out, grads) =
                loss_and_gradients(&model, &prepared[qi], cfg, query_id).map_err(with_epoch)?;
            optimizer
                .step(&mut model, &grads)
                .map_err(|e| Error::TrainingDivergence {
                    epoch,
                    query: query_id.clone(),
                    detail: format!("non-finite update of parameter {}", e.parameter),
                })?;
            mot_sum += out.mot_loss;
            fair_sum += out.fair_loss;
            total_sum += out.total_loss;
        }
        let mut foe_sum = 0.0;
        for (prep, q) in prepared.iter().zip(&dataset.queries) {
            let p = predict_prepared(&model, prep, cfg)?;
            foe_sum += foe_abs(&p, &q.groups, &prep.discount)?;
        }
        let stats = EpochStats {
            epoch,
            mean_mot_loss: mot_sum / count,
            mean_fair_loss: fair_sum / count,
            mean_foe_abs: foe_sum / count,
            mean_total_loss: total_sum / count,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        log::info!(
            "epoch {epoch}: L_MOT {:.6} L_fair {:.6} FOE {:.6}",
            stats.mean_mot_loss,
            stats.mean_fair_loss,
            stats.mean_foe_abs
        );
        progress(&stats);
        if let Some(prev) = trace.last().map(|s: &EpochStats| s.mean_total_loss) {
            let rel = (stats.mean_total_loss - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
            small_changes = if rel < EARLY_STOP_REL_CHANGE {
                small_changes + 1
            } else {
                0
            };
        }
        trace.push(stats);
        if cfg.early_stop && small_changes >= EARLY_STOP_WINDOW {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        trace,
        stopped_early,
    })
}
