//! Acceptance suite: one PASS/FAIL line per criterion, then a summary.

use std::time::{Duration, Instant};

use comot::comot::{loss_and_gradients, predict_policy, train, PreparedQuery, TrainConfig};
use comot::data::{synth_generate, Dataset, SynthConfig};
use comot::fairness::{
    expected_ndcg_at_most, exposure_gap, foe_abs, policy_utility, Gain, GroupLabels,
};
use comot::foe_lp::{solve_foe_lp, FoeLpProblem, DEFAULT_RHO_GRID};
use comot::net::{Checkpoint, PotentialModel};
use comot::numerics::logsumexp;
use comot::ot::{
    build_cost, minmax_scale, sinkhorn_project, solve_assignment, solve_entropic, CostMatrix,
    DiscountVector, DoublyStochasticPolicy, Permutation, SinkhornInput,
};
use comot::sampler::{bvnd_decompose, gumms_sample, GumMsConfig};
use comot::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_cost(rng: &mut ChaCha8Rng, n: usize) -> CostMatrix {
    CostMatrix::new(Matrix::from_fn(n, n, |_, _| rng.random::<f64>())).unwrap()
}

fn random_policy(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> DoublyStochasticPolicy {
    let m = Matrix::from_fn(n, n, |_, _| rng.random::<f64>() * spread);
    sinkhorn_project(&m, 1.0, 2000, SinkhornInput::Logits).unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn path_cost(c: &CostMatrix, assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum()
}

fn c1_assignment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let perms = permutations(4);
    let start = Instant::now();
    let mut exact = 0;
    for _ in 0..200 {
        let c = random_cost(&mut rng, 4);
        let (perm, _) = solve_assignment(&c);
        let got = path_cost(&c, perm.assignment());
        let best = perms
            .iter()
            .map(|p| path_cost(&c, p))
            .fold(f64::INFINITY, f64::min);
        if got == best {
            exact += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        exact == 200 && secs < 1.0,
        format!("{exact}/200 equal to exhaustive minimum, {secs:.3} s"),
    )
}

fn c2_sinkhorn() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let (mut row, mut col, mut within) = (0.0f64, 0.0f64, 0);
    for _ in 0..50 {
        let m = Matrix::from_fn(10, 10, |_, _| rng.random::<f64>());
        let p = sinkhorn_project(&m, 0.1, 100, SinkhornInput::Logits).unwrap();
        let r = p.matrix().max_row_deviation();
        if r <= 1e-6 {
            within += 1;
        }
        row = row.max(r);
        col = col.max(p.matrix().max_col_deviation());
    }
    outcome(
        row <= 1e-6 && col <= 1e-12,
        format!(
            "{within}/50 inputs with row dev <= 1e-6, max row dev {row:.2e}, max col dev {col:.2e}"
        ),
    )
}

/// `⟨C,P⟩ − εH(P)` and the dual, written out directly.
fn primal_dual_gap(c: &CostMatrix, f: &[f64], g: &[f64], eps: f64) -> (f64, Matrix) {
    let n = c.n();
    let p = Matrix::from_fn(n, n, |i, j| ((f[i] + g[j] - c[(i, j)]) / eps).exp());
    let mut primal = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = p[(i, j)];
            primal += c[(i, j)] * x + eps * x * (x.ln() - 1.0);
        }
    }
    let dual = f.iter().sum::<f64>() + g.iter().sum::<f64>() - eps * p.sum();
    (primal - dual, p)
}

fn c3_duality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (mut worst_gap, mut worst_ds) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let c = random_cost(&mut rng, 5);
        let sol = solve_entropic(&c, 0.1, 100_000, 1e-13).unwrap();
        let (gap, p) = primal_dual_gap(&c, &sol.potentials.f, &sol.potentials.g, 0.1);
        worst_gap = worst_gap.max(gap.abs());
        worst_ds = worst_ds.max(p.max_row_deviation().max(p.max_col_deviation()));
    }
    outcome(
        worst_gap <= 1e-6 && worst_ds <= 1e-8,
        format!("max |gap| {worst_gap:.2e}, max marginal dev {worst_ds:.2e} over 50 instances"),
    )
}

fn c4_small_epsilon() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let c = random_cost(&mut rng, 5);
        let (_, exact) = solve_assignment(&c);
        let sol = solve_entropic(&c, 1e-3, 200_000, 1e-12).unwrap();
        let cost = c.transport_cost(&sol.plan);
        worst = worst.max((cost - exact).abs() / exact.abs());
    }
    outcome(
        worst <= 0.01,
        format!("max relative deviation from assignment cost {worst:.2e} over 50 instances"),
    )
}

// Gradient check: an independent forward pass with cached activations so
// that every parameter can be perturbed cheaply.

struct Params<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    g1: &'a [f64],
    s1: &'a [f64],
    w2: &'a [f64],
    b2: &'a [f64],
    g2: &'a [f64],
    s2: &'a [f64],
    w3: &'a [f64],
    b3: f64,
    clamp: f64,
}

fn norm_affine_relu(
    z: &[f64],
    gain: &[f64],
    shift: &[f64],
    out: &mut [f64],
    pattern: &mut Vec<bool>,
) {
    let h = z.len() as f64;
    let mean = z.iter().sum::<f64>() / h;
    let var = z.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / h;
    let r = 1.0 / (var + 1e-5).sqrt();
    for k in 0..z.len() {
        let y = (z[k] - mean) * r * gain[k] + shift[k];
        pattern.push(y > 0.0);
        out[k] = y.max(0.0);
    }
}

struct DocCache {
    a1: Vec<f64>,
    z2: Vec<f64>,
    pattern: Vec<bool>,
}

fn layer_one(x: f64, p: &Params, pattern: &mut Vec<bool>) -> Vec<f64> {
    let z1: Vec<f64> = (0..p.w1.len()).map(|k| x * p.w1[k] + p.b1[k]).collect();
    let mut a1 = vec![0.0; z1.len()];
    norm_affine_relu(&z1, p.g1, p.s1, &mut a1, pattern);
    a1
}

fn pre_two(a1: &[f64], p: &Params) -> Vec<f64> {
    let h = a1.len();
    let mut z2 = p.b2.to_vec();
    for k in 0..h {
        if a1[k] != 0.0 {
            for m in 0..h {
                z2[m] += a1[k] * p.w2[k * h + m];
            }
        }
    }
    z2
}

fn tail(z2: &[f64], p: &Params, pattern: &mut Vec<bool>) -> f64 {
    let mut a2 = vec![0.0; z2.len()];
    norm_affine_relu(z2, p.g2, p.s2, &mut a2, pattern);
    let z3 = a2.iter().zip(p.w3).map(|(a, w)| a * w).sum::<f64>() + p.b3;
    pattern.push(z3 > -p.clamp && z3 < p.clamp);
    z3.clamp(-p.clamp, p.clamp)
}

struct LossInputs {
    cost: Matrix,
    weights: Matrix,
    eps: f64,
    lambda: f64,
    iters: usize,
}

/// Total loss from potentials, plus the sign of the exposure gap.
fn loss_from_potentials(f: &[f64], li: &LossInputs) -> (f64, bool) {
    let n = f.len();
    let eps = li.eps;
    let g: Vec<f64> = (0..n)
        .map(|j| {
            let col: Vec<f64> = (0..n).map(|i| (f[i] - li.cost[(i, j)]) / eps).collect();
            -eps * logsumexp(&col)
        })
        .collect();
    let p = Matrix::from_fn(n, n, |i, j| ((f[i] + g[j] - li.cost[(i, j)]) / eps).exp());
    let mut a = p.map(|x| x / eps);
    for _ in 0..li.iters {
        for i in 0..n {
            let l = logsumexp(a.row(i));
            a.row_mut(i).iter_mut().for_each(|x| *x -= l);
        }
        for j in 0..n {
            let col: Vec<f64> = (0..n).map(|i| a[(i, j)]).collect();
            let l = logsumexp(&col);
            (0..n).for_each(|i| a[(i, j)] -= l);
        }
    }
    let gap = a.map(f64::exp).dot(&li.weights);
    let mot = eps * p.sum() - f.iter().sum::<f64>() - g.iter().sum::<f64>();
    (mot + li.lambda * gap.abs(), gap > 0.0)
}

struct GradStats {
    checked: usize,
    skipped: usize,
    failed: usize,
    worst_rel: f64,
}

fn check_pair(
    model: &PotentialModel,
    prep: &PreparedQuery,
    cfg: &TrainConfig,
    stats: &mut GradStats,
) {
    let (_, analytic) = loss_and_gradients(model, prep, cfg, "fd").unwrap();
    let ps = model.parameters();
    let base = Params {
        w1: ps[0].as_slice(),
        b1: ps[1].as_slice(),
        g1: ps[2].as_slice(),
        s1: ps[3].as_slice(),
        w2: ps[4].as_slice(),
        b2: ps[5].as_slice(),
        g2: ps[6].as_slice(),
        s2: ps[7].as_slice(),
        w3: ps[8].as_slice(),
        b3: ps[9].as_slice()[0],
        clamp: model.clamp_bound(),
    };
    let li = LossInputs {
        cost: prep.cost.as_matrix().clone(),
        weights: prep.exposure_weights.clone().unwrap(),
        eps: cfg.epsilon,
        lambda: cfg.lambda_fair,
        iters: cfg.sinkhorn_iters,
    };
    let h_dim = base.w1.len();
    let docs: Vec<DocCache> = prep
        .u_scaled
        .iter()
        .map(|&x| {
            let mut pattern = Vec::new();
            let a1 = layer_one(x, &base, &mut pattern);
            let z2 = pre_two(&a1, &base);
            tail(&z2, &base, &mut pattern);
            DocCache { a1, z2, pattern }
        })
        .collect();
    let f0: Vec<f64> = docs
        .iter()
        .map(|d| tail(&d.z2, &base, &mut Vec::new()))
        .collect();
    let (_, sign0) = loss_from_potentials(&f0, &li);
    let step = 1e-3;

    // Evaluates the loss with one parameter shifted by `delta`; `None` when
    // the shift crosses a ReLU, clamp, or absolute-value kink.
    let eval = |group: usize, idx: usize, delta: f64| -> Option<f64> {
        let mut f = Vec::with_capacity(docs.len());
        for (d, &x) in docs.iter().zip(&prep.u_scaled) {
            let mut pattern = Vec::with_capacity(d.pattern.len());
            let value = match group {
                0..=3 => {
                    let mut v = ps[group].as_slice().to_vec();
                    v[idx] += delta;
                    let mut p = Params { ..base };
                    match group {
                        0 => p.w1 = &v,
                        1 => p.b1 = &v,
                        2 => p.g1 = &v,
                        _ => p.s1 = &v,
                    }
                    let a1 = layer_one(x, &p, &mut pattern);
                    let z2 = pre_two(&a1, &p);
                    tail(&z2, &p, &mut pattern)
                }
                4 | 5 => {
                    let mut pattern1 = d.pattern[..h_dim].to_vec();
                    pattern.append(&mut pattern1);
                    let mut z2 = d.z2.clone();
                    if group == 4 {
                        let (k, m) = (idx / h_dim, idx % h_dim);
                        z2[m] += delta * d.a1[k];
                    } else {
                        z2[idx] += delta;
                    }
                    tail(&z2, &base, &mut pattern)
                }
                _ => {
                    pattern.extend_from_slice(&d.pattern[..h_dim]);
                    let mut v = ps[group].as_slice().to_vec();
                    v[idx] += delta;
                    let mut p = Params { ..base };
                    match group {
                        6 => p.g2 = &v,
                        7 => p.s2 = &v,
                        8 => p.w3 = &v,
                        _ => p.b3 = v[0],
                    }
                    tail(&d.z2, &p, &mut pattern)
                }
            };
            if pattern != d.pattern {
                return None;
            }
            f.push(value);
        }
        let (loss, sign) = loss_from_potentials(&f, &li);
        (sign == sign0).then_some(loss)
    };

    for (group, grad) in analytic.iter().enumerate() {
        for (idx, &a) in grad.as_slice().iter().enumerate() {
            // Five-point central stencil: the loss carries λ = 1e5, so a
            // wider step keeps rounding noise under the absolute floor.
            let points = [2.0, 1.0, -1.0, -2.0].map(|k| eval(group, idx, k * step));
            let [Some(p2), Some(p1), Some(m1), Some(m2)] = points else {
                stats.skipped += 1;
                continue;
            };
            let fd = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * step);
            let err = (a - fd).abs();
            let scale = a.abs().max(fd.abs());
            stats.checked += 1;
            if err > (1e-4 * scale).max(1e-7) {
                stats.failed += 1;
            }
            if scale > 1e-7 {
                stats.worst_rel = stats.worst_rel.max(err / scale);
            }
        }
    }
}

fn c5_gradients() -> Outcome {
    let start = Instant::now();
    let cfg = TrainConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut stats = GradStats {
        checked: 0,
        skipped: 0,
        failed: 0,
        worst_rel: 0.0,
    };
    for pair in 0..20u64 {
        let mut model = PotentialModel::new(cfg.hidden, cfg.clamp, 1000 + pair);
        for (k, p) in model.parameters_mut().iter_mut().enumerate() {
            match k {
                1 | 3 | 5 | 7 | 9 => p
                    .as_mut_slice()
                    .iter_mut()
                    .for_each(|x| *x = rng.random_range(-0.5..0.5)),
                2 | 6 => p
                    .as_mut_slice()
                    .iter_mut()
                    .for_each(|x| *x = rng.random_range(0.5..1.5)),
                _ => {}
            }
        }
        let n = rng.random_range(3..=6);
        let ds = synth_generate(&SynthConfig {
            split: format!("fd{pair}"),
            n_queries: 1,
            min_docs: n,
            max_docs: n,
            bias: 0.3,
            seed: pair,
        })
        .unwrap();
        let prep = PreparedQuery::from_query(&ds.queries[0], cfg.epsilon).unwrap();
        check_pair(&model, &prep, &cfg, &mut stats);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        stats.failed == 0 && secs < 60.0,
        format!(
            "{} checked, {} failed, {} skipped at kinks, worst rel err {:.2e}, {secs:.1} s",
            stats.checked, stats.failed, stats.skipped, stats.worst_rel
        ),
    )
}

fn c6_lp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let alternating = |n: usize| GroupLabels::new((0..n).map(|i| i % 2 == 0).collect());
    let mut worst_a = 0.0f64;
    for _ in 0..50 {
        let c = random_cost(&mut rng, 5);
        let (_, best) = solve_assignment(&c);
        let sol =
            solve_foe_lp(&FoeLpProblem::new(c, alternating(5), f64::INFINITY).unwrap()).unwrap();
        worst_a = worst_a.max((sol.cost - best).abs());
    }
    let ds = synth_generate(&SynthConfig {
        split: "lp".into(),
        n_queries: 20,
        min_docs: 5,
        max_docs: 12,
        bias: 0.3,
        seed: 6,
    })
    .unwrap();
    let (mut foe_excess, mut increases) = (f64::NEG_INFINITY, 0);
    for q in &ds.queries {
        let c = build_cost(&minmax_scale(&q.scores).unwrap()).unwrap();
        let v = DiscountVector::new(q.len());
        let mut prev = f64::INFINITY;
        for rho in DEFAULT_RHO_GRID {
            let sol = solve_foe_lp(&FoeLpProblem::new(c.clone(), q.groups.clone(), rho).unwrap())
                .unwrap();
            foe_excess = foe_excess.max(foe_abs(&sol.policy, &q.groups, &v).unwrap() - rho);
            if sol.cost > prev + 1e-9 {
                increases += 1;
            }
            prev = sol.cost;
        }
    }
    outcome(
        worst_a <= 1e-9 && foe_excess <= 1e-8 && increases == 0,
        format!(
            "(a) max |LP − assignment| {worst_a:.2e} on 50; (b) max FOE − ρ {foe_excess:.2e}, {increases} cost increases over 20 queries"
        ),
    )
}

fn c7_bvnd() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let (mut recon, mut alpha_err, mut max_k) = (0.0f64, 0.0f64, 0);
    for _ in 0..50 {
        let p = random_policy(&mut rng, 6, 4.0);
        let d = bvnd_decompose(&p, 1e-9).unwrap();
        recon = recon.max(d.reconstruct().max_abs_diff(p.matrix()));
        alpha_err = alpha_err.max((d.components.iter().map(|c| c.alpha).sum::<f64>() - 1.0).abs());
        max_k = max_k.max(d.len());
    }
    outcome(
        recon <= 1e-8 && alpha_err <= 1e-10 && max_k <= 26,
        format!("max recon err {recon:.2e}, max |Σα − 1| {alpha_err:.2e}, max k {max_k} over 50"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn c8_gumms() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let cfg = GumMsConfig::default();
    let mut improved = 0;
    let mut bad_samples = 0;
    let mut pairs = Vec::new();
    for policy_idx in 0..10u64 {
        let p = random_policy(&mut rng, 10, 5.0);
        let mut errs = [Vec::new(), Vec::new()];
        for seed in 0..5u64 {
            let mut srng = ChaCha8Rng::seed_from_u64(policy_idx * 100 + seed);
            for (slot, k) in [50usize, 5000].into_iter().enumerate() {
                let mut est = Matrix::zeros(10, 10);
                for _ in 0..k {
                    let s = gumms_sample(&p, &cfg, &mut srng).unwrap();
                    if !s.is_valid() {
                        bad_samples += 1;
                    }
                    for (i, &j) in s.assignment().iter().enumerate() {
                        est[(i, j)] += 1.0 / k as f64;
                    }
                }
                let err: f64 = p
                    .matrix()
                    .as_slice()
                    .iter()
                    .zip(est.as_slice())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                errs[slot].push(err);
            }
        }
        let (m50, m5000) = (median(errs[0].clone()), median(errs[1].clone()));
        if m5000 < m50 {
            improved += 1;
        }
        pairs.push((m50, m5000));
    }
    let secs = start.elapsed().as_secs_f64();
    let mean50 = pairs.iter().map(|p| p.0).sum::<f64>() / 10.0;
    let mean5000 = pairs.iter().map(|p| p.1).sum::<f64>() / 10.0;
    outcome(
        improved == 10 && bad_samples == 0 && secs < 120.0,
        format!(
            "{improved}/10 policies improve (mean median err {mean50:.4} at k=50, {mean5000:.5} at k=5000), {bad_samples} invalid samples, {secs:.1} s"
        ),
    )
}

fn c9_linearity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let (mut worst_foe, mut worst_ndcg) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = rng.random_range(10..=14);
        let p = random_policy(&mut rng, n, 4.0);
        let groups = loop {
            let g = GroupLabels::new((0..n).map(|_| rng.random_bool(0.5)).collect());
            if g.has_both_groups() {
                break g;
            }
        };
        let rel: Vec<u32> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let v = DiscountVector::new(n);
        let d = bvnd_decompose(&p, 1e-9).unwrap();
        let gap = d
            .expectation(|t| exposure_gap(t.to_matrix(), &groups, &v))
            .unwrap();
        worst_foe = worst_foe.max((gap.abs() - foe_abs(&p, &groups, &v).unwrap()).abs());
        let ndcg = d
            .expectation(|t| expected_ndcg_at_most(t.to_matrix(), &rel, 10, Gain::Exponential))
            .unwrap();
        let direct = expected_ndcg_at_most(&p, &rel, 10, Gain::Exponential).unwrap();
        worst_ndcg = worst_ndcg.max((ndcg - direct).abs());
    }
    outcome(
        worst_foe <= 1e-8 && worst_ndcg <= 1e-8,
        format!("max FOE deviation {worst_foe:.2e} (via signed gap), max nDCG@10 deviation {worst_ndcg:.2e} over 20"),
    )
}

struct RunResult {
    checkpoint: String,
    table: Vec<[u64; 4]>,
    orig_foe: f64,
    orig_ndcg: f64,
    comot_foe: f64,
    comot_ndcg: f64,
    train_secs: f64,
}

fn synthetic_splits() -> (Dataset, Dataset) {
    let make = |split: &str, seed| {
        synth_generate(&SynthConfig {
            split: split.into(),
            n_queries: 200,
            min_docs: 5,
            max_docs: 25,
            bias: 0.3,
            seed,
        })
        .unwrap()
    };
    (make("train", 1), make("test", 2))
}

fn run_directional() -> RunResult {
    let (train_ds, test_ds) = synthetic_splits();
    let cfg = TrainConfig {
        seed: 42,
        ..Default::default()
    };
    let start = Instant::now();
    let out = train(&train_ds, &cfg, &mut |_| {}).unwrap();
    let train_secs = start.elapsed().as_secs_f64();
    let mut table = Vec::new();
    let (mut of, mut on, mut cf, mut cn) = (0.0, 0.0, 0.0, 0.0);
    for q in &test_ds.queries {
        let v = DiscountVector::new(q.len());
        let orig = Permutation::from_ranking(&q.score_order())
            .unwrap()
            .to_matrix();
        of += foe_abs(&orig, &q.groups, &v).unwrap();
        on += expected_ndcg_at_most(&orig, &q.relevance, 10, Gain::Exponential).unwrap();
        let p = predict_policy(&out.model, &q.scores, &cfg).unwrap();
        let foe = foe_abs(&p, &q.groups, &v).unwrap();
        let n10 = expected_ndcg_at_most(&p, &q.relevance, 10, Gain::Exponential).unwrap();
        let n5 = expected_ndcg_at_most(&p, &q.relevance, 5, Gain::Exponential).unwrap();
        let util = policy_utility(&p, &minmax_scale(&q.scores).unwrap(), &v).unwrap();
        cf += foe;
        cn += n10;
        table.push([foe.to_bits(), n10.to_bits(), n5.to_bits(), util.to_bits()]);
    }
    let m = test_ds.len() as f64;
    RunResult {
        checkpoint: Checkpoint::from_model(&out.model, cfg.config_hash()).to_json(),
        table,
        orig_foe: of / m,
        orig_ndcg: on / m,
        comot_foe: cf / m,
        comot_ndcg: cn / m,
        train_secs,
    }
}

fn c10_directional(run: &RunResult, total: Duration) -> Outcome {
    let foe_ratio = run.comot_foe / run.orig_foe;
    let ndcg_ratio = run.comot_ndcg / run.orig_ndcg;
    outcome(
        foe_ratio <= 0.5 && ndcg_ratio >= 0.9 && total.as_secs_f64() < 600.0,
        format!(
            "FOE {:.4} → {:.4} (ratio {foe_ratio:.3}, need ≤ 0.5); nDCG@10 {:.4} → {:.4} (ratio {ndcg_ratio:.3}, need ≥ 0.9); train {:.1} s",
            run.orig_foe, run.comot_foe, run.orig_ndcg, run.comot_ndcg, run.train_secs
        ),
    )
}

fn c11_timing() -> Outcome {
    let cfg = TrainConfig::default();
    let model = PotentialModel::new(cfg.hidden, cfg.clamp, 7);
    let ds = synth_generate(&SynthConfig {
        split: "timing".into(),
        n_queries: 10,
        min_docs: 25,
        max_docs: 25,
        bias: 0.3,
        seed: 11,
    })
    .unwrap();
    let (mut t_pred, mut t_lp, mut lp_runs) = (0.0, 0.0, 0);
    for q in &ds.queries {
        let start = Instant::now();
        let p = predict_policy(&model, &q.scores, &cfg).unwrap();
        t_pred += start.elapsed().as_secs_f64();
        assert_eq!(p.n(), 25);
        let c = build_cost(&minmax_scale(&q.scores).unwrap()).unwrap();
        for rho in DEFAULT_RHO_GRID {
            let problem = FoeLpProblem::new(c.clone(), q.groups.clone(), rho).unwrap();
            let start = Instant::now();
            solve_foe_lp(&problem).unwrap();
            t_lp += start.elapsed().as_secs_f64();
            lp_runs += 1;
        }
    }
    let pred_ms = t_pred * 1e3 / ds.len() as f64;
    let lp_ms = t_lp * 1e3 / lp_runs as f64;
    outcome(
        pred_ms < lp_ms,
        format!(
            "n=25: predict {pred_ms:.3} ms, LP {lp_ms:.3} ms, ratio {:.1}x",
            lp_ms / pred_ms
        ),
    )
}

fn c12_determinism(first: &RunResult, second: &RunResult) -> Outcome {
    let same_ckpt = first.checkpoint == second.checkpoint;
    let same_table = first.table == second.table;
    outcome(
        same_ckpt && same_table,
        format!(
            "checkpoints identical: {same_ckpt}; metric tables identical: {same_table} ({} rows)",
            first.table.len()
        ),
    )
}

fn report(id: usize, name: &str, start: Instant, o: &Outcome, passed: &mut usize) {
    if o.pass {
        *passed += 1;
    }
    println!(
        "{} [{id:>2}] {name}: {} ({:.2} s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        start.elapsed().as_secs_f64()
    );
}

fn main() {
    let mut passed = 0;
    let simple: [(&str, fn() -> Outcome); 9] = [
        ("assignment oracle", c1_assignment),
        ("sinkhorn doubly-stochastic contract", c2_sinkhorn),
        ("entropic duality", c3_duality),
        ("small-epsilon consistency", c4_small_epsilon),
        ("gradient correctness", c5_gradients),
        ("LP baseline", c6_lp),
        ("Birkhoff decomposition", c7_bvnd),
        ("Gumbel matching consistency", c8_gumms),
        ("metric linearity over decomposition", c9_linearity),
    ];
    for (idx, (name, f)) in simple.into_iter().enumerate() {
        let start = Instant::now();
        let o = f();
        report(idx + 1, name, start, &o, &mut passed);
    }

    let start = Instant::now();
    let first = run_directional();
    let o = c10_directional(&first, start.elapsed());
    report(
        10,
        "directional fairness reproduction",
        start,
        &o,
        &mut passed,
    );

    let start = Instant::now();
    let o = c11_timing();
    report(11, "timing direction", start, &o, &mut passed);

    let start = Instant::now();
    let second = run_directional();
    let o = c12_determinism(&first, &second);
    report(12, "determinism", start, &o, &mut passed);

    println!("acceptance: {passed}/12 criteria passed");
}
