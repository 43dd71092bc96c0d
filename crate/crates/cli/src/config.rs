//! Command-line flags and the resolved run configuration.
//!
//! Resolution order: built-in defaults, then flags (and `COMOT_OUT_DIR`),
//! then the JSON config file, whose fields win over everything else.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use comot::comot::TrainConfig;
use comot::data::SynthConfig;
use comot::fairness::Gain;
use comot::foe_lp::DEFAULT_RHO_GRID;
use comot::ot::SinkhornInput;
use comot::sampler::GumMsConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const OUT_DIR_ENV: &str = "COMOT_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    #[default]
    Train,
    Predict,
    Evaluate,
    Baseline,
    Sample,
    Synth,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Train => "train",
            CommandKind::Predict => "predict",
            CommandKind::Evaluate => "evaluate",
            CommandKind::Baseline => "baseline",
            CommandKind::Sample => "sample",
            CommandKind::Synth => "synth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GainArg {
    Exponential,
    Linear,
}

impl From<GainArg> for Gain {
    fn from(g: GainArg) -> Self {
        match g {
            GainArg::Exponential => Gain::Exponential,
            GainArg::Linear => Gain::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SinkhornInputArg {
    Logits,
    #[value(name = "log_probabilities", alias = "log-probabilities")]
    LogProbabilities,
}

impl From<SinkhornInputArg> for SinkhornInput {
    fn from(s: SinkhornInputArg) -> Self {
        match s {
            SinkhornInputArg::Logits => SinkhornInput::Logits,
            SinkhornInputArg::LogProbabilities => SinkhornInput::LogProbabilities,
        }
    }
}

/// Everything a run needs, after flags and the config file are merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Drives every random stream of the run.
    pub seed: u64,
    pub format: ReportFormat,
    /// Worker threads for per-query fan-out; 0 uses every core.
    pub workers: usize,
    pub gain: Gain,
    pub train: TrainConfig,
    pub gumms: GumMsConfig,
    /// Fairness levels of the LP sweep.
    #[serde(with = "rho_list")]
    pub rho: Vec<f64>,
    /// Adds the LP policy at this level as an evaluation source.
    pub lp_rho: Option<f64>,
    /// Significance threshold of the paired t-tests.
    pub alpha: f64,
    pub k_grid: Vec<usize>,
    pub repeats: usize,
    /// Sampled rankings written per query and sampler.
    pub samples: usize,
    /// Mass left undecomposed by the Birkhoff sampler.
    pub bvn_tolerance: f64,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: CommandKind::default(),
            train_path: None,
            test_path: None,
            model_path: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            format: ReportFormat::default(),
            workers: 0,
            gain: Gain::default(),
            train: TrainConfig::default(),
            gumms: GumMsConfig::default(),
            rho: DEFAULT_RHO_GRID.to_vec(),
            lp_rho: None,
            alpha: 0.01,
            k_grid: vec![50, 100, 500, 1000, 5000],
            repeats: 5,
            samples: 10,
            bvn_tolerance: 1e-6,
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.gumms.seed = seed;
        self.synth.seed = seed;
    }

    /// Checks parameter ranges and that every path the command reads exists.
    pub fn validate(&self) -> Result<()> {
        let required: &[(&str, &Option<PathBuf>)] = match self.command {
            CommandKind::Train => &[("train", &self.train_path)],
            CommandKind::Predict | CommandKind::Evaluate | CommandKind::Sample => {
                &[("model", &self.model_path), ("test", &self.test_path)]
            }
            CommandKind::Baseline => &[("test", &self.test_path)],
            CommandKind::Synth => &[],
        };
        for (flag, path) in required {
            let Some(path) = path else {
                bail!("--{flag} is required for `{}`", self.command.name());
            };
            ensure!(
                path.is_file(),
                "{} does not exist or is not a file",
                path.display()
            );
        }
        self.train.validate()?;
        self.gumms.validate()?;
        ensure!(!self.rho.is_empty(), "rho list is empty");
        for &r in &self.rho {
            ensure!(r >= 0.0, "rho must be nonnegative, got {r}");
        }
        if let Some(r) = self.lp_rho {
            ensure!(r >= 0.0, "lp_rho must be nonnegative, got {r}");
        }
        ensure!(
            self.alpha > 0.0 && self.alpha < 1.0,
            "alpha must lie in (0, 1), got {}",
            self.alpha
        );
        ensure!(!self.k_grid.is_empty(), "k grid is empty");
        ensure!(
            self.k_grid.iter().all(|&k| k > 0),
            "k grid values must be positive"
        );
        ensure!(
            self.repeats > 0 && self.repeats <= 1 << 24,
            "repeats must lie in 1..=16777216, got {}",
            self.repeats
        );
        ensure!(
            self.bvn_tolerance > 0.0 && self.bvn_tolerance < 1.0,
            "bvn_tolerance must lie in (0, 1), got {}",
            self.bvn_tolerance
        );
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "comot",
    version,
    about = "Fair stochastic re-ranking: train, predict, evaluate, LP baseline, sampling"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON file of RunConfig fields; its values override flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = OUT_DIR_ENV, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Report format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<ReportFormat>,

    /// Seed of every random stream (init, shuffling, sampling, synthesis).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for per-query work (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a potential model and write its checkpoint and trace.
    Train(TrainArgs),
    /// Write the policy of every test query.
    Predict(ModelArgs),
    /// Per-query metrics for the original ranking, CoMOT and optionally the LP.
    Evaluate(EvaluateArgs),
    /// Solve the FOE-constrained LP over a grid of fairness levels.
    Baseline(BaselineArgs),
    /// Sample rankings from predicted policies and measure the estimate error.
    Sample(SampleArgs),
    /// Generate a synthetic biased dataset.
    Synth(SynthArgs),
}

impl Command {
    pub fn kind(&self) -> CommandKind {
        match self {
            Command::Train(_) => CommandKind::Train,
            Command::Predict(_) => CommandKind::Predict,
            Command::Evaluate(_) => CommandKind::Evaluate,
            Command::Baseline(_) => CommandKind::Baseline,
            Command::Sample(_) => CommandKind::Sample,
            Command::Synth(_) => CommandKind::Synth,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training split (JSONL).
    #[arg(long, value_name = "PATH")]
    pub train: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: TrainFlags,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    /// Entropic regularization.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Weight of the exposure-gap penalty.
    #[arg(long)]
    pub lambda_fair: Option<f64>,
    /// Unrolled Sinkhorn rounds.
    #[arg(long)]
    pub sinkhorn_iters: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Bound on the potential output.
    #[arg(long)]
    pub clamp: Option<f64>,
    /// Hidden layer width.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Visit queries in file order every epoch.
    #[arg(long)]
    pub no_shuffle: bool,
    /// Stop once the mean loss stops changing.
    #[arg(long)]
    pub early_stop: bool,
    /// How the Sinkhorn layer reads the transport plan.
    #[arg(long, value_enum)]
    pub sinkhorn_input: Option<SinkhornInputArg>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Test split (JSONL).
    #[arg(long, value_name = "PATH")]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: ModelArgs,
    /// Also evaluate the exact LP policy at this fairness level.
    #[arg(long)]
    pub lp_rho: Option<f64>,
    /// Significance threshold for the paired t-tests.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Relevance gain in nDCG.
    #[arg(long, value_enum)]
    pub gain: Option<GainArg>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_name = "PATH")]
    pub test: Option<PathBuf>,
    /// Comma-separated fairness levels; `inf` drops the constraint.
    #[arg(long, value_delimiter = ',')]
    pub rho: Option<Vec<f64>>,
    /// Relevance gain in nDCG.
    #[arg(long, value_enum)]
    pub gain: Option<GainArg>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub data: ModelArgs,
    /// Comma-separated sample counts of the error curve.
    #[arg(long, value_delimiter = ',')]
    pub k_grid: Option<Vec<usize>>,
    /// Independent repeats of the error curve.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Rankings written per query and sampler.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Gumbel noise scale (default 1/sqrt(n)).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Gumbel matching temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Mass the Birkhoff decomposition may leave undecomposed.
    #[arg(long)]
    pub bvn_tolerance: Option<f64>,
    /// Relevance gain in nDCG.
    #[arg(long, value_enum)]
    pub gain: Option<GainArg>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Split name; also the output file stem.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub n_queries: Option<usize>,
    #[arg(long)]
    pub min_docs: Option<usize>,
    #[arg(long)]
    pub max_docs: Option<usize>,
    /// Score penalty of protected documents.
    #[arg(long)]
    pub bias: Option<f64>,
}

/// JSON has no infinity, so an unconstrained level is written as `"inf"`.
mod rho_list {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Level {
        Finite(f64),
        Named(String),
    }

    pub fn serialize<S: Serializer>(rhos: &[f64], s: S) -> Result<S::Ok, S::Error> {
        rhos.iter()
            .map(|&r| {
                if r.is_finite() {
                    Level::Finite(r)
                } else {
                    Level::Named(r.to_string())
                }
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Level>::deserialize(d)?
            .into_iter()
            .map(|l| match l {
                Level::Finite(r) => Ok(r),
                Level::Named(name) => name
                    .parse::<f64>()
                    .map_err(|_| serde::de::Error::custom(format!("bad rho {name:?}"))),
            })
            .collect()
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Cli {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig {
            command: self.command.kind(),
            ..RunConfig::default()
        };
        self.apply_flags(&mut cfg);
        if let Some(path) = &self.config {
            cfg = apply_config_file(cfg, path)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_flags(&self, cfg: &mut RunConfig) {
        set(&mut cfg.out_dir, self.out_dir.clone());
        set(&mut cfg.format, self.format);
        set(&mut cfg.workers, self.workers);
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        match &self.command {
            Command::Train(a) => {
                cfg.train_path = a.train.clone();
                let h = &a.hyper;
                let t = &mut cfg.train;
                set(&mut t.epsilon, h.epsilon);
                set(&mut t.lambda_fair, h.lambda_fair);
                set(&mut t.sinkhorn_iters, h.sinkhorn_iters);
                set(&mut t.epochs, h.epochs);
                set(&mut t.optimizer.learning_rate, h.learning_rate);
                set(&mut t.optimizer.weight_decay, h.weight_decay);
                set(&mut t.clamp, h.clamp);
                set(&mut t.hidden, h.hidden);
                set(&mut t.sinkhorn_input, h.sinkhorn_input.map(Into::into));
                if h.no_shuffle {
                    t.shuffle = false;
                }
                if h.early_stop {
                    t.early_stop = true;
                }
            }
            Command::Predict(a) => apply_model_args(cfg, a),
            Command::Evaluate(a) => {
                apply_model_args(cfg, &a.data);
                cfg.lp_rho = a.lp_rho.or(cfg.lp_rho);
                set(&mut cfg.alpha, a.alpha);
                set(&mut cfg.gain, a.gain.map(Into::into));
            }
            Command::Baseline(a) => {
                cfg.test_path = a.test.clone();
                set(&mut cfg.rho, a.rho.clone());
                set(&mut cfg.gain, a.gain.map(Into::into));
            }
            Command::Sample(a) => {
                apply_model_args(cfg, &a.data);
                set(&mut cfg.k_grid, a.k_grid.clone());
                set(&mut cfg.repeats, a.repeats);
                set(&mut cfg.samples, a.samples);
                if a.sigma.is_some() {
                    cfg.gumms.sigma = a.sigma;
                }
                set(&mut cfg.gumms.tau, a.tau);
                set(&mut cfg.bvn_tolerance, a.bvn_tolerance);
                set(&mut cfg.gain, a.gain.map(Into::into));
            }
            Command::Synth(a) => {
                set(&mut cfg.synth.split, a.split.clone());
                set(&mut cfg.synth.n_queries, a.n_queries);
                set(&mut cfg.synth.min_docs, a.min_docs);
                set(&mut cfg.synth.max_docs, a.max_docs);
                set(&mut cfg.synth.bias, a.bias);
            }
        }
    }
}

fn apply_model_args(cfg: &mut RunConfig, a: &ModelArgs) {
    cfg.model_path = a.model.clone();
    cfg.test_path = a.test.clone();
}

/// Overlays a JSON config file on `cfg`. Nested objects merge key by key.
pub fn apply_config_file(cfg: RunConfig, path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let overlay: Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing config file {}", path.display()))?;
    overlay_config(cfg, overlay).with_context(|| format!("config file {}", path.display()))
}

pub fn overlay_config(cfg: RunConfig, overlay: Value) -> Result<RunConfig> {
    let Value::Object(fields) = &overlay else {
        bail!("config must be a JSON object");
    };
    if let Some(cmd) = fields.get("command") {
        let cmd: CommandKind = serde_json::from_value(cmd.clone())?;
        ensure!(
            cmd == cfg.command,
            "config names command `{}` but `{}` was invoked",
            cmd.name(),
            cfg.command.name()
        );
    }
    for section in ["train", "gumms", "synth"] {
        if fields.get(section).and_then(|s| s.get("seed")).is_some() {
            bail!("{section}.seed cannot be set on its own; set the top-level seed");
        }
    }
    let seed = match fields.get("seed") {
        Some(s) => Some(
            s.as_u64()
                .with_context(|| format!("seed must be a nonnegative integer, got {s}"))?,
        ),
        None => None,
    };
    let mut base = serde_json::to_value(&cfg)?;
    merge(&mut base, overlay.clone());
    let mut merged: RunConfig = serde_json::from_value(base)?;
    check_known_keys(&overlay, &serde_json::to_value(&merged)?, "")?;
    if let Some(seed) = seed {
        merged.set_seed(seed);
    }
    Ok(merged)
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Nested sections ignore unknown keys when deserializing, so typos are
/// caught by comparing against the re-serialized result.
fn check_known_keys(overlay: &Value, resolved: &Value, prefix: &str) -> Result<()> {
    if let (Value::Object(o), Value::Object(r)) = (overlay, resolved) {
        for (k, v) in o {
            let path = if prefix.is_empty() {
                k.clone()
            } else {
                format!("{prefix}.{k}")
            };
            match r.get(k) {
                Some(inner) => check_known_keys(v, inner, &path)?,
                None => bail!("unknown config key `{path}`"),
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("comot").chain(args.iter().copied())).unwrap()
    }

    fn resolve_unchecked(cli: &Cli) -> RunConfig {
        let mut cfg = RunConfig {
            command: cli.command.kind(),
            ..RunConfig::default()
        };
        cli.apply_flags(&mut cfg);
        cfg
    }

    #[test]
    fn flags_reach_nested_configs() {
        let cli = parse(&[
            "train",
            "--train",
            "x.jsonl",
            "--epochs",
            "3",
            "--learning-rate",
            "0.01",
            "--sinkhorn-input",
            "log_probabilities",
            "--no-shuffle",
            "--seed",
            "9",
        ]);
        let cfg = resolve_unchecked(&cli);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.optimizer.learning_rate, 0.01);
        assert_eq!(cfg.train.sinkhorn_input, SinkhornInput::LogProbabilities);
        assert!(!cfg.train.shuffle);
        assert_eq!((cfg.train.seed, cfg.gumms.seed, cfg.synth.seed), (9, 9, 9));
    }

    #[test]
    fn default_rho_grid_is_standard_grid() {
        let cli = parse(&["baseline", "--test", "t.jsonl"]);
        assert_eq!(resolve_unchecked(&cli).rho, DEFAULT_RHO_GRID.to_vec());
        let cli = parse(&["baseline", "--test", "t.jsonl", "--rho", "0.1,inf"]);
        assert_eq!(resolve_unchecked(&cli).rho, vec![0.1, f64::INFINITY]);
    }

    #[test]
    fn config_file_overrides_flags() {
        let cli = parse(&[
            "train",
            "--epochs",
            "3",
            "--epsilon",
            "0.2",
            "--format",
            "json",
        ]);
        let cfg = resolve_unchecked(&cli);
        let cfg = overlay_config(
            cfg,
            json!({"train": {"epochs": 7}, "format": "csv", "seed": 4}),
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.epsilon, 0.2);
        assert_eq!(cfg.format, ReportFormat::Csv);
        assert_eq!((cfg.seed, cfg.train.seed), (4, 4));
    }

    #[test]
    fn config_file_rejects_unknown_and_conflicting_keys() {
        let base = || resolve_unchecked(&parse(&["train"]));
        assert!(overlay_config(base(), json!({"trian": {}})).is_err());
        assert!(overlay_config(base(), json!({"train": {"epoch": 2}})).is_err());
        assert!(overlay_config(base(), json!({"train": {"seed": 2}})).is_err());
        assert!(overlay_config(base(), json!({"command": "synth"})).is_err());
        assert!(overlay_config(base(), json!({"command": "train"})).is_ok());
    }

    #[test]
    fn validation_requires_existing_paths() {
        let cfg = resolve_unchecked(&parse(&["train", "--train", "/nonexistent/x.jsonl"]));
        assert!(cfg.validate().is_err());
        let cfg = resolve_unchecked(&parse(&["evaluate", "--test", "/nonexistent"]));
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("--model"), "{err}");
        let cfg = resolve_unchecked(&parse(&["synth"]));
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_ranges() {
        let mut cfg = resolve_unchecked(&parse(&["synth"]));
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = resolve_unchecked(&parse(&["synth"]));
        cfg.k_grid = vec![10, 0];
        assert!(cfg.validate().is_err());
        let mut cfg = resolve_unchecked(&parse(&["synth"]));
        cfg.rho = vec![-0.1];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn resolved_config_round_trips_through_json() {
        let mut cfg = resolve_unchecked(&parse(&["sample", "--k-grid", "5", "--sigma", "0.3"]));
        cfg.rho.push(f64::INFINITY);
        let back: RunConfig = serde_json::from_value(serde_json::to_value(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
