//! Experiment configuration, seeded trial orchestration and result files.
//!
//! A run is a pure function of its configuration: every trial derives its
//! own seed from the root seed and its index, trials run on a worker pool,
//! and rows are written in trial order. Wall-clock timings go to a separate
//! file so the main CSV stays byte-identical across runs.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};

use crate::baseline::{baseline_sample_size, best_agreement, DEFAULT_SEARCH_CAP};
use crate::bits::{Conjunction, Hypothesis};
use crate::error::Error;
use crate::exact::{inverse_noise, is_kwise_independent, observed_joint, push_forward_noise, ExactDist, MAX_EXACT_DIM};
use crate::learner::{list_learn, true_errors, ErrorMethod, LearnConfig, Mode, NoisyOracle, OrientationRule};
use crate::lowerbound::{lowerbound_csv, lowerbound_probe, Family, LowerboundRow};
use crate::model::{noisy_oracle, GenerativeDist, NoiseVector};
use crate::rng::{child_rng, derive_seed, Purpose};

pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const LEARN_CSV_HEADER: &str =
    "trial,seed,n,s_after_pairwise,s_after_sensitivity,list_size,best_error,success,target_in_pairwise,large_s,degenerate,status";
pub const BASELINE_CSV_HEADER: &str = "trial,seed,m,best,best_disagreement,true_error,success,status";
pub const INDEP_CSV_HEADER: &str =
    "trial,seed,n,k,clean_independent,noisy_independent,clean_violation,noisy_violation,label_mass_deviation,roundtrip_error,success,status";
pub const TIMING_CSV_HEADER: &str = "trial,wall_ms";

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "ATTRNOISE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Learn,
    Baseline,
    Lowerbound,
    IndepCheck,
    OracleDump,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Learn => "learn",
            Subcommand::Baseline => "baseline",
            Subcommand::Lowerbound => "lowerbound",
            Subcommand::IndepCheck => "indep-check",
            Subcommand::OracleDump => "oracle-dump",
        }
    }
}

/// Noise rates: a scalar for every bit, an explicit list, or fresh
/// per-trial draws uniform on `[0, b)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum NuSpec {
    Scalar(f64),
    PerBit(Vec<f64>),
    UniformBelow { uniform_below: f64 },
}

impl<'de> Deserialize<'de> for NuSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Scalar(f64),
            PerBit(Vec<f64>),
            Below { uniform_below: f64 },
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Scalar(v) => Ok(NuSpec::Scalar(v)),
            Raw::PerBit(v) => Ok(NuSpec::PerBit(v)),
            Raw::Below { uniform_below } => Ok(NuSpec::UniformBelow { uniform_below }),
            Raw::Text(s) => s
                .strip_prefix("uniform_below:")
                .and_then(|b| b.trim().parse().ok())
                .map(|uniform_below| NuSpec::UniformBelow { uniform_below })
                .ok_or_else(|| serde::de::Error::custom(format!("unrecognised noise spec `{s}`"))),
        }
    }
}

impl NuSpec {
    fn upper(&self) -> f64 {
        match self {
            NuSpec::Scalar(v) => *v,
            NuSpec::PerBit(v) => v.iter().copied().fold(0.0, f64::max),
            NuSpec::UniformBelow { uniform_below } => *uniform_below,
        }
    }

    fn lower(&self) -> f64 {
        match self {
            NuSpec::Scalar(v) => *v,
            NuSpec::PerBit(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
            NuSpec::UniformBelow { uniform_below } => uniform_below.min(0.0),
        }
    }

    /// Rates for one trial.
    pub fn draw(&self, n: usize, trial_seed: u64) -> Vec<f64> {
        match self {
            NuSpec::Scalar(v) => vec![*v; n],
            NuSpec::PerBit(v) => v.clone(),
            NuSpec::UniformBelow { uniform_below } => {
                let mut rng = child_rng(trial_seed, 0, Purpose::NoiseRates);
                (0..n).map(|_| rng.random::<f64>() * uniform_below).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistSpecInner {
    Uniform,
    Product {
        #[serde(default)]
        p: Option<Vec<f64>>,
        #[serde(default)]
        bias: Option<f64>,
    },
    CorrelatedPairs {
        base_bias: f64,
        rho: f64,
    },
    ParityExtension {
        free: usize,
        /// 1-based free-bit indices per derived coordinate.
        parities: Vec<Vec<usize>>,
    },
    FullParityExtension {
        free: usize,
    },
}

/// Ground-truth distribution as written in a config: a bare kind name
/// (`"uniform"`, `"full_parity_extension:3"`) or a tagged object.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DistSpec(pub DistSpecInner);

impl Default for DistSpec {
    fn default() -> Self {
        DistSpec(DistSpecInner::Uniform)
    }
}

impl<'de> Deserialize<'de> for DistSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Full(DistSpecInner),
        }
        match Raw::deserialize(d)? {
            Raw::Full(inner) => Ok(DistSpec(inner)),
            Raw::Text(s) => {
                let (kind, arg) = s.split_once(':').map_or((s.as_str(), None), |(a, b)| (a, Some(b)));
                let num = |what: &str| -> Result<f64, D::Error> {
                    arg.and_then(|a| a.trim().parse().ok())
                        .ok_or_else(|| serde::de::Error::custom(format!("`{kind}` needs a numeric {what}")))
                };
                Ok(DistSpec(match kind {
                    "uniform" => DistSpecInner::Uniform,
                    "product" => DistSpecInner::Product {
                        p: None,
                        bias: Some(num("bias")?),
                    },
                    "full_parity_extension" => DistSpecInner::FullParityExtension {
                        free: num("free-bit count")? as usize,
                    },
                    other => return Err(serde::de::Error::custom(format!("unknown distribution `{other}`"))),
                }))
            }
        }
    }
}

impl DistSpec {
    pub fn build(&self, n: usize) -> crate::Result<GenerativeDist> {
        match &self.0 {
            DistSpecInner::Uniform => Ok(GenerativeDist::uniform(n)),
            DistSpecInner::Product { p: Some(p), .. } => GenerativeDist::product(p.clone()),
            DistSpecInner::Product { p: None, bias } => GenerativeDist::product(vec![bias.unwrap_or(0.5); n]),
            DistSpecInner::CorrelatedPairs { base_bias, rho } => GenerativeDist::correlated_pairs(n, *base_bias, *rho),
            DistSpecInner::ParityExtension { free, parities } => GenerativeDist::parity_extension(
                *free,
                parities
                    .iter()
                    .map(|s| s.iter().map(|&i| i.wrapping_sub(1)).collect())
                    .collect(),
            ),
            DistSpecInner::FullParityExtension { free } => GenerativeDist::full_parity_extension(*free),
        }
    }
}

/// `"theory"`, `"budget:<M>"` or `{"budget": M}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModeSpec(pub Mode);

impl Default for ModeSpec {
    fn default() -> Self {
        ModeSpec(Mode::Theory)
    }
}

impl<'de> Deserialize<'de> for ModeSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Full(Mode),
        }
        match Raw::deserialize(d)? {
            Raw::Full(m) => Ok(ModeSpec(m)),
            Raw::Text(s) if s == "theory" => Ok(ModeSpec(Mode::Theory)),
            Raw::Text(s) => s
                .strip_prefix("budget:")
                .and_then(|v| v.trim().parse().ok())
                .map(|m| ModeSpec(Mode::Budget(m)))
                .ok_or_else(|| serde::de::Error::custom(format!("unrecognised mode `{s}`"))),
        }
    }
}

/// Target concept: `"x1&!x3"` or a literal list. Defaults to `x1 & ... & xk`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TargetSpec(pub Conjunction);

impl<'de> Deserialize<'de> for TargetSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Full(Conjunction),
        }
        match Raw::deserialize(d)? {
            Raw::Full(c) => Ok(TargetSpec(c)),
            Raw::Text(s) => s.parse().map(TargetSpec).map_err(serde::de::Error::custom),
        }
    }
}

fn default_eps() -> f64 {
    0.1
}
fn default_delta() -> f64 {
    0.1
}
fn default_gamma() -> f64 {
    0.25
}
fn default_rho() -> f64 {
    0.3
}
fn default_out() -> PathBuf {
    PathBuf::from("attrnoise-out")
}
fn default_nu() -> NuSpec {
    NuSpec::Scalar(0.0)
}
fn default_order() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub k: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_nu")]
    pub nu: NuSpec,
    #[serde(default)]
    pub dist: DistSpec,
    #[serde(default)]
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: ModeSpec,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub orientation: OrientationRule,
    /// Dimensions probed by `lowerbound`; defaults to `[n]`.
    #[serde(default)]
    pub dims: Option<Vec<usize>>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub family: Option<Family>,
    /// Independence order checked by `indep-check`.
    #[serde(default = "default_order")]
    pub order: usize,
    /// Candidate cap for the exhaustive baseline.
    #[serde(default)]
    pub search_cap: Option<u128>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subcommand: Subcommand,
    pub params: Params,
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("cannot write `{}`: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } => 2,
            HarnessError::Output { .. } => 3,
        }
    }

    fn config(field: &str, message: impl Into<String>) -> Self {
        HarnessError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    fn from_core(field: &str, e: Error) -> Self {
        let field = match &e {
            Error::InvalidParameter { name, .. } => name.to_string(),
            _ => field.to_string(),
        };
        HarnessError::Config {
            field,
            message: e.to_string(),
        }
    }
}

fn field_of_serde_error(msg: &str) -> String {
    for marker in ["unknown field `", "missing field `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    "config".into()
}

impl ExperimentConfig {
    /// Parses a JSON config, applies `overrides` (`("eps", "0.05")` sets
    /// `params.eps`; `subcommand` is set when given) and validates.
    pub fn load(
        json_text: &str,
        subcommand: Option<Subcommand>,
        overrides: &[(String, String)],
    ) -> Result<Self, HarnessError> {
        let mut doc: Value = serde_json::from_str(json_text)
            .map_err(|e| HarnessError::config("config", format!("not valid JSON: {e}")))?;
        let obj = doc
            .as_object_mut()
            .ok_or_else(|| HarnessError::config("config", "top level must be an object"))?;
        if let Some(sc) = subcommand {
            obj.insert("subcommand".into(), Value::String(sc.name().into()));
        }
        let params = obj.entry("params").or_insert_with(|| json!({}));
        let params = params
            .as_object_mut()
            .ok_or_else(|| HarnessError::config("params", "must be an object"))?;
        for (key, raw) in overrides {
            let key = key.trim_start_matches("--").replace('-', "_");
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            params.insert(key, value);
        }
        let cfg: ExperimentConfig = serde_json::from_value(doc).map_err(|e| {
            let msg = e.to_string();
            HarnessError::config(&field_of_serde_error(&msg), msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_file(
        path: &Path,
        subcommand: Option<Subcommand>,
        overrides: &[(String, String)],
    ) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::load(&text, subcommand, overrides)
    }

    /// Range checks; nothing is sampled.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let p = &self.params;
        let sc = self.subcommand;
        if sc == Subcommand::Lowerbound {
            let dims = self.lowerbound_dims();
            if dims.is_empty() {
                return Err(HarnessError::config("dims", "need at least one dimension"));
            }
            for &n in &dims {
                if n < 2 || !n.is_multiple_of(2) || n > crate::lowerbound::MAX_COVER_DIM {
                    return Err(HarnessError::config(
                        "dims",
                        format!("{n} must be even and in 2..={}", crate::lowerbound::MAX_COVER_DIM),
                    ));
                }
            }
            if !(0.0..=0.5).contains(&p.rho) {
                return Err(HarnessError::config("rho", format!("{} outside [0, 1/2]", p.rho)));
            }
            if !p.eps.is_finite() || p.eps < 0.0 {
                return Err(HarnessError::config("eps", "must be finite and non-negative"));
            }
            return Ok(());
        }
        if p.n == 0 {
            return Err(HarnessError::config("n", "must be positive"));
        }
        if !(p.eps > 0.0 && p.eps < 1.0) {
            return Err(HarnessError::config("eps", format!("{} outside (0, 1)", p.eps)));
        }
        if !(p.delta > 0.0 && p.delta < 1.0) {
            return Err(HarnessError::config("delta", format!("{} outside (0, 1)", p.delta)));
        }
        if !(p.gamma > 0.0 && p.gamma <= 0.5) {
            return Err(HarnessError::config("gamma", format!("{} outside (0, 1/2]", p.gamma)));
        }
        let dist = p.dist.build(p.n).map_err(|e| HarnessError::from_core("dist", e))?;
        if dist.dim() != p.n {
            return Err(HarnessError::config(
                "dist",
                format!("distribution has dimension {}, but n = {}", dist.dim(), p.n),
            ));
        }
        if let NuSpec::PerBit(v) = &p.nu {
            if v.len() != p.n {
                return Err(HarnessError::config("nu", format!("{} rates for n = {}", v.len(), p.n)));
            }
        }
        let (lo, hi) = (p.nu.lower(), p.nu.upper());
        if lo.is_nan() || lo < 0.0 || !hi.is_finite() {
            return Err(HarnessError::config("nu", "rates must be finite and non-negative"));
        }
        let ceiling = match sc {
            Subcommand::IndepCheck => 0.5,
            _ => 0.5 - p.gamma,
        };
        let too_high = match p.nu {
            NuSpec::UniformBelow { .. } => hi > ceiling,
            _ => hi >= ceiling,
        };
        if too_high {
            return Err(HarnessError::config("nu", format!("rates must stay below {ceiling}")));
        }
        if sc != Subcommand::IndepCheck {
            if p.k > p.n {
                return Err(HarnessError::config("k", format!("{} exceeds n = {}", p.k, p.n)));
            }
            let target = self.target();
            target
                .check_dimension(p.n)
                .map_err(|e| HarnessError::from_core("target", e))?;
        }
        match sc {
            Subcommand::Learn | Subcommand::OracleDump => {
                let lc = self.learn_config()?;
                lc.sample_count(p.n).map_err(|e| HarnessError::from_core("mode", e))?;
            }
            Subcommand::Baseline => {
                let cap = p.search_cap.unwrap_or(DEFAULT_SEARCH_CAP);
                let count = crate::baseline::candidate_count(p.n, p.k);
                if count > cap {
                    return Err(HarnessError::config(
                        "k",
                        format!("{count} candidates exceed the search cap {cap}"),
                    ));
                }
                self.baseline_samples()?;
            }
            Subcommand::IndepCheck => {
                if p.n > MAX_EXACT_DIM {
                    return Err(HarnessError::config(
                        "n",
                        format!("exact tables need n <= {MAX_EXACT_DIM}"),
                    ));
                }
                if p.order < 1 || p.order > p.n {
                    return Err(HarnessError::config("order", format!("{} outside 1..=n", p.order)));
                }
            }
            Subcommand::Lowerbound => unreachable!(),
        }
        Ok(())
    }

    pub fn target(&self) -> Conjunction {
        match &self.params.target {
            Some(t) => t.0.clone(),
            None => Conjunction::monotone(0..self.params.k).expect("distinct indices"),
        }
    }

    pub fn learn_config(&self) -> Result<LearnConfig, HarnessError> {
        let p = &self.params;
        LearnConfig::new(p.k, p.eps, p.delta, p.gamma, p.mode.0)
            .map(|c| c.with_orientation(p.orientation))
            .map_err(|e| HarnessError::from_core("k", e))
    }

    fn baseline_samples(&self) -> Result<usize, HarnessError> {
        let p = &self.params;
        match p.mode.0 {
            Mode::Budget(m) if m > 0 => Ok(m),
            Mode::Budget(_) => Err(HarnessError::config("mode", "budget must be positive")),
            Mode::Theory => {
                baseline_sample_size(p.k, p.n, p.eps, p.delta).map_err(|e| HarnessError::from_core("eps", e))
            }
        }
    }

    fn lowerbound_dims(&self) -> Vec<usize> {
        self.params.dims.clone().unwrap_or_else(|| vec![self.params.n])
    }
}

/// One row of the `learn` table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub s_after_pairwise: usize,
    pub s_after_sensitivity: usize,
    pub list_size: usize,
    pub best_error: f64,
    pub success: bool,
    pub target_in_pairwise: bool,
    pub large_s: bool,
    pub degenerate: bool,
    #[serde(skip)]
    pub wall_ms: f64,
}

/// One row of the `baseline` table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRecord {
    pub trial: usize,
    pub seed: u64,
    pub m: usize,
    pub best: Hypothesis,
    pub best_disagreement: f64,
    pub true_error: f64,
    pub success: bool,
    pub top10_csv: String,
    #[serde(skip)]
    pub wall_ms: f64,
}

/// One row of the `indep-check` table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndepRecord {
    pub trial: usize,
    pub seed: u64,
    pub clean_independent: bool,
    pub noisy_independent: bool,
    pub clean_violation: f64,
    pub noisy_violation: f64,
    pub label_mass_deviation: f64,
    pub roundtrip_error: f64,
    pub success: bool,
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub subcommand: Subcommand,
    pub schema: String,
    pub trials: usize,
    pub completed: usize,
    pub crashed: usize,
    /// `None` when there are no trials (written as `NaN` in the CSV).
    pub success_frac: Option<f64>,
    pub mean_list_size: Option<f64>,
    pub errors: Vec<String>,
    pub details: Value,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.crashed > 0 {
            1
        } else {
            0
        }
    }
}

/// Everything a run produced, in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub learn: Vec<Result<TrialRecord, String>>,
    pub baseline: Vec<Result<BaselineRecord, String>>,
    pub indep: Vec<Result<IndepRecord, String>>,
    pub lowerbound: Vec<LowerboundRow>,
}

fn thread_pool() -> rayon::ThreadPool {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

fn guarded<T>(f: impl FnOnce() -> crate::Result<T>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(e.to_string()),
        Err(panic) => Err(panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "trial panicked".into())),
    }
}

fn trial_seeds(cfg: &ExperimentConfig) -> Vec<(usize, u64)> {
    (0..cfg.params.trials)
        .map(|t| (t, derive_seed(cfg.params.seed, t as u64, Purpose::Trial)))
        .collect()
}

fn error_method(n: usize, eps: f64, trial_seed: u64) -> ErrorMethod {
    if n <= MAX_EXACT_DIM {
        ErrorMethod::Exact
    } else {
        ErrorMethod::MonteCarlo {
            samples: (50.0 / (eps * eps)).ceil() as usize,
            seed: derive_seed(trial_seed, 0, Purpose::Evaluation),
        }
    }
}

/// One `learn` trial.
pub fn learn_trial(cfg: &ExperimentConfig, trial: usize, seed: u64) -> crate::Result<TrialRecord> {
    let start = Instant::now();
    let p = &cfg.params;
    let dist = p.dist.build(p.n)?;
    let target = cfg.target();
    let nu = NoiseVector::new(p.nu.draw(p.n, seed), p.gamma)?;
    let lc = LearnConfig::new(p.k, p.eps, p.delta, p.gamma, p.mode.0)?.with_orientation(p.orientation);
    let oracle = NoisyOracle::new(dist.clone(), target.clone(), nu)?;
    let list = list_learn(&oracle, &lc, seed)?;
    let errors = true_errors(&list.hypotheses, &dist, &target, error_method(p.n, p.eps, seed))?;
    let best_error = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let in_pairwise = target
        .indices()
        .all(|i| list.log.after_pairwise.binary_search(&i).is_ok());
    Ok(TrialRecord {
        trial,
        seed,
        n: p.n,
        s_after_pairwise: list.log.after_pairwise.len(),
        s_after_sensitivity: list.survivors.len(),
        list_size: list.len(),
        best_error,
        success: best_error <= p.eps,
        target_in_pairwise: !list.degenerate_labels && in_pairwise,
        large_s: list.large_s,
        degenerate: list.degenerate_labels,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// One `baseline` trial.
pub fn baseline_trial(cfg: &ExperimentConfig, trial: usize, seed: u64) -> crate::Result<BaselineRecord> {
    let start = Instant::now();
    let p = &cfg.params;
    let dist = p.dist.build(p.n)?;
    let target = cfg.target();
    let nu = NoiseVector::from_rates(p.nu.draw(p.n, seed))?;
    let m = cfg.baseline_samples().map_err(|e| Error::Parse(e.to_string()))?;
    let samples = noisy_oracle(&dist, &target, &nu, m, seed)?;
    let report = best_agreement(&samples, p.k, p.search_cap.unwrap_or(DEFAULT_SEARCH_CAP))?;
    let true_error = true_errors(
        std::slice::from_ref(&report.best),
        &dist,
        &target,
        error_method(p.n, p.eps, seed),
    )?[0];
    Ok(BaselineRecord {
        trial,
        seed,
        m,
        best: report.best.clone(),
        best_disagreement: report.best_disagreement,
        true_error,
        success: true_error <= p.eps,
        top10_csv: report.top_csv(10),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// One `indep-check` trial: fresh noise rates, then both directions of the
/// independence equivalence, label-mass preservation and the channel
/// round trip on the exact table.
pub fn indep_trial(cfg: &ExperimentConfig, trial: usize, seed: u64) -> crate::Result<IndepRecord> {
    let start = Instant::now();
    let p = &cfg.params;
    let d = ExactDist::from_generative(&p.dist.build(p.n)?)?;
    let nu = NoiseVector::from_rates(p.nu.draw(p.n, seed))?;
    let noisy = push_forward_noise(&d, &nu)?;
    let clean = is_kwise_independent(&d, p.order)?;
    let after = is_kwise_independent(&noisy, p.order)?;
    let target = match &p.target {
        Some(t) => t.0.clone(),
        None => Conjunction::monotone(0..p.k.min(p.n)).expect("distinct indices"),
    };
    target.check_dimension(p.n)?;
    let (mask, want) = target.index_masks();
    let before_mass = d.mass(|x| x & mask == want);
    let joint = observed_joint(&d, &target, &nu)?;
    let after_mass = joint.mass(|x| x >> p.n == 1);
    let back = inverse_noise(&noisy, &nu)?;
    let roundtrip = d
        .probs()
        .iter()
        .zip(back.probs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let label_dev = (before_mass - after_mass).abs();
    Ok(IndepRecord {
        trial,
        seed,
        clean_independent: clean.independent,
        noisy_independent: after.independent,
        clean_violation: clean.max_violation,
        noisy_violation: after.max_violation,
        label_mass_deviation: label_dev,
        roundtrip_error: roundtrip,
        success: clean.independent == after.independent && label_dev <= 1e-12 && roundtrip <= 1e-10,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Shortest round-trip form, switching to exponent notation for tiny values.
pub fn fmt_f64(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn fmt_status<T>(r: &Result<T, String>) -> &'static str {
    if r.is_ok() {
        "ok"
    } else {
        "crashed"
    }
}

/// Renders the `learn` table with its summary row.
pub fn learn_csv(rows: &[Result<TrialRecord, String>], success_frac: f64, mean_list_size: f64) -> String {
    let mut s = format!("{LEARN_CSV_HEADER}\n");
    for (t, r) in rows.iter().enumerate() {
        match r {
            Ok(r) => writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},ok",
                r.trial,
                r.seed,
                r.n,
                r.s_after_pairwise,
                r.s_after_sensitivity,
                r.list_size,
                fmt_f64(r.best_error),
                r.success as u8,
                r.target_in_pairwise as u8,
                r.large_s as u8,
                r.degenerate as u8
            ),
            Err(_) => writeln!(s, "{t},,,,,,,0,,,,{}", fmt_status(r)),
        }
        .expect("write to string");
    }
    writeln!(s, "summary,,,,,{mean_list_size},,{success_frac},,,,").expect("write to string");
    s
}

pub fn baseline_csv(rows: &[Result<BaselineRecord, String>], success_frac: f64) -> String {
    let mut s = format!("{BASELINE_CSV_HEADER}\n");
    for (t, r) in rows.iter().enumerate() {
        match r {
            Ok(r) => writeln!(
                s,
                "{},{},{},{},{},{},{},ok",
                r.trial,
                r.seed,
                r.m,
                r.best,
                fmt_f64(r.best_disagreement),
                fmt_f64(r.true_error),
                r.success as u8
            ),
            Err(_) => writeln!(s, "{t},,,,,,0,crashed"),
        }
        .expect("write to string");
    }
    writeln!(s, "summary,,,,,,{success_frac},").expect("write to string");
    s
}

pub fn indep_csv(rows: &[Result<IndepRecord, String>], n: usize, k: usize, success_frac: f64) -> String {
    let mut s = format!("{INDEP_CSV_HEADER}\n");
    for (t, r) in rows.iter().enumerate() {
        match r {
            Ok(r) => writeln!(
                s,
                "{},{},{n},{k},{},{},{},{},{},{},{},ok",
                r.trial,
                r.seed,
                r.clean_independent as u8,
                r.noisy_independent as u8,
                fmt_f64(r.clean_violation),
                fmt_f64(r.noisy_violation),
                fmt_f64(r.label_mass_deviation),
                fmt_f64(r.roundtrip_error),
                r.success as u8
            ),
            Err(_) => writeln!(s, "{t},,{n},{k},,,,,,,0,crashed"),
        }
        .expect("write to string");
    }
    writeln!(s, "summary,,{n},{k},,,,,,,{success_frac},").expect("write to string");
    s
}

fn fraction(hits: usize, total: usize) -> f64 {
    if total == 0 {
        f64::NAN
    } else {
        hits as f64 / total as f64
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn collect_errors<T>(rows: &[Result<T, String>]) -> Vec<String> {
    rows.iter()
        .enumerate()
        .filter_map(|(t, r)| r.as_ref().err().map(|e| format!("trial {t}: {e}")))
        .collect()
}

fn run_trials<T: Send>(
    cfg: &ExperimentConfig,
    f: impl Fn(&ExperimentConfig, usize, u64) -> crate::Result<T> + Sync,
) -> Vec<Result<T, String>> {
    let seeds = trial_seeds(cfg);
    thread_pool().install(|| seeds.par_iter().map(|&(t, s)| guarded(|| f(cfg, t, s))).collect())
}

/// Runs the configured experiment in memory.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let p = &cfg.params;
    let mut out = RunOutput {
        summary: RunSummary {
            subcommand: cfg.subcommand,
            schema: format!("attrnoise-{}/{CSV_SCHEMA_VERSION}", cfg.subcommand.name()),
            trials: p.trials,
            completed: 0,
            crashed: 0,
            success_frac: None,
            mean_list_size: None,
            errors: Vec::new(),
            details: Value::Null,
        },
        learn: Vec::new(),
        baseline: Vec::new(),
        indep: Vec::new(),
        lowerbound: Vec::new(),
    };
    match cfg.subcommand {
        Subcommand::Learn => {
            let rows = run_trials(cfg, learn_trial);
            let ok: Vec<&TrialRecord> = rows.iter().filter_map(|r| r.as_ref().ok()).collect();
            out.summary.errors = collect_errors(&rows);
            out.summary.success_frac = finite(fraction(ok.iter().filter(|r| r.success).count(), p.trials));
            out.summary.mean_list_size = finite(ok.iter().map(|r| r.list_size as f64).sum::<f64>() / ok.len() as f64);
            let lc = cfg.learn_config()?;
            out.summary.details = json!({
                "m_theory": lc.m(),
                "samples_per_trial": lc.sample_count(p.n).ok(),
                "label_floor": lc.label_floor(),
                "large_s_trials": ok.iter().filter(|r| r.large_s).count(),
                "degenerate_trials": ok.iter().filter(|r| r.degenerate).count(),
                "target_in_pairwise_trials": ok.iter().filter(|r| r.target_in_pairwise).count(),
            });
            out.learn = rows;
        }
        Subcommand::Baseline => {
            let rows = run_trials(cfg, baseline_trial);
            let ok: Vec<&BaselineRecord> = rows.iter().filter_map(|r| r.as_ref().ok()).collect();
            out.summary.errors = collect_errors(&rows);
            out.summary.success_frac = finite(fraction(ok.iter().filter(|r| r.success).count(), p.trials));
            out.summary.details = json!({
                "samples_per_trial": cfg.baseline_samples()?,
                "candidates": crate::baseline::candidate_count(p.n, p.k).to_string(),
            });
            out.baseline = rows;
        }
        Subcommand::IndepCheck => {
            let rows = run_trials(cfg, indep_trial);
            let ok: Vec<&IndepRecord> = rows.iter().filter_map(|r| r.as_ref().ok()).collect();
            out.summary.errors = collect_errors(&rows);
            out.summary.success_frac = finite(fraction(ok.iter().filter(|r| r.success).count(), p.trials));
            out.indep = rows;
        }
        Subcommand::Lowerbound => {
            let family = p.family.unwrap_or(Family::Parity);
            let dims = cfg.lowerbound_dims();
            let rows: Vec<Result<LowerboundRow, String>> = thread_pool().install(|| {
                dims.iter()
                    .map(|&n| guarded(|| lowerbound_probe(n, p.rho, p.eps, family)))
                    .collect()
            });
            out.summary.trials = dims.len();
            out.summary.errors = collect_errors(&rows);
            let ok: Vec<LowerboundRow> = rows.into_iter().filter_map(Result::ok).collect();
            out.summary.details = json!({
                "note": "cover pool is the concept family plus constants; sizes bound that restricted problem only",
                "covers": ok.iter().map(|r| json!({
                    "n": r.n,
                    "instances": r.instances,
                    "cover": r.cover.chosen_names,
                    "uncoverable": r.cover.uncoverable,
                })).collect::<Vec<_>>(),
            });
            out.lowerbound = ok;
        }
        Subcommand::OracleDump => {
            out.summary.trials = 1;
        }
    }
    out.summary.crashed = out.summary.errors.len();
    out.summary.completed = out.summary.trials - out.summary.crashed;
    Ok(out)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|source| HarnessError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn timing_csv(rows: impl Iterator<Item = (usize, Option<f64>)>) -> String {
    let mut s = format!("{TIMING_CSV_HEADER}\n");
    for (t, ms) in rows {
        writeln!(s, "{t},{}", ms.map(|v| format!("{v:.3}")).unwrap_or_default()).expect("write to string");
    }
    s
}

/// Runs the experiment and writes its artifacts under `params.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let dir = &cfg.params.out;
    fs::create_dir_all(dir).map_err(|source| HarnessError::Output {
        path: dir.clone(),
        source,
    })?;
    let p = &cfg.params;
    if cfg.subcommand == Subcommand::OracleDump {
        let mut summary = execute(cfg)?.summary;
        let path = dir.join("oracle_dump.txt");
        let result = guarded(|| {
            let dist = p.dist.build(p.n)?;
            let nu = NoiseVector::new(p.nu.draw(p.n, p.seed), p.gamma)?;
            let m = cfg
                .learn_config()
                .map_err(|e| Error::Parse(e.to_string()))?
                .sample_count(p.n)?;
            let samples = noisy_oracle(&dist, &cfg.target(), &nu, m, p.seed)?;
            let file = fs::File::create(&path)?;
            samples.write_dump(BufWriter::new(file), p.seed)?;
            Ok(m)
        });
        match result {
            Ok(m) => {
                summary.completed = 1;
                summary.details = json!({"examples": m, "file": "oracle_dump.txt"});
            }
            Err(e) if e.contains("os error") || e.contains("denied") => {
                return Err(HarnessError::Output {
                    path,
                    source: std::io::Error::other(e),
                })
            }
            Err(e) => {
                summary.crashed = 1;
                summary.errors.push(e);
            }
        }
        write_summary(dir, &summary)?;
        return Ok(summary);
    }
    let out = execute(cfg)?;
    let frac = out.summary.success_frac.unwrap_or(f64::NAN);
    let timing_enabled = p.record_timing;
    match cfg.subcommand {
        Subcommand::Learn => {
            let mean = out.summary.mean_list_size.unwrap_or(f64::NAN);
            write_file(&dir.join("trials.csv"), learn_csv(&out.learn, frac, mean).as_bytes())?;
            if timing_enabled {
                let t = timing_csv(
                    out.learn
                        .iter()
                        .enumerate()
                        .map(|(i, r)| (i, r.as_ref().ok().map(|r| r.wall_ms))),
                );
                write_file(&dir.join("timing.csv"), t.as_bytes())?;
            }
        }
        Subcommand::Baseline => {
            write_file(&dir.join("trials.csv"), baseline_csv(&out.baseline, frac).as_bytes())?;
            let top = dir.join("top10");
            fs::create_dir_all(&top).map_err(|source| HarnessError::Output {
                path: top.clone(),
                source,
            })?;
            for r in out.baseline.iter().flatten() {
                write_file(&top.join(format!("trial_{:04}.csv", r.trial)), r.top10_csv.as_bytes())?;
            }
            if timing_enabled {
                let t = timing_csv(
                    out.baseline
                        .iter()
                        .enumerate()
                        .map(|(i, r)| (i, r.as_ref().ok().map(|r| r.wall_ms))),
                );
                write_file(&dir.join("timing.csv"), t.as_bytes())?;
            }
        }
        Subcommand::IndepCheck => {
            write_file(
                &dir.join("trials.csv"),
                indep_csv(&out.indep, p.n, p.order, frac).as_bytes(),
            )?;
            if timing_enabled {
                let t = timing_csv(
                    out.indep
                        .iter()
                        .enumerate()
                        .map(|(i, r)| (i, r.as_ref().ok().map(|r| r.wall_ms))),
                );
                write_file(&dir.join("timing.csv"), t.as_bytes())?;
            }
        }
        Subcommand::Lowerbound => {
            write_file(&dir.join("lowerbound.csv"), lowerbound_csv(&out.lowerbound).as_bytes())?;
        }
        Subcommand::OracleDump => unreachable!(),
    }
    write_summary(dir, &out.summary)?;
    Ok(out.summary)
}

fn write_summary(dir: &Path, summary: &RunSummary) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    write_file(&dir.join("summary.json"), text.as_bytes())
}
