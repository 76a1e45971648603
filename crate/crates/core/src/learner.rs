//! The pairwise-independence list learner for k-conjunctions.
//!
//! Pipeline: draw `M` noisy examples, orient every coordinate, filter
//! coordinates that look correlated under the positive-class distribution,
//! drop coordinates with low label sensitivity, then output the constant 0
//! together with every oriented conjunction of at most `k` survivors
//! (or only the constants when too many survive).

use std::collections::BTreeMap;

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::bits::{BitString, Conjunction, Hypothesis, Literal, Polarity};
use crate::error::{invalid, Error, Result};
use crate::estimators::{effective_m, estimate_moments, implied_delta, mean_accuracy, MomentTable, PositiveColumns};
use crate::exact::{ExactDist, Subsets, MAX_EXACT_DIM};
use crate::model::{clean_rows, noisy_oracle, GenerativeDist, NoiseVector, SampleSet};

/// Largest sample count theory mode will draw.
pub const MAX_THEORY_SAMPLES: u128 = 50_000_000;

/// How many noisy examples the learner draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `M` from the Hoeffding accounting; thresholds use `m` as is.
    Theory,
    /// A user cap on `M`. Thresholds use the effective `m` that the
    /// realized positive count supports at confidence `delta`.
    Budget(usize),
}

/// Rule used to orient coordinates before filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationRule {
    /// Positive iff the positive-class mean is at least 1/2.
    #[default]
    PositiveClassMean,
    /// Positive iff the overall observed mean is at least 1/2.
    ObservedMean,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnConfig {
    k: usize,
    eps: f64,
    delta: f64,
    gamma: f64,
    mode: Mode,
    orientation: OrientationRule,
    m: f64,
}

impl LearnConfig {
    pub fn new(k: usize, eps: f64, delta: f64, gamma: f64, mode: Mode) -> Result<Self> {
        if k == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid("eps", format!("{eps} outside (0, 1)")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid("delta", format!("{delta} outside (0, 1)")));
        }
        if !(gamma > 0.0 && gamma <= 0.5) {
            return Err(invalid("gamma", format!("{gamma} outside (0, 1/2]")));
        }
        if let Mode::Budget(0) = mode {
            return Err(invalid("mode", "budget must be at least one sample"));
        }
        let m = 32.0 * (k * k) as f64 / (eps.powi(5) * gamma * gamma);
        Ok(Self {
            k,
            eps,
            delta,
            gamma,
            mode,
            orientation: OrientationRule::default(),
            m,
        })
    }

    pub fn with_orientation(mut self, rule: OrientationRule) -> Self {
        self.orientation = rule;
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn orientation_rule(&self) -> OrientationRule {
        self.orientation
    }

    /// `m = 32 k^2 / (eps^5 gamma^2)`.
    pub fn m(&self) -> f64 {
        self.m
    }

    /// Label-sensitivity cut `eps gamma / k`.
    pub fn ls_threshold(&self) -> f64 {
        self.eps * self.gamma / self.k as f64
    }

    /// Minimum examples per label class, `ceil(8 ln(4/delta) / eps)`.
    pub fn label_floor(&self) -> usize {
        (8.0 * (4.0 / self.delta).ln() / self.eps).ceil() as usize
    }

    /// Number of examples to draw for dimension `n`.
    pub fn sample_count(&self, n: usize) -> Result<usize> {
        match self.mode {
            Mode::Budget(cap) => Ok(cap),
            Mode::Theory => {
                let req = crate::estimators::required_samples(self.k, self.eps, self.delta, self.gamma, n)?;
                if req > MAX_THEORY_SAMPLES {
                    return Err(Error::BudgetExceedsCap {
                        required: req,
                        cap: MAX_THEORY_SAMPLES,
                    });
                }
                Ok(req as usize)
            }
        }
    }

    /// Thresholds for a sample with `n_pos` positives over `n` coordinates.
    pub fn thresholds(&self, n: usize, n_pos: usize) -> Thresholds {
        let t_theory = 1.0 / (48.0 * self.eps * self.m);
        let m_used = match self.mode {
            Mode::Theory => self.m,
            Mode::Budget(_) => self.m.min(effective_m(self.eps, mean_accuracy(n_pos, n, self.delta))),
        };
        Thresholds {
            m_used,
            covariance: 1.0 / (8.0 * self.eps * m_used),
            low_mean: 1.0 / (8.0 * self.eps * m_used),
            mean_target: 1.0 / (48.0 * self.eps * m_used),
            pair_target: 1.0 / (24.0 * self.eps * m_used),
            label_sensitivity: self.ls_threshold(),
            implied_delta_theory: implied_delta(n_pos, n, t_theory),
        }
    }
}

/// Cut-offs in force for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// The `m` all thresholds derive from (the configured `m` in theory mode).
    pub m_used: f64,
    /// `1/(8 eps m)`: remove a pair whose estimated covariance exceeds it.
    pub covariance: f64,
    /// `1/(8 eps m)`: skip pairs with a positive-class mean at or below it.
    pub low_mean: f64,
    /// `1/(48 eps m)`: accuracy target for positive-class means.
    pub mean_target: f64,
    /// `1/(24 eps m)`: accuracy target for positive-class pair moments.
    pub pair_target: f64,
    pub label_sensitivity: f64,
    /// Union-bound failure probability if the configured `m` were used with
    /// the realized positive count (clamped to 1).
    pub implied_delta_theory: f64,
}

/// Orientation by `rule`; ties go to positive. Without positives the
/// positive-class rule falls back to the observed mean.
pub fn orient_literals(table: &MomentTable, rule: OrientationRule) -> Vec<Polarity> {
    let reference = match (rule, &table.mean_pos) {
        (OrientationRule::PositiveClassMean, Some(pos)) => pos,
        _ => &table.mean_all,
    };
    reference
        .iter()
        .map(|&v| {
            if v >= 0.5 {
                Polarity::Positive
            } else {
                Polarity::Negative
            }
        })
        .collect()
}

fn orientation_mask(orientation: &[Polarity]) -> BitString {
    let mut mask = BitString::zeros(orientation.len());
    for (i, p) in orientation.iter().enumerate() {
        if *p == Polarity::Negative {
            mask.set(i, true);
        }
    }
    mask
}

/// A pair removed by the covariance filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RemovedPair {
    pub i: usize,
    pub j: usize,
    pub covariance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseOutcome {
    /// Surviving coordinates, ascending.
    pub survivors: Vec<usize>,
    pub removed: Vec<RemovedPair>,
    pub pairs_skipped_low_mean: usize,
    pub pairs_tested: usize,
    pub thresholds: Thresholds,
}

/// Covariance filter over the positive examples.
///
/// Scans pairs `(i, j)`, `i < j`, in ascending order. A pair is skipped when
/// either endpoint was already removed or has an estimated positive-class
/// mean at or below the low-mean cut; otherwise both endpoints are removed
/// when `|E[x_i x_j] - E[x_i] E[x_j]|` exceeds the covariance cut.
pub fn pairwise_independence_test(samples: &SampleSet, cfg: &LearnConfig) -> Result<PairwiseOutcome> {
    let n = samples.dim();
    let n_pos = samples.positives();
    let floor = cfg.label_floor();
    if n_pos < floor {
        return Err(Error::PositivesStarved { found: n_pos, floor });
    }
    let th = cfg.thresholds(n, n_pos);
    let cols = PositiveColumns::new(samples);
    let means: Vec<f64> = (0..n).map(|i| cols.count(i) as f64 / n_pos as f64).collect();
    let mut alive = vec![true; n];
    let mut removed = Vec::new();
    let mut skipped = 0;
    let mut tested = 0;
    for i in 0..n.saturating_sub(1) {
        for j in i + 1..n {
            if !alive[i] || !alive[j] {
                continue;
            }
            if means[i] <= th.low_mean || means[j] <= th.low_mean {
                skipped += 1;
                continue;
            }
            tested += 1;
            let pair = cols.pair_count(i, j) as f64 / n_pos as f64;
            let cov = pair - means[i] * means[j];
            if cov.abs() > th.covariance {
                alive[i] = false;
                alive[j] = false;
                removed.push(RemovedPair { i, j, covariance: cov });
            }
        }
    }
    Ok(PairwiseOutcome {
        survivors: (0..n).filter(|&i| alive[i]).collect(),
        removed,
        pairs_skipped_low_mean: skipped,
        pairs_tested: tested,
        thresholds: th,
    })
}

/// Source of noisy labeled examples.
pub trait ExampleOracle {
    fn dim(&self) -> usize;
    fn draw(&self, m: usize, seed: u64) -> Result<SampleSet>;
}

/// The simulated oracle: `x ~ dist`, label `target(x)`, noise `nu`.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    pub dist: GenerativeDist,
    pub target: Conjunction,
    pub nu: NoiseVector,
}

impl NoisyOracle {
    pub fn new(dist: GenerativeDist, target: Conjunction, nu: NoiseVector) -> Result<Self> {
        if nu.len() != dist.dim() {
            return Err(Error::DimensionMismatch {
                expected: dist.dim(),
                found: nu.len(),
            });
        }
        target.check_dimension(dist.dim())?;
        Ok(Self { dist, target, nu })
    }
}

impl ExampleOracle for NoisyOracle {
    fn dim(&self) -> usize {
        self.dist.dim()
    }

    fn draw(&self, m: usize, seed: u64) -> Result<SampleSet> {
        noisy_oracle(&self.dist, &self.target, &self.nu, m, seed)
    }
}

/// Coordinates dropped by the label-sensitivity filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityDrop {
    pub index: usize,
    pub estimate: f64,
}

/// How the survivor set was reached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EliminationLog {
    pub samples: usize,
    pub positives: usize,
    pub negatives: usize,
    pub after_pairwise: Vec<usize>,
    pub pairwise_removed: Vec<RemovedPair>,
    pub sensitivity_removed: Vec<SensitivityDrop>,
    pub thresholds: Option<Thresholds>,
}

/// The learner's output list and its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisList {
    pub hypotheses: Vec<Hypothesis>,
    /// Final survivor set `S`, ascending.
    pub survivors: Vec<usize>,
    pub orientation: Vec<Polarity>,
    pub log: EliminationLog,
    /// Too few positives or negatives: only the constants were output.
    pub degenerate_labels: bool,
    /// `|S| >= m`: only the constants were output.
    pub large_s: bool,
}

impl HypothesisList {
    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn contains(&self, h: &Hypothesis) -> bool {
        self.hypotheses.contains(h)
    }
}

impl Serialize for HypothesisList {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut constants = Vec::new();
        let mut conjunctions = Vec::new();
        for h in &self.hypotheses {
            match h {
                Hypothesis::Zero => constants.push("zero"),
                Hypothesis::Conj(c) if c.is_empty() => constants.push("one"),
                Hypothesis::Conj(c) => conjunctions.push(c),
            }
        }
        let survivors: Vec<usize> = self.survivors.iter().map(|i| i + 1).collect();
        let orientation: BTreeMap<String, &str> = self
            .orientation
            .iter()
            .enumerate()
            .map(|(i, p)| ((i + 1).to_string(), p.symbol()))
            .collect();
        let mut st = s.serialize_struct("HypothesisList", 4)?;
        st.serialize_field("constants", &constants)?;
        st.serialize_field("conjunctions", &conjunctions)?;
        st.serialize_field("S", &survivors)?;
        st.serialize_field("orientation", &orientation)?;
        st.end()
    }
}

/// Upper bound `1 + sum_{i<=k} C(s, i)` on the list length for `s` survivors.
pub fn list_size_bound(s: usize, k: usize) -> u128 {
    let mut total = 1u128;
    let mut binom = 1u128;
    for i in 0..=k.min(s) {
        if i > 0 {
            binom = binom * (s - i + 1) as u128 / i as u128;
        }
        total += binom;
    }
    total
}

/// Runs the learner on a fixed sample.
pub fn learn_from_samples(samples: &SampleSet, cfg: &LearnConfig) -> Result<HypothesisList> {
    let n = samples.dim();
    let pos = samples.positives();
    let neg = samples.len() - pos;
    let constants = vec![Hypothesis::Zero, Hypothesis::one()];
    let mut log = EliminationLog {
        samples: samples.len(),
        positives: pos,
        negatives: neg,
        after_pairwise: Vec::new(),
        pairwise_removed: Vec::new(),
        sensitivity_removed: Vec::new(),
        thresholds: None,
    };
    let floor = cfg.label_floor();
    if pos < floor || neg < floor {
        return Ok(HypothesisList {
            hypotheses: constants,
            survivors: Vec::new(),
            orientation: vec![Polarity::Positive; n],
            log,
            degenerate_labels: true,
            large_s: false,
        });
    }

    let raw = estimate_moments(samples, &[])?;
    let orientation = orient_literals(&raw, cfg.orientation);
    let oriented = samples.xor_attributes(&orientation_mask(&orientation))?;

    let pairwise = pairwise_independence_test(&oriented, cfg)?;
    log.after_pairwise = pairwise.survivors.clone();
    log.pairwise_removed = pairwise.removed.clone();
    log.thresholds = Some(pairwise.thresholds);

    let table = estimate_moments(&oriented, &[])?;
    let mean_pos = table.mean_pos.as_ref().expect("positives above floor");
    let mean_neg = table.mean_neg.as_ref().expect("negatives above floor");
    let mut alive = vec![false; n];
    for &i in &pairwise.survivors {
        alive[i] = true;
    }
    for i in 0..n {
        let ls = mean_pos[i] - mean_neg[i];
        if ls < cfg.ls_threshold() && alive[i] {
            alive[i] = false;
            log.sensitivity_removed.push(SensitivityDrop { index: i, estimate: ls });
        }
    }
    let survivors: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();

    if (survivors.len() as f64) >= pairwise.thresholds.m_used {
        return Ok(HypothesisList {
            hypotheses: constants,
            survivors,
            orientation,
            log,
            degenerate_labels: false,
            large_s: true,
        });
    }

    let mut hypotheses = vec![Hypothesis::Zero];
    for size in 0..=cfg.k.min(survivors.len()) {
        for subset in Subsets::new(survivors.len(), size) {
            let lits = subset
                .iter()
                .map(|&p| {
                    let i = survivors[p];
                    Literal {
                        index: i,
                        polarity: orientation[i],
                    }
                })
                .collect();
            hypotheses.push(Hypothesis::Conj(Conjunction::new(lits)?));
        }
    }
    Ok(HypothesisList {
        hypotheses,
        survivors,
        orientation,
        log,
        degenerate_labels: false,
        large_s: false,
    })
}

/// Draws the configured number of examples from `oracle` and learns.
pub fn list_learn(oracle: &impl ExampleOracle, cfg: &LearnConfig, seed: u64) -> Result<HypothesisList> {
    let m = cfg.sample_count(oracle.dim())?;
    let samples = oracle.draw(m, seed)?;
    learn_from_samples(&samples, cfg)
}

/// How to evaluate `Pr_{x~D}[h(x) != c(x)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMethod {
    /// Sum over the atoms of the exact table (`n <= 20`).
    Exact,
    /// Fraction of `samples` clean draws.
    MonteCarlo { samples: usize, seed: u64 },
}

/// Error of `h` against `c` on an exact table.
pub fn true_error_exact(h: &Hypothesis, d: &ExactDist, c: &Conjunction) -> Result<f64> {
    c.check_dimension(d.dim())?;
    if let Hypothesis::Conj(g) = h {
        g.check_dimension(d.dim())?;
    }
    Ok(d.mass(|x| h.eval_index(x) != c.eval_index(x)))
}

/// `Pr_{x~dist}[h(x) != c(x)]` on clean inputs.
pub fn true_error(h: &Hypothesis, dist: &GenerativeDist, c: &Conjunction, method: ErrorMethod) -> Result<f64> {
    Ok(true_errors(std::slice::from_ref(h), dist, c, method)?[0])
}

/// [`true_error`] for many hypotheses, sharing one table or sample.
pub fn true_errors(hs: &[Hypothesis], dist: &GenerativeDist, c: &Conjunction, method: ErrorMethod) -> Result<Vec<f64>> {
    let n = dist.dim();
    c.check_dimension(n)?;
    for h in hs {
        if let Hypothesis::Conj(g) = h {
            g.check_dimension(n)?;
        }
    }
    match method {
        ErrorMethod::Exact => {
            if n > MAX_EXACT_DIM {
                return Err(Error::DimensionTooLarge { n, max: MAX_EXACT_DIM });
            }
            let d = ExactDist::from_generative(dist)?;
            hs.iter().map(|h| true_error_exact(h, &d, c)).collect()
        }
        ErrorMethod::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(invalid("samples", "Monte Carlo error needs at least one sample"));
            }
            let (wpr, rows) = clean_rows(dist, samples, seed);
            let target = c.compile(n);
            let labels: Vec<bool> = rows.chunks(wpr).map(|r| target.eval_words(r)).collect();
            Ok(hs
                .iter()
                .map(|h| {
                    let wrong = match h {
                        Hypothesis::Zero => labels.iter().filter(|&&l| l).count(),
                        Hypothesis::Conj(g) => {
                            let g = g.compile(n);
                            rows.chunks(wpr)
                                .zip(&labels)
                                .filter(|(r, &l)| g.eval_words(r) != l)
                                .count()
                        }
                    };
                    wrong as f64 / samples as f64
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LabeledExample;

    fn acceptance_cfg() -> LearnConfig {
        LearnConfig::new(3, 0.1, 0.1, 0.25, Mode::Budget(200_000)).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(LearnConfig::new(0, 0.1, 0.1, 0.25, Mode::Theory).is_err());
        assert!(LearnConfig::new(1, 0.0, 0.1, 0.25, Mode::Theory).is_err());
        assert!(LearnConfig::new(1, 0.1, 1.0, 0.25, Mode::Theory).is_err());
        assert!(LearnConfig::new(1, 0.1, 0.1, 0.0, Mode::Theory).is_err());
        assert!(LearnConfig::new(1, 0.1, 0.1, 0.25, Mode::Budget(0)).is_err());
        let cfg = acceptance_cfg();
        assert!((cfg.m() - 32.0 * 9.0 / (1e-5 * 0.0625)).abs() / cfg.m() < 1e-12);
        assert_eq!(cfg.label_floor(), 296);
    }

    #[test]
    fn theory_mode_refuses_astronomical_budgets() {
        let cfg = LearnConfig::new(3, 0.1, 0.1, 0.25, Mode::Theory).unwrap();
        assert!(matches!(cfg.sample_count(50), Err(Error::BudgetExceedsCap { .. })));
    }

    #[test]
    fn orientation_rules() {
        let table = MomentTable {
            mean_all: vec![0.5, 0.2, 0.7],
            mean_pos: Some(vec![0.9, 0.5, 0.1]),
            mean_neg: None,
            pair_pos: Default::default(),
            counts: crate::estimators::ClassCounts {
                pos: 1,
                neg: 0,
                total: 1,
            },
        };
        use Polarity::*;
        assert_eq!(
            orient_literals(&table, OrientationRule::ObservedMean),
            vec![Positive, Negative, Positive]
        );
        assert_eq!(
            orient_literals(&table, OrientationRule::PositiveClassMean),
            vec![Positive, Positive, Negative]
        );
        let no_pos = MomentTable {
            mean_pos: None,
            ..table
        };
        assert_eq!(
            orient_literals(&no_pos, OrientationRule::PositiveClassMean),
            vec![Positive, Negative, Positive]
        );
    }

    #[test]
    fn single_coordinate_survives_pairwise() {
        let cfg = LearnConfig::new(1, 0.5, 0.5, 0.25, Mode::Budget(100)).unwrap();
        let ex = |b: &str, l| LabeledExample {
            x_tilde: b.parse().unwrap(),
            label: l,
        };
        let s =
            SampleSet::from_examples(1, (0..100).map(|t| ex(if t % 3 == 0 { "0" } else { "1" }, t % 2 == 0))).unwrap();
        let out = pairwise_independence_test(&s, &cfg).unwrap();
        assert_eq!(out.survivors, vec![0]);
        assert_eq!(out.pairs_tested, 0);
    }

    #[test]
    fn positives_starved_is_signalled() {
        let cfg = acceptance_cfg();
        let s = SampleSet::from_examples(
            3,
            (0..50).map(|t| LabeledExample {
                x_tilde: "101".parse().unwrap(),
                label: t == 0,
            }),
        )
        .unwrap();
        assert!(matches!(
            pairwise_independence_test(&s, &cfg),
            Err(Error::PositivesStarved { found: 1, floor: 296 })
        ));
    }

    #[test]
    fn list_size_bound_values() {
        assert_eq!(list_size_bound(0, 3), 2);
        assert_eq!(list_size_bound(4, 2), 1 + 1 + 4 + 6);
        assert_eq!(list_size_bound(50, 3), 1 + 1 + 50 + 1225 + 19600);
    }

    #[test]
    fn true_error_examples() {
        let d = GenerativeDist::uniform(2);
        let x1: Conjunction = "x1".parse().unwrap();
        let x12: Conjunction = "x1&x2".parse().unwrap();
        let e = |h: &Hypothesis, c: &Conjunction| true_error(h, &d, c, ErrorMethod::Exact).unwrap();
        assert_eq!(e(&Hypothesis::Conj(x1.clone()), &x1), 0.0);
        assert_eq!(e(&Hypothesis::Zero, &x1), 0.5);
        assert_eq!(e(&Hypothesis::Conj(x12), &x1), 0.25);
        let big = GenerativeDist::uniform(21);
        assert!(matches!(
            true_error(&Hypothesis::Zero, &big, &x1, ErrorMethod::Exact),
            Err(Error::DimensionTooLarge { n: 21, .. })
        ));
        let mc = true_error(
            &Hypothesis::Zero,
            &big,
            &x1,
            ErrorMethod::MonteCarlo {
                samples: 40_000,
                seed: 1,
            },
        )
        .unwrap();
        assert!((mc - 0.5).abs() < 0.01);
    }
}
