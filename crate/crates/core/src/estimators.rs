//! Empirical moments, label sensitivity and sample-size accounting.
//!
//! All estimates are plug-in averages over integer counts, so they are exact
//! rationals up to one final division and independent of summation order.

use std::collections::BTreeMap;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::model::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub pos: usize,
    pub neg: usize,
    pub total: usize,
}

/// Empirical first moments overall and per label, plus requested
/// positive-conditional pair moments. A conditional mean vector is `None`
/// when its label class has no samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    pub mean_all: Vec<f64>,
    pub mean_pos: Option<Vec<f64>>,
    pub mean_neg: Option<Vec<f64>>,
    /// `E_{D~_1}[x_i x_j]` keyed by `(i, j)` with `i < j`.
    pub pair_pos: BTreeMap<(usize, usize), f64>,
    pub counts: ClassCounts,
}

impl MomentTable {
    pub fn dim(&self) -> usize {
        self.mean_all.len()
    }

    pub fn pair(&self, i: usize, j: usize) -> Option<f64> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.pair_pos.get(&key).copied()
    }
}

impl Serialize for MomentTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Pair {
            i: usize,
            j: usize,
            value: f64,
        }
        let pairs: Vec<Pair> = self
            .pair_pos
            .iter()
            .map(|(&(i, j), &value)| Pair {
                i: i + 1,
                j: j + 1,
                value,
            })
            .collect();
        let mut st = s.serialize_struct("MomentTable", 5)?;
        st.serialize_field("mean_all", &self.mean_all)?;
        st.serialize_field("mean_pos", &self.mean_pos)?;
        st.serialize_field("mean_neg", &self.mean_neg)?;
        st.serialize_field("pair_pos", &pairs)?;
        st.serialize_field("counts", &self.counts)?;
        st.end()
    }
}

/// Bit columns of the positive examples: column `i` has bit `t` set when
/// the `t`-th positive example has `x_i = 1`.
#[derive(Debug, Clone)]
pub struct PositiveColumns {
    n: usize,
    words: usize,
    positives: usize,
    cols: Vec<u64>,
    ones: Vec<usize>,
}

impl PositiveColumns {
    pub fn new(samples: &SampleSet) -> Self {
        let n = samples.dim();
        let positives = samples.positives();
        let words = positives.div_ceil(64).max(1);
        let mut cols = vec![0u64; n * words];
        let mut ones = vec![0usize; n];
        let mut t = 0usize;
        for s in 0..samples.len() {
            if !samples.label(s) {
                continue;
            }
            for (wi, &w) in samples.row(s).iter().enumerate() {
                let mut bits = w;
                while bits != 0 {
                    let i = wi * 64 + bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    cols[i * words + t / 64] |= 1 << (t % 64);
                    ones[i] += 1;
                }
            }
            t += 1;
        }
        Self {
            n,
            words,
            positives,
            cols,
            ones,
        }
    }

    pub fn positives(&self) -> usize {
        self.positives
    }

    fn col(&self, i: usize) -> &[u64] {
        &self.cols[i * self.words..(i + 1) * self.words]
    }

    /// Number of positives with `x_i = 1`.
    pub fn count(&self, i: usize) -> usize {
        self.ones[i]
    }

    /// Number of positives with `x_i = x_j = 1`.
    pub fn pair_count(&self, i: usize, j: usize) -> usize {
        assert!(i < self.n && j < self.n);
        self.col(i)
            .iter()
            .zip(self.col(j))
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn pair_moment(&self, i: usize, j: usize) -> Option<f64> {
        (self.positives > 0).then(|| self.pair_count(i, j) as f64 / self.positives as f64)
    }
}

/// Plug-in estimates of the overall and label-conditional means and of the
/// requested positive-conditional pair moments.
pub fn estimate_moments(samples: &SampleSet, pairs_needed: &[(usize, usize)]) -> Result<MomentTable> {
    if samples.is_empty() {
        return Err(invalid("samples", "need at least one example"));
    }
    let n = samples.dim();
    for &(i, j) in pairs_needed {
        if i >= n || j >= n || i == j {
            return Err(invalid("pairs_needed", format!("bad pair ({}, {})", i + 1, j + 1)));
        }
    }
    let mut ones_pos = vec![0usize; n];
    let mut ones_neg = vec![0usize; n];
    for s in 0..samples.len() {
        let target = if samples.label(s) { &mut ones_pos } else { &mut ones_neg };
        for (wi, &w) in samples.row(s).iter().enumerate() {
            let mut bits = w;
            while bits != 0 {
                target[wi * 64 + bits.trailing_zeros() as usize] += 1;
                bits &= bits - 1;
            }
        }
    }
    let pos = samples.positives();
    let total = samples.len();
    let neg = total - pos;
    let ratio = |c: &[usize], d: usize| -> Option<Vec<f64>> {
        (d > 0).then(|| c.iter().map(|&v| v as f64 / d as f64).collect())
    };
    let mean_all = ones_pos
        .iter()
        .zip(&ones_neg)
        .map(|(a, b)| (a + b) as f64 / total as f64)
        .collect();
    let mut pair_pos = BTreeMap::new();
    if pos > 0 && !pairs_needed.is_empty() {
        let cols = PositiveColumns::new(samples);
        for &(i, j) in pairs_needed {
            let key = if i < j { (i, j) } else { (j, i) };
            pair_pos.insert(key, cols.pair_count(i, j) as f64 / pos as f64);
        }
    }
    Ok(MomentTable {
        mean_all,
        mean_pos: ratio(&ones_pos, pos),
        mean_neg: ratio(&ones_neg, neg),
        pair_pos,
        counts: ClassCounts { pos, neg, total },
    })
}

/// `LS_i = E_{D~_1}[x_i] - E_{D~_0}[x_i]`.
pub fn label_sensitivity(table: &MomentTable, i: usize) -> Result<f64> {
    let pos = table
        .mean_pos
        .as_ref()
        .ok_or(Error::InsufficientClassSamples { label: 1 })?;
    let neg = table
        .mean_neg
        .as_ref()
        .ok_or(Error::InsufficientClassSamples { label: 0 })?;
    if i >= pos.len() {
        return Err(invalid("i", format!("index {} outside dimension {}", i + 1, pos.len())));
    }
    Ok(pos[i] - neg[i])
}

// Sample-size constant.
//
// With m = 32k^2/(eps^5 gamma^2) the learner needs, on the positive
// examples, every mean to +-t and every pair moment to +-2t where
// t = 1/(48 eps m) = eps^4 gamma^2 / (1536 k^2), and every label sensitivity
// to +-eps gamma/(2k) (each class mean to +-eps gamma/(4k) >= t).
//
// Hoeffding + union bound over n means and n(n-1)/2 pair moments on N
// positives fails with probability at most
//     2n e^{-2Nt^2} + n(n-1) e^{-8Nt^2} <= n(n+1) e^{-2Nt^2},
// which is <= delta/4 once N >= P := ln(4n(n+1)/delta) / (2t^2). The n
// negative-class means need N_neg >= ln(8n/delta)/(2(eps gamma/4k)^2),
// which P already covers. In the non-trivial regime eps <= Pr[c=1] <= 1-eps,
// M = 2P/eps samples give each class at least P examples except with
// probability e^{-P/4} <= delta/4 (multiplicative Chernoff, half the mean).
// So
//     M = 1536^2 k^4 ln(4n(n+1)/delta) / (eps^9 gamma^4).
// To reach the advertised shape we need the smallest C0 with
//     ln(4n(n+1)/delta) <= C0 ln(n+2) ln(2/delta)   for all n >= 1, delta in (0,1).
// Writing D = ln(2/delta) > ln 2, the ratio is ln(2n(n+1))/(L D) + 1/L with
// L = ln(n+2), decreasing in D, so the supremum sits at delta -> 1:
//     C0 = max_n ln(4n(n+1)) / (ln(n+2) ln 2).
// Over integers this peaks at n = 6 (n = 5 and n = 7 are smaller and the
// ratio falls towards 2/ln 2 for large n), giving
//     C0 = ln 168 / (ln 8 ln 2) ~= 3.55499.

/// `C0` above: the smallest constant bounding the log factor.
pub fn log_factor_constant() -> f64 {
    168f64.ln() / (8f64.ln() * 2f64.ln())
}

/// `C = 1536^2 * C0`.
pub fn sample_constant() -> f64 {
    1536.0 * 1536.0 * log_factor_constant()
}

fn check_learning_params(k: usize, eps: f64, delta: f64, gamma: f64, n: usize) -> Result<()> {
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
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    Ok(())
}

/// Real value of `C k^4 ln(n+2) ln(2/delta) / (eps^9 gamma^4)`.
pub fn required_samples_value(k: usize, eps: f64, delta: f64, gamma: f64, n: usize) -> Result<f64> {
    check_learning_params(k, eps, delta, gamma, n)?;
    let k4 = (k as f64).powi(4);
    Ok(sample_constant() * k4 * ((n + 2) as f64).ln() * (2.0 / delta).ln() / (eps.powi(9) * gamma.powi(4)))
}

/// `ceil(C k^4 ln(n+2) ln(2/delta) / (eps^9 gamma^4))`.
pub fn required_samples(k: usize, eps: f64, delta: f64, gamma: f64, n: usize) -> Result<u128> {
    let value = required_samples_value(k, eps, delta, gamma, n)?;
    let ceil = value.ceil();
    if !ceil.is_finite() || ceil >= u128::MAX as f64 {
        return Err(Error::BudgetOverflow { value });
    }
    Ok((ceil as u128).max(1))
}

/// Hoeffding accuracy reached on the positive-class means by `n_pos`
/// positives, with failure budget `delta/4` shared across the `n` means and
/// `n(n-1)/2` pair moments (pair moments get twice this accuracy).
pub fn mean_accuracy(n_pos: usize, n: usize, delta: f64) -> f64 {
    if n_pos == 0 {
        return f64::INFINITY;
    }
    let tests = 4.0 * (n as f64) * (n as f64 + 1.0) / delta;
    (tests.ln() / (2.0 * n_pos as f64)).sqrt()
}

/// Failure probability bound for mean accuracy `t` from `n_pos` positives,
/// under the same union bound as [`mean_accuracy`] (clamped to 1).
pub fn implied_delta(n_pos: usize, n: usize, t: f64) -> f64 {
    let v = 4.0 * (n as f64) * (n as f64 + 1.0) * (-2.0 * n_pos as f64 * t * t).exp();
    v.min(1.0)
}

/// Largest `m` whose mean target `1/(48 eps m)` equals accuracy `t`.
pub fn effective_m(eps: f64, t: f64) -> f64 {
    1.0 / (48.0 * eps * t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{BitString, Conjunction};
    use crate::model::{noisy_oracle, GenerativeDist, LabeledExample, NoiseVector};

    #[test]
    fn identical_samples() {
        let ex = LabeledExample {
            x_tilde: BitString::ones(5),
            label: true,
        };
        let s = SampleSet::from_examples(5, vec![ex; 10]).unwrap();
        let t = estimate_moments(&s, &[(0, 1)]).unwrap();
        assert_eq!(t.mean_pos.as_deref(), Some(&[1.0; 5][..]));
        assert!(t.mean_neg.is_none());
        assert_eq!(t.pair(1, 0), Some(1.0));
        assert!(matches!(
            label_sensitivity(&t, 0),
            Err(Error::InsufficientClassSamples { label: 0 })
        ));
    }

    #[test]
    fn empty_samples_rejected() {
        let s = SampleSet::with_capacity(3, 0);
        assert!(estimate_moments(&s, &[]).is_err());
    }

    #[test]
    fn equal_means_give_zero_sensitivity() {
        let mk = |bits: &str, label| LabeledExample {
            x_tilde: bits.parse().unwrap(),
            label,
        };
        let s = SampleSet::from_examples(
            2,
            vec![mk("10", true), mk("01", true), mk("10", false), mk("01", false)],
        )
        .unwrap();
        let t = estimate_moments(&s, &[]).unwrap();
        assert_eq!(label_sensitivity(&t, 0).unwrap(), 0.0);
        assert_eq!(label_sensitivity(&t, 1).unwrap(), 0.0);
    }

    #[test]
    fn pair_moment_bounded_by_means() {
        let d = GenerativeDist::correlated_pairs(8, 0.4, 0.2).unwrap();
        let nu = NoiseVector::uniform(8, 0.1, 0.25).unwrap();
        let c: Conjunction = "x1".parse().unwrap();
        let s = noisy_oracle(&d, &c, &nu, 5000, 1).unwrap();
        let pairs: Vec<_> = (0..8).flat_map(|i| (i + 1..8).map(move |j| (i, j))).collect();
        let t = estimate_moments(&s, &pairs).unwrap();
        let mp = t.mean_pos.as_ref().unwrap();
        for &(i, j) in &pairs {
            let v = t.pair(i, j).unwrap();
            assert!(v <= mp[i].min(mp[j]) + 1e-12);
        }
        for v in t.mean_all.iter().chain(mp) {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn json_shape() {
        let mk = |bits: &str, label| LabeledExample {
            x_tilde: bits.parse().unwrap(),
            label,
        };
        let s = SampleSet::from_examples(2, vec![mk("11", true), mk("01", false)]).unwrap();
        let t = estimate_moments(&s, &[(0, 1)]).unwrap();
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v["mean_pos"], serde_json::json!([1.0, 1.0]));
        assert_eq!(v["mean_neg"], serde_json::json!([0.0, 1.0]));
        assert_eq!(v["pair_pos"][0]["i"], 1);
        assert_eq!(v["pair_pos"][0]["j"], 2);
        assert_eq!(v["counts"]["total"], 2);
    }

    #[test]
    fn log_factor_constant_is_the_supremum() {
        let c0 = log_factor_constant();
        let ratio = |n: usize, delta: f64| {
            let lhs = (4.0 * n as f64 * (n as f64 + 1.0) / delta).ln();
            lhs / (((n + 2) as f64).ln() * (2.0 / delta).ln())
        };
        let mut best = 0.0f64;
        for n in 1..200_000 {
            best = best.max(ratio(n, 1.0 - 1e-12));
        }
        assert!(best <= c0 + 1e-9);
        assert!(c0 - best < 1e-6);
        for n in [1, 2, 5, 6, 7, 50, 1000, 100_000] {
            for delta in [0.999, 0.5, 0.1, 1e-3, 1e-9] {
                assert!(ratio(n, delta) <= c0, "n = {n}, delta = {delta}");
            }
        }
    }

    #[test]
    fn required_samples_monotone_in_eps() {
        let mut prev = 0u128;
        for eps in [0.9, 0.8, 0.5, 0.4, 0.25, 0.2, 0.1] {
            let m = required_samples(1, eps, 0.1, 0.5, 10).unwrap();
            assert!(m >= prev);
            prev = m;
        }
        let a = required_samples(2, 0.2, 0.1, 0.25, 20).unwrap();
        let b = required_samples(2, 0.1, 0.1, 0.25, 20).unwrap();
        assert!(b >= a);
    }

    #[test]
    fn required_samples_near_delta_one() {
        let m = required_samples(1, 0.99, 1.0 - 1e-12, 0.5, 1).unwrap();
        assert!(m >= 1);
        assert!(required_samples_value(1, 0.99, 1.0 - 1e-12, 0.5, 1).unwrap() > 0.0);
    }

    #[test]
    fn required_samples_overflow_reports_value() {
        match required_samples(1000, 1e-6, 0.1, 1e-3, 10) {
            Err(Error::BudgetOverflow { value }) => assert!(value > 1e38),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn required_samples_rejects_bad_ranges() {
        assert!(required_samples(0, 0.1, 0.1, 0.25, 5).is_err());
        assert!(required_samples(1, 1.0, 0.1, 0.25, 5).is_err());
        assert!(required_samples(1, 0.1, 0.0, 0.25, 5).is_err());
        assert!(required_samples(1, 0.1, 0.1, 0.6, 5).is_err());
    }

    #[test]
    fn accuracy_helpers_are_consistent() {
        let t = mean_accuracy(25_000, 50, 0.1);
        assert!((implied_delta(25_000, 50, t) - 0.1).abs() < 1e-9);
        assert!((effective_m(0.1, t) * 48.0 * 0.1 * t - 1.0).abs() < 1e-12);
        assert!(mean_accuracy(0, 5, 0.1).is_infinite());
    }
}
