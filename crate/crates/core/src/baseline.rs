//! Exhaustive maximum-agreement learner over oriented k-conjunctions.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::bits::{Conjunction, Hypothesis, Literal, Polarity};
use crate::error::{invalid, Error, Result};
use crate::exact::{observed_joint, ExactDist, Subsets};
use crate::model::{NoiseVector, SampleSet};

/// Default cap on the number of scanned conjunctions.
pub const DEFAULT_SEARCH_CAP: u128 = 50_000_000;

pub const TOP_CSV_HEADER: &str = "rank,conjunction,disagreement";

/// `sum_{i<=k} 2^i C(n, i)`: oriented conjunctions with at most `k` literals.
pub fn candidate_count(n: usize, k: usize) -> u128 {
    let mut total = 0u128;
    let mut binom = 1u128;
    for i in 0..=k.min(n) {
        if i > 0 {
            binom = binom * (n - i + 1) as u128 / i as u128;
        }
        total = total.saturating_add(binom.saturating_mul(1u128 << i.min(127)));
    }
    total
}

/// All oriented conjunctions of size at most `k`, in enumeration order:
/// sizes ascending, index subsets lexicographic, and within a subset the
/// polarity patterns lexicographic with `+` before `-` (first literal
/// slowest).
pub fn enumerate_candidates(n: usize, k: usize) -> Vec<Conjunction> {
    let mut out = Vec::new();
    for size in 0..=k.min(n) {
        for subset in Subsets::new(n, size) {
            for pattern in 0u64..(1 << size) {
                let lits = subset
                    .iter()
                    .enumerate()
                    .map(|(t, &index)| Literal {
                        index,
                        polarity: if pattern >> (size - 1 - t) & 1 == 0 {
                            Polarity::Positive
                        } else {
                            Polarity::Negative
                        },
                    })
                    .collect();
                out.push(Conjunction::new(lits).expect("distinct indices"));
            }
        }
    }
    out
}

/// Fraction of samples where `h` on the noisy attributes differs from the label.
pub fn empirical_disagreement(h: &Hypothesis, samples: &SampleSet) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("samples", "need at least one example"));
    }
    Ok(disagreement_count(h, samples)? as f64 / samples.len() as f64)
}

fn disagreement_count(h: &Hypothesis, samples: &SampleSet) -> Result<usize> {
    Ok(match h {
        Hypothesis::Zero => samples.positives(),
        Hypothesis::Conj(g) => {
            g.check_dimension(samples.dim())?;
            let g = g.compile(samples.dim());
            (0..samples.len())
                .filter(|&t| g.eval_words(samples.row(t)) != samples.label(t))
                .count()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub best: Hypothesis,
    pub best_disagreement: f64,
    /// Every scored candidate with its empirical disagreement, in
    /// enumeration order; the constant 0 comes last.
    pub table: Vec<(Hypothesis, f64)>,
    /// Conjunctions scanned, `sum_{i<=k} 2^i C(n, i)`; excludes the constant 0.
    pub candidates_scanned: u128,
}

impl AgreementReport {
    /// The `count` best candidates ordered by (disagreement, enumeration rank).
    pub fn top(&self, count: usize) -> Vec<(Hypothesis, f64)> {
        let mut ranked: Vec<(usize, &(Hypothesis, f64))> = self.table.iter().enumerate().collect();
        ranked.sort_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(a.0.cmp(&b.0)));
        ranked.into_iter().take(count).map(|(_, e)| e.clone()).collect()
    }

    pub fn top_csv(&self, count: usize) -> String {
        let mut s = format!("{TOP_CSV_HEADER}\n");
        for (rank, (h, d)) in self.top(count).iter().enumerate() {
            writeln!(s, "{},{},{}", rank + 1, h, d).expect("write to string");
        }
        s
    }
}

/// Scores every oriented conjunction of size at most `k` plus the constant 0
/// and returns the minimiser of the empirical disagreement.
pub fn best_agreement(samples: &SampleSet, k: usize, cap: u128) -> Result<AgreementReport> {
    if samples.is_empty() {
        return Err(invalid("samples", "need at least one example"));
    }
    let n = samples.dim();
    let count = candidate_count(n, k);
    if count > cap {
        return Err(Error::SearchTooLarge { count, cap });
    }
    let mut candidates: Vec<Hypothesis> = enumerate_candidates(n, k).into_iter().map(Hypothesis::Conj).collect();
    candidates.push(Hypothesis::Zero);
    let scores: Vec<usize> = candidates
        .par_iter()
        .map(|h| disagreement_count(h, samples))
        .collect::<Result<_>>()?;
    let (best_score, best_rank) = scores
        .par_iter()
        .enumerate()
        .map(|(rank, &s)| (s, rank))
        .min()
        .expect("at least one candidate");
    let m = samples.len() as f64;
    let table = candidates
        .into_iter()
        .zip(&scores)
        .map(|(h, &s)| (h, s as f64 / m))
        .collect::<Vec<_>>();
    Ok(AgreementReport {
        best: table[best_rank].0.clone(),
        best_disagreement: best_score as f64 / m,
        table,
        candidates_scanned: count,
    })
}

/// `ceil(128 (ln(2/delta) + (k+1) ln(2n)) / eps^2)`.
pub fn baseline_sample_size(k: usize, n: usize, eps: f64, delta: f64) -> Result<usize> {
    if n == 0 {
        return Err(invalid("n", "dimension must be positive"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid("eps", format!("{eps} outside (0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("{delta} outside (0, 1)")));
    }
    let m = 128.0 * ((2.0 / delta).ln() + (k + 1) as f64 * (2.0 * n as f64).ln()) / (eps * eps);
    if m > usize::MAX as f64 {
        return Err(Error::BudgetOverflow { value: m });
    }
    Ok(m.ceil() as usize)
}

/// `Pr[h(x~) != c(x)]` under `x ~ d` and noise `nu`, summed over the exact
/// joint table of attributes and label.
pub fn expected_disagreement(h: &Hypothesis, d: &ExactDist, c: &Conjunction, nu: &NoiseVector) -> Result<f64> {
    let joint = observed_joint(d, c, nu)?;
    expected_disagreement_on_joint(h, &joint)
}

/// Same as [`expected_disagreement`] on a precomputed joint table whose top
/// bit is the label.
pub fn expected_disagreement_on_joint(h: &Hypothesis, joint: &ExactDist) -> Result<f64> {
    let n = joint.dim() - 1;
    if let Hypothesis::Conj(g) = h {
        g.check_dimension(n)?;
    }
    let mask = (1u64 << n) - 1;
    Ok(joint.mass(|idx| h.eval_index(idx & mask) != (idx >> n == 1)))
}

/// Exact check of the two bounds behind the baseline's guarantee.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationAudit {
    pub target_disagreement: f64,
    /// `k * max_i nu_i`.
    pub target_bound: f64,
    /// `min_g E[disagreement(g)] - (1 - k nu) eps` over the far candidates.
    pub worst_far_slack: f64,
    pub far_candidates: usize,
    pub holds: bool,
}

/// For every oriented conjunction `g` of size at most `k` (and the constant
/// 0) with `dist_D(g, c) > eps`, checks `E[disagreement(g)] >= (1 - k nu) eps`,
/// and checks `E[disagreement(c)] <= k nu`, with `nu = max_i nu_i`.
pub fn separation_audit(
    d: &ExactDist,
    c: &Conjunction,
    nu: &NoiseVector,
    k: usize,
    eps: f64,
) -> Result<SeparationAudit> {
    let n = d.dim();
    let joint = observed_joint(d, c, nu)?;
    let kv = k as f64 * nu.max_rate();
    let target_disagreement = expected_disagreement_on_joint(&Hypothesis::Conj(c.clone()), &joint)?;
    let far_bound = (1.0 - kv) * eps;
    let mut pool: Vec<Hypothesis> = enumerate_candidates(n, k).into_iter().map(Hypothesis::Conj).collect();
    pool.push(Hypothesis::Zero);
    let results: Vec<Option<f64>> = pool
        .par_iter()
        .map(|g| {
            let dist = d.mass(|x| g.eval_index(x) != c.eval_index(x));
            if dist > eps {
                expected_disagreement_on_joint(g, &joint).map(|e| Some(e - far_bound))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let slacks: Vec<f64> = results.into_iter().flatten().collect();
    let worst_far_slack = slacks.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SeparationAudit {
        target_disagreement,
        target_bound: kv,
        worst_far_slack,
        far_candidates: slacks.len(),
        holds: target_disagreement <= kv && worst_far_slack >= 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::BitString;
    use crate::model::{noisy_oracle, GenerativeDist, LabeledExample};

    fn ex(bits: &str, label: bool) -> LabeledExample {
        LabeledExample {
            x_tilde: bits.parse().unwrap(),
            label,
        }
    }

    #[test]
    fn counts_match_enumeration() {
        for n in 0..7 {
            for k in 0..4 {
                assert_eq!(candidate_count(n, k), enumerate_candidates(n, k).len() as u128);
            }
        }
        assert_eq!(candidate_count(10, 2), 1 + 20 + 180);
    }

    #[test]
    fn enumeration_order() {
        let names: Vec<String> = enumerate_candidates(2, 2).iter().map(|c| c.to_string()).collect();
        assert_eq!(
            names,
            ["1", "x1", "!x1", "x2", "!x2", "x1&x2", "x1&!x2", "!x1&x2", "!x1&!x2"]
        );
    }

    #[test]
    fn constant_on_single_class() {
        let s = SampleSet::from_examples(2, [ex("01", false), ex("11", false)]).unwrap();
        assert_eq!(empirical_disagreement(&Hypothesis::Zero, &s).unwrap(), 0.0);
        assert_eq!(empirical_disagreement(&Hypothesis::one(), &s).unwrap(), 1.0);
        let r = best_agreement(&s, 0, DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(r.best, Hypothesis::Zero);
        assert_eq!(r.candidates_scanned, 1);
    }

    #[test]
    fn k_zero_picks_the_better_constant() {
        let s = SampleSet::from_examples(1, [ex("0", true), ex("1", true), ex("1", false)]).unwrap();
        let r = best_agreement(&s, 0, DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(r.best, Hypothesis::one());
        assert!((r.best_disagreement - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_earliest_candidate() {
        // x1 and !x1 both explain nothing better than the constant 1 here.
        let s = SampleSet::from_examples(1, [ex("0", true), ex("1", true)]).unwrap();
        let r = best_agreement(&s, 1, DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(r.best, Hypothesis::one());
    }

    #[test]
    fn noiseless_full_support_recovers_target() {
        let n = 6;
        let c: Conjunction = "x2&!x5".parse().unwrap();
        let mut s = SampleSet::with_capacity(n, 1 << n);
        for idx in 0..1u64 << n {
            let x = BitString::from_index(n, idx);
            s.push(&x, c.eval(&x)).unwrap();
        }
        let r = best_agreement(&s, 2, DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(r.best, Hypothesis::Conj(c.clone()));
        assert_eq!(r.best_disagreement, 0.0);
        let zeros = r.table.iter().filter(|(_, d)| *d == 0.0).count();
        assert_eq!(zeros, 1);
        // Exact enumeration: every other candidate disagrees on a multiple of 1/64.
        for (h, d) in &r.table {
            let direct = (0..1u64 << n).filter(|&x| h.eval_index(x) != c.eval_index(x)).count();
            assert_eq!(*d, direct as f64 / 64.0);
        }
    }

    #[test]
    fn search_cap() {
        let s = SampleSet::from_examples(3, [ex("000", true)]).unwrap();
        assert!(matches!(
            best_agreement(&s, 3, 10),
            Err(Error::SearchTooLarge { count: 27, cap: 10 })
        ));
    }

    #[test]
    fn sample_size_formula() {
        let m = baseline_sample_size(2, 10, 0.2, 0.1).unwrap();
        let direct = 128.0 * (20f64.ln() + 3.0 * 20f64.ln()) / 0.04;
        assert_eq!(m, direct.ceil() as usize);
        assert!(baseline_sample_size(2, 10, 0.0, 0.1).is_err());
    }

    #[test]
    fn top_csv_is_sorted() {
        let dist = GenerativeDist::uniform(4);
        let c: Conjunction = "x1&x2".parse().unwrap();
        let nu = NoiseVector::zeros(4);
        let s = noisy_oracle(&dist, &c, &nu, 2000, 3).unwrap();
        let r = best_agreement(&s, 2, DEFAULT_SEARCH_CAP).unwrap();
        let csv = r.top_csv(10);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TOP_CSV_HEADER);
        assert_eq!(lines[1], "1,x1&x2,0");
        assert_eq!(lines.len(), 11);
        let vals: Vec<f64> = lines[1..]
            .iter()
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn expected_disagreement_of_target_matches_flip_probability() {
        let d = ExactDist::uniform(3).unwrap();
        let c: Conjunction = "x1".parse().unwrap();
        let nu = NoiseVector::new(vec![0.1, 0.2, 0.3], 0.1).unwrap();
        let e = expected_disagreement(&Hypothesis::Conj(c.clone()), &d, &c, &nu).unwrap();
        assert!((e - 0.1).abs() < 1e-15);
    }
}
