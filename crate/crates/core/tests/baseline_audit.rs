use attrnoise_core::baseline::{
    baseline_sample_size, best_agreement, empirical_disagreement, expected_disagreement, separation_audit,
    DEFAULT_SEARCH_CAP,
};
use attrnoise_core::model::noisy_oracle;
use attrnoise_core::{Conjunction, ExactDist, GenerativeDist, Hypothesis, NoiseVector};
use proptest::prelude::*;

#[test]
fn target_disagreement_stays_below_k_nu() {
    let n = 10;
    let c: Conjunction = "x1&x2&x3".parse().unwrap();
    let nu = NoiseVector::uniform(n, 0.01, 0.25).unwrap();
    let m = 1_000_000;
    let s = noisy_oracle(&GenerativeDist::uniform(n), &c, &nu, m, 31).unwrap();
    let h = Hypothesis::Conj(c.clone());
    let emp = empirical_disagreement(&h, &s).unwrap();
    let sigma = (0.03f64 * 0.97 / m as f64).sqrt();
    assert!(emp <= 0.03 + 3.0 * sigma, "empirical {emp}");

    let exact = expected_disagreement(&h, &ExactDist::uniform(n).unwrap(), &c, &nu).unwrap();
    assert!(exact <= 0.03);
    assert!((emp - exact).abs() <= 4.0 * sigma, "{emp} vs {exact}");
}

#[test]
fn far_candidates_are_separated() {
    let n = 8;
    let c: Conjunction = "x1&!x3".parse().unwrap();
    for rate in [0.0, 0.01, 0.03] {
        let nu = NoiseVector::uniform(n, rate, 0.25).unwrap();
        for d in [
            ExactDist::uniform(n).unwrap(),
            ExactDist::product(&[0.5, 0.7, 0.4, 0.6, 0.5, 0.3, 0.8, 0.5]).unwrap(),
        ] {
            let audit = separation_audit(&d, &c, &nu, 2, 0.2).unwrap();
            assert!(audit.holds, "rate {rate}: {audit:?}");
            assert!(audit.far_candidates > 0);
        }
    }
}

#[test]
fn sample_size_formula() {
    // 128 * 4 ln 20 / 0.04 = 38345.4...
    assert_eq!(baseline_sample_size(2, 10, 0.2, 0.1).unwrap(), 38_346);
    assert!(baseline_sample_size(2, 10, 0.2, 1.0).is_err());
}

#[test]
fn recovers_a_small_target_under_noise() {
    let n = 10;
    let c: Conjunction = "!x2&x9".parse().unwrap();
    let nu = NoiseVector::uniform(n, 0.02, 0.25).unwrap();
    let m = baseline_sample_size(2, n, 0.2, 0.1).unwrap();
    let s = noisy_oracle(&GenerativeDist::uniform(n), &c, &nu, m, 12).unwrap();
    let r = best_agreement(&s, 2, DEFAULT_SEARCH_CAP).unwrap();
    assert_eq!(r.best, Hypothesis::Conj(c));
    assert_eq!(r.candidates_scanned, 1 + 2 * 10 + 4 * 45);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn argmin_ignores_example_order(seed in any::<u64>(), shift in 1usize..400) {
        let n = 6;
        let c: Conjunction = "x2&!x4".parse().unwrap();
        let nu = NoiseVector::uniform(n, 0.1, 0.25).unwrap();
        let s = noisy_oracle(&GenerativeDist::uniform(n), &c, &nu, 400, seed).unwrap();
        let perm: Vec<usize> = (0..400).map(|t| (t * 7 + shift) % 400).collect();
        let a = best_agreement(&s, 2, DEFAULT_SEARCH_CAP).unwrap();
        let b = best_agreement(&s.permuted(&perm), 2, DEFAULT_SEARCH_CAP).unwrap();
        prop_assert_eq!(a.best, b.best);
        prop_assert_eq!(a.best_disagreement, b.best_disagreement);
    }
}
