use attrnoise_core::exact::{noise_sensitivity_convolution, noise_sensitivity_symmetric, total_variation, SymmetricFn};
use attrnoise_core::lowerbound::{
    conjunction_lb_error_table, conjunction_lb_from_table, greedy_net_cover, lowerbound_probe,
    observed_dist_of_labeled_examples, pairwise_concept_distance, Base, CoverInstance, DistanceMethod, Family,
    HybridConcept, HybridInstance,
};

fn selector(bits: u64, a: usize) -> Vec<bool> {
    (0..a).map(|i| (bits >> i) & 1 == 1).collect()
}

/// Direct sum over `{0,1}^{2a}` with the uniform-base pair law.
fn naive_distance(a: usize, rho: f64, f: impl Fn(usize) -> bool, z: &[bool], zp: &[bool]) -> f64 {
    let mut total = 0.0;
    for x in 0u64..1 << (2 * a) {
        let mut p = 1.0;
        for i in 0..a {
            let (u, v) = ((x >> (2 * i)) & 1, (x >> (2 * i + 1)) & 1);
            p *= if u == v { (1.0 - rho) / 2.0 } else { rho / 2.0 };
        }
        let w = |s: &[bool]| (0..a).filter(|&i| (x >> (2 * i + s[i] as usize)) & 1 == 1).count();
        if f(w(z)) != f(w(zp)) {
            total += p;
        }
    }
    total
}

#[test]
fn majority_distances_match_direct_enumeration() {
    let a = 4;
    let rho = 0.3;
    let proto = Family::Majority.instance(2 * a, rho).unwrap();
    for p in 0..16u64 {
        for q in 0..16u64 {
            let (z, zp) = (selector(p, a), selector(q, a));
            let want = naive_distance(a, rho, |w| 2 * w > a, &z, &zp);
            let exact = pairwise_concept_distance(&proto, &z, &zp, DistanceMethod::Exact).unwrap();
            let sym = pairwise_concept_distance(&proto, &z, &zp, DistanceMethod::Symmetric).unwrap();
            assert!((exact - want).abs() < 1e-12, "{p} {q}");
            assert!((sym - want).abs() < 1e-12, "{p} {q}");
        }
    }
}

#[test]
fn parity_monte_carlo_matches_closed_form() {
    let a = 8;
    let proto = Family::Parity.instance(2 * a, 0.1).unwrap();
    let z = vec![false; a];
    let zp: Vec<bool> = (0..a).map(|i| i < 4).collect();
    let mc = pairwise_concept_distance(
        &proto,
        &z,
        &zp,
        DistanceMethod::MonteCarlo {
            samples: 400_000,
            seed: 5,
        },
    )
    .unwrap();
    let closed = (1.0 - 0.8f64.powi(4)) / 2.0;
    assert!((mc - closed).abs() <= 0.003, "{mc} vs {closed}");
}

#[test]
fn majority_monte_carlo_within_three_sigma() {
    let a = 12;
    let rho = 0.2;
    let proto = Family::Majority.instance(2 * a, rho).unwrap();
    let z = vec![false; a];
    let zp: Vec<bool> = (0..a).map(|i| i % 2 == 0).collect();
    let samples = 400_000;
    let mc = pairwise_concept_distance(&proto, &z, &zp, DistanceMethod::MonteCarlo { samples, seed: 6 }).unwrap();
    let want = noise_sensitivity_convolution(&SymmetricFn::Majority, a, rho, 6).unwrap();
    let sigma = (want * (1.0 - want) / samples as f64).sqrt();
    assert!((mc - want).abs() <= 3.0 * sigma, "{mc} vs {want}");
}

#[test]
fn convolution_agrees_with_parity_closed_form() {
    for a in 1..=10 {
        for s in 0..=a {
            for rho in [0.0, 0.05, 0.25, 0.5] {
                let closed = noise_sensitivity_symmetric(&SymmetricFn::Parity, a, rho, s).unwrap();
                let conv = noise_sensitivity_convolution(&SymmetricFn::Parity, a, rho, s).unwrap();
                assert!((closed - conv).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn cover_shrinks_as_eps_grows() {
    for family in [Family::Parity, Family::Majority, Family::Conjunction] {
        let mut last = usize::MAX;
        for eps in [0.01, 0.05, 0.1, 0.2, 0.3, 0.5] {
            let row = lowerbound_probe(6, 0.3, eps, family).unwrap();
            assert!(row.cover.size <= last, "{family:?} eps {eps}");
            assert!(row.cover.uncoverable.is_empty());
            last = row.cover.size;
        }
    }
}

#[test]
fn separated_concepts_never_share_a_cover_element() {
    // n = 4: every one of the 2^16 functions on 4 bits is a candidate.
    let rho = 0.3;
    let eps = 0.1;
    let proto = Family::Parity.instance(4, rho).unwrap();
    let instances: Vec<CoverInstance> = (0..4)
        .map(|b| CoverInstance::from_hybrid(&proto.with_selector_index(b)).unwrap())
        .collect();
    let min_gap = attrnoise_core::lowerbound::min_pair_distance(&proto, DistanceMethod::Exact).unwrap();
    assert!(min_gap > 2.0 * eps);
    for h in 0u32..1 << 16 {
        let covered = instances
            .iter()
            .filter(|inst| inst.dist.mass(|x| ((h >> x) & 1 == 1) != inst.labels[x as usize]) <= eps)
            .count();
        assert!(covered <= 1, "function {h:#06x} covers {covered}");
    }
    assert_eq!(greedy_net_cover(&instances, eps).unwrap().size, 4);
}

#[test]
fn conjunction_table_matches_exact_masses() {
    for k in 2..=5 {
        for rho in [0.05, 0.1, 1.0 / k as f64, 0.4] {
            let closed = conjunction_lb_error_table(k, rho).unwrap();
            for bits in [0u64, 1, (1 << k) - 1] {
                let t = conjunction_lb_from_table(k, rho, &selector(bits, k)).unwrap();
                assert!((t.all_zero_mass - closed.all_zero_mass).abs() < 1e-12);
                assert!((t.false_one_cost - closed.false_one_cost).abs() < 1e-12);
                assert!((t.false_zero_cost - closed.false_zero_cost).abs() < 1e-12);
                assert!((t.threshold_error - closed.threshold_error).abs() < 1e-12);
            }
        }
        let at = conjunction_lb_error_table(k, 1.0 / k as f64).unwrap();
        assert!(at.threshold_error >= at.lower_bound);
    }
}

#[test]
fn observed_table_does_not_depend_on_the_selector() {
    for rho in [0.1, 0.3] {
        for (base, concept) in [
            (Base::Uniform, HybridConcept::Symmetric(SymmetricFn::Parity)),
            (Base::Uniform, HybridConcept::Symmetric(SymmetricFn::Majority)),
            (Base::Biased { k: 3 }, HybridConcept::Conjunction { negated: true }),
        ] {
            let proto = HybridInstance::new(vec![false; 3], base, rho, concept).unwrap();
            let first = observed_dist_of_labeled_examples(&proto).unwrap();
            for b in 1..8 {
                let other = observed_dist_of_labeled_examples(&proto.with_selector_index(b)).unwrap();
                assert!(total_variation(&first, &other).unwrap() <= 1e-12);
            }
        }
    }
}

#[test]
fn parity_cover_grows_with_dimension() {
    let sizes: Vec<usize> = [4, 6, 8]
        .iter()
        .map(|&n| lowerbound_probe(n, 0.3, 0.2, Family::Parity).unwrap().cover.size)
        .collect();
    assert_eq!(sizes, vec![4, 8, 16]);
}
