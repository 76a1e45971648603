//! Hybrid-pair constructions behind the list-size lower bounds, and
//! finite-scale probes of them.
//!
//! Coordinates come in pairs `(2i, 2i+1)`. A selector `z` of length `n/2`
//! picks one coordinate per pair: `z_i = 0` selects `2i`, `z_i = 1` selects
//! `2i+1`. The selected coordinates form the hybrid string `x^z`; under
//! `D^z` they are drawn from the base law and each partner is a `rho`-noisy
//! copy. Concepts are `f^z(x) = f(x^z)`.
//!
//! Greedy covers only search the concept family plus the two constants, so
//! their sizes are upper bounds for that restricted problem and say nothing
//! definitive about nets drawn from all Boolean functions.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exact::{labeled_push_forward, noise_sensitivity_symmetric, ExactDist, SymmetricFn, MAX_EXACT_DIM};
use crate::model::{clean_rows, GenerativeDist};

/// Largest dimension for the joint (attributes, label) table.
pub const MAX_OBSERVED_DIM: usize = 12;

/// Largest dimension accepted by [`greedy_net_cover`].
pub const MAX_COVER_DIM: usize = 12;

pub const LOWERBOUND_CSV_HEADER: &str = "n,rho,eps,family,cover_size,min_pair_dist";

/// Law of the selected coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Base {
    /// Uniform bits.
    Uniform,
    /// Independent bits with bias `1/k`.
    Biased { k: usize },
}

impl Base {
    pub fn bias(self) -> f64 {
        match self {
            Base::Uniform => 0.5,
            Base::Biased { k } => 1.0 / k as f64,
        }
    }
}

/// `f` applied to the hybrid string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HybridConcept {
    Symmetric(SymmetricFn),
    /// AND of the hybrid bits, or of their negations when `negated`.
    Conjunction {
        negated: bool,
    },
}

impl HybridConcept {
    pub fn eval_weight(&self, weight: usize, arity: usize) -> bool {
        match self {
            HybridConcept::Symmetric(f) => f.eval_weight(weight, arity),
            HybridConcept::Conjunction { negated: false } => weight == arity,
            HybridConcept::Conjunction { negated: true } => weight == 0,
        }
    }

    /// The same function as a [`SymmetricFn`].
    pub fn as_symmetric(&self, arity: usize) -> SymmetricFn {
        match self {
            HybridConcept::Symmetric(f) => f.clone(),
            c => SymmetricFn::ByWeight((0..=arity).map(|w| c.eval_weight(w, arity)).collect()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            HybridConcept::Symmetric(f) => f.name(),
            HybridConcept::Conjunction { negated: false } => "and".into(),
            HybridConcept::Conjunction { negated: true } => "nor".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridInstance {
    pub z: Vec<bool>,
    pub base: Base,
    pub rho: f64,
    pub concept: HybridConcept,
}

impl HybridInstance {
    pub fn new(z: Vec<bool>, base: Base, rho: f64, concept: HybridConcept) -> Result<Self> {
        if z.is_empty() {
            return Err(invalid("z", "selector must be nonempty"));
        }
        if !(0.0..=0.5).contains(&rho) {
            return Err(invalid("rho", format!("{rho} outside [0, 1/2]")));
        }
        if let Base::Biased { k } = base {
            if k < 2 {
                return Err(invalid("k", "biased base needs k >= 2"));
            }
        }
        if let HybridConcept::Symmetric(SymmetricFn::ByWeight(v)) = &concept {
            if v.len() != z.len() + 1 {
                return Err(invalid("concept", "weight table needs arity + 1 entries"));
            }
        }
        Ok(Self { z, base, rho, concept })
    }

    /// Selector from the low `n/2` bits of `bits`.
    pub fn with_selector_index(&self, bits: u64) -> Self {
        let mut out = self.clone();
        for (i, v) in out.z.iter_mut().enumerate() {
            *v = (bits >> i) & 1 == 1;
        }
        out
    }

    pub fn dim(&self) -> usize {
        2 * self.z.len()
    }

    pub fn arity(&self) -> usize {
        self.z.len()
    }

    /// Coordinate selected from pair `i`.
    pub fn selected(&self, i: usize) -> usize {
        2 * i + self.z[i] as usize
    }
}

/// `D^z` as a sampler.
pub fn build_dz(inst: &HybridInstance) -> Result<GenerativeDist> {
    GenerativeDist::correlated_pairs_with_source(inst.base.bias(), inst.rho, inst.z.clone())
}

/// `D^z` as a full table (`n <= 20`).
pub fn build_dz_exact(inst: &HybridInstance) -> Result<ExactDist> {
    ExactDist::from_generative(&build_dz(inst)?)
}

fn hybrid_weight_index(z: &[bool], x: u64) -> usize {
    z.iter()
        .enumerate()
        .filter(|&(i, &zi)| (x >> (2 * i + zi as usize)) & 1 == 1)
        .count()
}

fn hybrid_weight_words(z: &[bool], row: &[u64]) -> usize {
    z.iter()
        .enumerate()
        .filter(|&(i, &zi)| {
            let c = 2 * i + zi as usize;
            (row[c / 64] >> (c % 64)) & 1 == 1
        })
        .count()
}

/// `f^z(x) = f(x^z)`.
pub fn eval_fz(inst: &HybridInstance, x: &crate::BitString) -> Result<bool> {
    if x.len() != inst.dim() {
        return Err(Error::DimensionMismatch {
            expected: inst.dim(),
            found: x.len(),
        });
    }
    Ok(inst
        .concept
        .eval_weight(hybrid_weight_words(&inst.z, x.words()), inst.arity()))
}

/// `f^z` on the atom with index `x` (`n <= 64`).
pub fn eval_fz_index(inst: &HybridInstance, x: u64) -> bool {
    inst.concept.eval_weight(hybrid_weight_index(&inst.z, x), inst.arity())
}

/// Joint table of `(N^z_rho(x), f^z(x))` for `x ~ D^z`, label on the top
/// bit. The noise flips each selected coordinate with probability `rho`
/// and leaves partners untouched.
pub fn observed_dist_of_labeled_examples(inst: &HybridInstance) -> Result<ExactDist> {
    let n = inst.dim();
    if n > MAX_OBSERVED_DIM {
        return Err(Error::DimensionTooLarge {
            n,
            max: MAX_OBSERVED_DIM,
        });
    }
    let d = build_dz_exact(inst)?;
    let mut rates = vec![0.0; n];
    for i in 0..inst.arity() {
        rates[inst.selected(i)] = inst.rho;
    }
    labeled_push_forward(&d, |x| eval_fz_index(inst, x), &rates)
}

/// How [`pairwise_concept_distance`] evaluates the probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMethod {
    /// Sum over the exact table of `D^z` (`n <= 20`).
    Exact,
    /// `NS_{S,rho}(f)` with `S` the disagreement set of the selectors;
    /// requires a uniform base.
    Symmetric,
    MonteCarlo {
        samples: usize,
        seed: u64,
    },
}

/// `Pr_{x ~ D^z}[f^z(x) != f^{z'}(x)]` where `D^z` and the concept come
/// from `inst` with selector `z`.
pub fn pairwise_concept_distance(
    inst: &HybridInstance,
    z: &[bool],
    z_prime: &[bool],
    method: DistanceMethod,
) -> Result<f64> {
    let a = inst.arity();
    if z.len() != a || z_prime.len() != a {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: if z.len() != a { z.len() } else { z_prime.len() },
        });
    }
    let mut here = inst.clone();
    here.z = z.to_vec();
    if z == z_prime {
        return Ok(0.0);
    }
    let f = &inst.concept;
    match method {
        DistanceMethod::Exact => {
            let n = here.dim();
            if n > MAX_EXACT_DIM {
                return Err(Error::DimensionTooLarge { n, max: MAX_EXACT_DIM });
            }
            let d = build_dz_exact(&here)?;
            Ok(d.mass(|x| {
                f.eval_weight(hybrid_weight_index(z, x), a) != f.eval_weight(hybrid_weight_index(z_prime, x), a)
            }))
        }
        DistanceMethod::Symmetric => {
            if here.base != Base::Uniform {
                return Err(invalid("method", "the noise-sensitivity identity needs a uniform base"));
            }
            let s = z.iter().zip(z_prime).filter(|(p, q)| p != q).count();
            noise_sensitivity_symmetric(&f.as_symmetric(a), a, here.rho, s)
        }
        DistanceMethod::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(invalid("samples", "Monte Carlo needs at least one sample"));
            }
            let (wpr, rows) = clean_rows(&build_dz(&here)?, samples, seed);
            let hits = rows
                .chunks(wpr)
                .filter(|r| {
                    f.eval_weight(hybrid_weight_words(z, r), a) != f.eval_weight(hybrid_weight_words(z_prime, r), a)
                })
                .count();
            Ok(hits as f64 / samples as f64)
        }
    }
}

/// Minimum of [`pairwise_concept_distance`] over all ordered selector pairs
/// `z != z'` (computed in parallel).
pub fn min_pair_distance(inst: &HybridInstance, method: DistanceMethod) -> Result<f64> {
    let a = inst.arity();
    if a > 16 {
        return Err(invalid("n", "selector enumeration supports n/2 <= 16"));
    }
    let count = 1u64 << a;
    let sel = |b: u64| -> Vec<bool> { (0..a).map(|i| (b >> i) & 1 == 1).collect() };
    let pairs: Vec<(u64, u64)> = (0..count)
        .flat_map(|p| (0..count).filter(move |&q| q != p).map(move |q| (p, q)))
        .collect();
    let dists: Vec<f64> = pairs
        .par_iter()
        .map(|&(p, q)| pairwise_concept_distance(inst, &sel(p), &sel(q), method))
        .collect::<Result<_>>()?;
    Ok(dists.into_iter().fold(f64::INFINITY, f64::min))
}

/// Masses of the all-zero and single-one strings under the biased `D^z`
/// with `n = 2k`, and the resulting error threshold for a net.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConjLbTable {
    pub k: usize,
    pub rho: f64,
    /// `(1-1/k)^k (1-rho)^k`.
    pub all_zero_mass: f64,
    /// Mass of a single one on a selected coordinate:
    /// `(1-1/k)^{k-1} (1/k) (1-rho)^{k-1} rho`.
    pub false_one_cost: f64,
    /// Mass of a single one on a partner coordinate:
    /// `(1-1/k)^k (1-rho)^{k-1} rho`.
    pub false_zero_cost: f64,
    /// `(99k/100) * false_one_cost`.
    pub threshold_error: f64,
    /// `1/(8k)`, the bound the threshold meets at `rho = 1/k`.
    pub lower_bound: f64,
}

pub fn conjunction_lb_error_table(k: usize, rho: f64) -> Result<ConjLbTable> {
    if k < 2 {
        return Err(invalid("k", "need k >= 2"));
    }
    if !(0.0..=0.5).contains(&rho) {
        return Err(invalid("rho", format!("{rho} outside [0, 1/2]")));
    }
    let q = 1.0 - 1.0 / k as f64;
    let keep = 1.0 - rho;
    let ki = k as i32;
    let false_one_cost = q.powi(ki - 1) / k as f64 * keep.powi(ki - 1) * rho;
    Ok(ConjLbTable {
        k,
        rho,
        all_zero_mass: q.powi(ki) * keep.powi(ki),
        false_one_cost,
        false_zero_cost: q.powi(ki) * keep.powi(ki - 1) * rho,
        threshold_error: 0.99 * k as f64 * false_one_cost,
        lower_bound: 1.0 / (8.0 * k as f64),
    })
}

/// The same quantities read off the exact table of `D^z` for the negated
/// conjunction instance at `n = 2k` (`k <= 10`), together with checks that
/// the target labels the basis strings as the costs assume.
pub fn conjunction_lb_from_table(k: usize, rho: f64, z: &[bool]) -> Result<ConjLbTable> {
    if z.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: z.len(),
        });
    }
    let inst = HybridInstance::new(
        z.to_vec(),
        Base::Biased { k },
        rho,
        HybridConcept::Conjunction { negated: true },
    )?;
    let d = build_dz_exact(&inst)?;
    let mut in_cost = f64::NAN;
    let mut out_cost = f64::NAN;
    for i in 0..k {
        let sel = inst.selected(i);
        let partner = sel ^ 1;
        let (pi, po) = (d.prob(1 << sel), d.prob(1 << partner));
        if eval_fz_index(&inst, 1 << sel) || !eval_fz_index(&inst, 1 << partner) {
            return Err(invalid("concept", "basis strings labelled unexpectedly"));
        }
        if i == 0 {
            in_cost = pi;
            out_cost = po;
        } else if (pi - in_cost).abs() > 1e-15 || (po - out_cost).abs() > 1e-15 {
            return Err(invalid("table", "basis masses differ across pairs"));
        }
    }
    if !eval_fz_index(&inst, 0) {
        return Err(invalid("concept", "all-zero string labelled 0"));
    }
    Ok(ConjLbTable {
        k,
        rho,
        all_zero_mass: d.prob(0),
        false_one_cost: in_cost,
        false_zero_cost: out_cost,
        threshold_error: 0.99 * k as f64 * in_cost,
        lower_bound: 1.0 / (8.0 * k as f64),
    })
}

/// One concept on its own distribution, both as tables over `{0,1}^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverInstance {
    pub name: String,
    pub dist: ExactDist,
    pub labels: Vec<bool>,
}

impl CoverInstance {
    pub fn from_hybrid(inst: &HybridInstance) -> Result<Self> {
        let n = inst.dim();
        if n > MAX_COVER_DIM {
            return Err(Error::DimensionTooLarge { n, max: MAX_COVER_DIM });
        }
        let name = format!(
            "{}^{}",
            inst.concept.name(),
            inst.z.iter().map(|&b| if b { '1' } else { '0' }).collect::<String>()
        );
        Ok(Self {
            name,
            dist: build_dz_exact(inst)?,
            labels: (0..1u64 << n).map(|x| eval_fz_index(inst, x)).collect(),
        })
    }
}

/// Result of [`greedy_net_cover`]. Pool index 0 is the constant 0, index 1
/// the constant 1, and index `2 + j` the concept of instance `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetCover {
    pub chosen: Vec<usize>,
    pub chosen_names: Vec<String>,
    pub size: usize,
    /// Instances no pool member approximates within `eps`.
    pub uncoverable: Vec<usize>,
}

/// Greedy set cover of the instances by pool members with error at most
/// `eps`; ties go to the lowest pool index. Greedy size bounds the optimum
/// from above and is within a factor `ln(#instances)` of it.
pub fn greedy_net_cover(instances: &[CoverInstance], eps: f64) -> Result<NetCover> {
    let Some(first) = instances.first() else {
        return Ok(NetCover {
            chosen: Vec::new(),
            chosen_names: Vec::new(),
            size: 0,
            uncoverable: Vec::new(),
        });
    };
    let n = first.dist.dim();
    if n > MAX_COVER_DIM {
        return Err(Error::DimensionTooLarge { n, max: MAX_COVER_DIM });
    }
    for inst in instances {
        if inst.dist.dim() != n || inst.labels.len() != 1 << n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: inst.dist.dim(),
            });
        }
    }
    let atoms = 1usize << n;
    let mut pool: Vec<(String, Vec<bool>)> = vec![("0".into(), vec![false; atoms]), ("1".into(), vec![true; atoms])];
    pool.extend(instances.iter().map(|i| (i.name.clone(), i.labels.clone())));
    let covers: Vec<Vec<bool>> = pool
        .par_iter()
        .map(|(_, h)| {
            instances
                .iter()
                .map(|inst| inst.dist.mass(|x| h[x as usize] != inst.labels[x as usize]) <= eps)
                .collect()
        })
        .collect();
    let mut uncovered: Vec<bool> = (0..instances.len()).map(|j| covers.iter().any(|c| c[j])).collect();
    let uncoverable: Vec<usize> = (0..instances.len()).filter(|&j| !uncovered[j]).collect();
    let mut chosen = Vec::new();
    loop {
        let mut best = (0usize, 0usize);
        for (p, c) in covers.iter().enumerate() {
            let gain = c.iter().zip(&uncovered).filter(|(a, b)| **a && **b).count();
            if gain > best.0 {
                best = (gain, p);
            }
        }
        if best.0 == 0 {
            break;
        }
        for (u, &c) in uncovered.iter_mut().zip(&covers[best.1]) {
            if c {
                *u = false;
            }
        }
        chosen.push(best.1);
    }
    Ok(NetCover {
        chosen_names: chosen.iter().map(|&p| pool[p].0.clone()).collect(),
        size: chosen.len(),
        chosen,
        uncoverable,
    })
}

/// Concept families probed by the `lowerbound` experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Parity,
    Majority,
    /// Negated conjunction over a bias-`1/k` base with `k = n/2`.
    Conjunction,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Parity => "parity",
            Family::Majority => "majority",
            Family::Conjunction => "conjunction",
        }
    }

    pub fn instance(self, n: usize, rho: f64) -> Result<HybridInstance> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(invalid("n", "hybrid instances need an even dimension >= 2"));
        }
        let z = vec![false; n / 2];
        match self {
            Family::Parity => HybridInstance::new(z, Base::Uniform, rho, HybridConcept::Symmetric(SymmetricFn::Parity)),
            Family::Majority => {
                HybridInstance::new(z, Base::Uniform, rho, HybridConcept::Symmetric(SymmetricFn::Majority))
            }
            Family::Conjunction => HybridInstance::new(
                z,
                Base::Biased { k: (n / 2).max(2) },
                rho,
                HybridConcept::Conjunction { negated: true },
            ),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parity" => Ok(Family::Parity),
            "majority" => Ok(Family::Majority),
            "conjunction" => Ok(Family::Conjunction),
            other => Err(invalid("family", format!("unknown family `{other}`"))),
        }
    }
}

/// One row of the lower-bound trend table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerboundRow {
    pub n: usize,
    pub rho: f64,
    pub eps: f64,
    pub family: Family,
    pub cover: NetCover,
    pub instances: usize,
    pub min_pair_dist: f64,
}

impl LowerboundRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.n,
            self.rho,
            self.eps,
            self.family.name(),
            self.cover.size,
            self.min_pair_dist
        )
    }
}

/// Builds every `f^z` of a family at dimension `n`, covers them greedily
/// and reports the closest pair of concepts.
pub fn lowerbound_probe(n: usize, rho: f64, eps: f64, family: Family) -> Result<LowerboundRow> {
    let proto = family.instance(n, rho)?;
    if n > MAX_COVER_DIM {
        return Err(Error::DimensionTooLarge { n, max: MAX_COVER_DIM });
    }
    let instances: Vec<CoverInstance> = (0..1u64 << proto.arity())
        .into_par_iter()
        .map(|b| CoverInstance::from_hybrid(&proto.with_selector_index(b)))
        .collect::<Result<_>>()?;
    let cover = greedy_net_cover(&instances, eps)?;
    let min_pair_dist = if instances.len() > 1 {
        min_pair_distance(&proto, DistanceMethod::Exact)?
    } else {
        f64::NAN
    };
    Ok(LowerboundRow {
        n,
        rho,
        eps,
        family,
        instances: instances.len(),
        cover,
        min_pair_dist,
    })
}

pub fn lowerbound_csv(rows: &[LowerboundRow]) -> String {
    let mut s = format!("{LOWERBOUND_CSV_HEADER}\n");
    for r in rows {
        writeln!(s, "{}", r.csv_line()).expect("write to string");
    }
    s
}
