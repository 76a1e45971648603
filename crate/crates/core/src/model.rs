//! Ground-truth distributions, attribute noise and the noisy example oracle.

use std::io::{BufRead, Write};

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{words_for, BitString, Conjunction};
use crate::error::{invalid, Error, Result};
use crate::rng::{child_rng, Purpose};

/// Per-coordinate flip probabilities `nu_i` with a declared margin `gamma`:
/// `0 <= nu_i < 1/2 - gamma` for all `i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseVector {
    nu: Vec<f64>,
    gamma: f64,
}

impl NoiseVector {
    pub fn new(nu: Vec<f64>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 0.5) {
            return Err(invalid("gamma", format!("{gamma} is outside (0, 1/2]")));
        }
        for (i, &v) in nu.iter().enumerate() {
            if !(v >= 0.0 && v < 0.5 - gamma) {
                return Err(invalid(
                    "nu",
                    format!("nu_{} = {v} violates 0 <= nu < 1/2 - gamma = {}", i + 1, 0.5 - gamma),
                ));
            }
        }
        Ok(Self { nu, gamma })
    }

    /// Accepts any rates in `[0, 1/2)`; the margin is set to half the gap
    /// between the largest rate and 1/2.
    pub fn from_rates(nu: Vec<f64>) -> Result<Self> {
        let max = nu.iter().copied().fold(0.0f64, f64::max);
        if nu.iter().any(|v| !(0.0..0.5).contains(v)) {
            return Err(invalid("nu", format!("rates must lie in [0, 1/2), max is {max}")));
        }
        Self::new(nu, (0.5 - max) / 2.0)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            nu: vec![0.0; n],
            gamma: 0.25,
        }
    }

    pub fn uniform(n: usize, nu: f64, gamma: f64) -> Result<Self> {
        Self::new(vec![nu; n], gamma)
    }

    pub fn rates(&self) -> &[f64] {
        &self.nu
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }

    pub fn max_rate(&self) -> f64 {
        self.nu.iter().copied().fold(0.0, f64::max)
    }

    fn flippers(&self) -> Vec<(usize, Bernoulli)> {
        self.nu
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, &v)| (i, Bernoulli::new(v).expect("rate validated")))
            .collect()
    }
}

/// Ground-truth distribution families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    /// Independent bits with `Pr[x_i = 1] = p[i]`.
    Product { p: Vec<f64> },
    /// Coordinates `(2i, 2i+1)` form pairs. The source coordinate of pair `i`
    /// (`2i` when `source[i]` is false, else `2i+1`) is `Bernoulli(base_bias)`;
    /// its partner is a copy flipped with probability `rho`. Pairs are
    /// mutually independent.
    CorrelatedPairs {
        base_bias: f64,
        rho: f64,
        source: Vec<bool>,
    },
    /// The first `free` coordinates are uniform; coordinate `free + j` is the
    /// XOR of the free bits listed in `parities[j]` (each of size >= 2,
    /// pairwise distinct). Uniform and pairwise independent.
    ParityExtension { free: usize, parities: Vec<Vec<usize>> },
}

/// A sampleable ground-truth distribution over `{0,1}^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeDist {
    kind: DistKind,
    dim: usize,
}

impl GenerativeDist {
    pub fn product(p: Vec<f64>) -> Result<Self> {
        if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid("p", format!("bias {bad} outside [0, 1]")));
        }
        Ok(Self {
            dim: p.len(),
            kind: DistKind::Product { p },
        })
    }

    pub fn uniform(n: usize) -> Self {
        Self::product(vec![0.5; n]).expect("valid bias")
    }

    /// Pairs with the odd (first) coordinate as source.
    pub fn correlated_pairs(n: usize, base_bias: f64, rho: f64) -> Result<Self> {
        if !n.is_multiple_of(2) {
            return Err(invalid("n", "correlated pairs need an even dimension"));
        }
        Self::correlated_pairs_with_source(base_bias, rho, vec![false; n / 2])
    }

    pub fn correlated_pairs_with_source(base_bias: f64, rho: f64, source: Vec<bool>) -> Result<Self> {
        if !(0.0..=1.0).contains(&base_bias) {
            return Err(invalid("base_bias", format!("{base_bias} outside [0, 1]")));
        }
        if !(0.0..=0.5).contains(&rho) {
            return Err(invalid("rho", format!("{rho} outside [0, 1/2]")));
        }
        Ok(Self {
            dim: 2 * source.len(),
            kind: DistKind::CorrelatedPairs { base_bias, rho, source },
        })
    }

    pub fn parity_extension(free: usize, parities: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let mut canon = Vec::with_capacity(parities.len());
        for set in parities {
            let mut s = set.clone();
            s.sort_unstable();
            s.dedup();
            if s.len() != set.len() || s.len() < 2 {
                return Err(invalid("parities", "each parity needs at least two distinct free bits"));
            }
            if s.iter().any(|&i| i >= free) {
                return Err(invalid("parities", "parity references a missing free bit"));
            }
            if !seen.insert(s.clone()) {
                return Err(invalid("parities", "repeated parity set breaks pairwise independence"));
            }
            canon.push(s);
        }
        Ok(Self {
            dim: free + canon.len(),
            kind: DistKind::ParityExtension { free, parities: canon },
        })
    }

    /// All parities of two or more of `free` uniform bits: `n = 2^free - 1`.
    pub fn full_parity_extension(free: usize) -> Result<Self> {
        if free == 0 || free > 5 {
            return Err(invalid("free", "full parity extension supports 1..=5 free bits"));
        }
        let parities = (1u32..(1 << free))
            .filter(|s| s.count_ones() >= 2)
            .map(|s| (0..free).filter(|&i| s >> i & 1 == 1).collect())
            .collect();
        Self::parity_extension(free, parities)
    }

    pub fn kind(&self) -> &DistKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_product(&self) -> bool {
        matches!(self.kind, DistKind::Product { .. })
    }

    pub(crate) fn sampler(&self) -> CleanSampler<'_> {
        let bern = |p: f64| Bernoulli::new(p).expect("validated probability");
        match &self.kind {
            DistKind::Product { p } => CleanSampler::Product(p.iter().map(|&q| bern(q)).collect()),
            DistKind::CorrelatedPairs { base_bias, rho, source } => CleanSampler::Pairs {
                base: bern(*base_bias),
                flip: bern(*rho),
                source,
            },
            DistKind::ParityExtension { free, parities } => CleanSampler::Parity { free: *free, parities },
        }
    }
}

pub(crate) enum CleanSampler<'a> {
    Product(Vec<Bernoulli>),
    Pairs {
        base: Bernoulli,
        flip: Bernoulli,
        source: &'a [bool],
    },
    Parity {
        free: usize,
        parities: &'a [Vec<usize>],
    },
}

#[inline]
fn set_bit(row: &mut [u64], i: usize, v: bool) {
    if v {
        row[i / 64] |= 1 << (i % 64);
    }
}

#[inline]
fn get_bit(row: &[u64], i: usize) -> bool {
    (row[i / 64] >> (i % 64)) & 1 == 1
}

impl CleanSampler<'_> {
    /// Writes one draw into a zeroed `row`.
    pub(crate) fn fill<R: Rng + ?Sized>(&self, rng: &mut R, row: &mut [u64]) {
        match self {
            CleanSampler::Product(bs) => {
                for (i, b) in bs.iter().enumerate() {
                    set_bit(row, i, b.sample(rng));
                }
            }
            CleanSampler::Pairs { base, flip, source } => {
                for (i, &src_second) in source.iter().enumerate() {
                    let v = base.sample(rng);
                    let partner = v ^ flip.sample(rng);
                    let (s, t) = if src_second {
                        (2 * i + 1, 2 * i)
                    } else {
                        (2 * i, 2 * i + 1)
                    };
                    set_bit(row, s, v);
                    set_bit(row, t, partner);
                }
            }
            CleanSampler::Parity { free, parities } => {
                let mut w = rng.next_u64();
                for i in 0..*free {
                    if i > 0 && i % 64 == 0 {
                        w = rng.next_u64();
                    }
                    set_bit(row, i, (w >> (i % 64)) & 1 == 1);
                }
                for (j, set) in parities.iter().enumerate() {
                    let v = set.iter().fold(false, |acc, &i| acc ^ get_bit(row, i));
                    set_bit(row, free + j, v);
                }
            }
        }
    }
}

/// One draw `x ~ dist`, deterministic in `seed`.
pub fn sample_clean(dist: &GenerativeDist, seed: u64) -> BitString {
    let mut rng = child_rng(seed, 0, Purpose::Clean);
    let mut row = vec![0u64; words_for(dist.dim())];
    dist.sampler().fill(&mut rng, &mut row);
    BitString::from_words(dist.dim(), row).expect("sampler respects dimension")
}

/// Flips each bit `i` of `x` independently with probability `nu_i`.
pub fn apply_noise(x: &BitString, nu: &NoiseVector, seed: u64) -> Result<BitString> {
    if x.len() != nu.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: nu.len(),
        });
    }
    let mut rng = child_rng(seed, 0, Purpose::Noise);
    let mut out = x.clone();
    for (i, b) in nu.flippers() {
        if b.sample(&mut rng) {
            out.flip(i);
        }
    }
    Ok(out)
}

/// A noisy attribute vector with the label of its clean preimage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub x_tilde: BitString,
    pub label: bool,
}

/// A batch of labeled examples stored as packed rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    n: usize,
    words_per_row: usize,
    rows: Vec<u64>,
    labels: Vec<bool>,
}

impl SampleSet {
    pub fn with_capacity(n: usize, m: usize) -> Self {
        let wpr = words_for(n).max(1);
        Self {
            n,
            words_per_row: wpr,
            rows: Vec::with_capacity(m * wpr),
            labels: Vec::with_capacity(m),
        }
    }

    pub fn from_examples(n: usize, examples: impl IntoIterator<Item = LabeledExample>) -> Result<Self> {
        let mut s = Self::with_capacity(n, 0);
        for e in examples {
            s.push(&e.x_tilde, e.label)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, x: &BitString, label: bool) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        self.rows.extend_from_slice(x.words());
        if x.words().is_empty() {
            self.rows.push(0);
        }
        self.labels.push(label);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[u64] {
        &self.rows[t * self.words_per_row..(t + 1) * self.words_per_row]
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn label(&self, t: usize) -> bool {
        self.labels[t]
    }

    pub fn bit(&self, t: usize, i: usize) -> bool {
        get_bit(self.row(t), i)
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn example(&self, t: usize) -> LabeledExample {
        let words = if self.n == 0 { Vec::new() } else { self.row(t).to_vec() };
        LabeledExample {
            x_tilde: BitString::from_words(self.n, words).expect("rows respect dimension"),
            label: self.labels[t],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = LabeledExample> + '_ {
        (0..self.len()).map(|t| self.example(t))
    }

    /// Copy with every row XORed against `mask` (labels unchanged).
    pub fn xor_attributes(&self, mask: &BitString) -> Result<SampleSet> {
        if mask.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: mask.len(),
            });
        }
        let mut out = self.clone();
        if self.n == 0 {
            return Ok(out);
        }
        for row in out.rows.chunks_mut(self.words_per_row) {
            for (w, m) in row.iter_mut().zip(mask.words()) {
                *w ^= m;
            }
        }
        Ok(out)
    }

    /// Reorders examples by `perm` (a permutation of `0..len`).
    pub fn permuted(&self, perm: &[usize]) -> SampleSet {
        let mut out = Self::with_capacity(self.n, self.len());
        for &t in perm {
            out.rows.extend_from_slice(self.row(t));
            out.labels.push(self.labels[t]);
        }
        out
    }

    /// Writes the text dump: a header `n=<n>,m=<m>,seed=<seed>` then one
    /// `<bits>,<label>` line per example, bits in coordinate order.
    pub fn write_dump<W: Write>(&self, mut w: W, seed: u64) -> Result<()> {
        writeln!(w, "n={},m={},seed={}", self.n, self.len(), seed)?;
        let mut line = String::with_capacity(self.n + 3);
        for t in 0..self.len() {
            line.clear();
            let row = self.row(t);
            for i in 0..self.n {
                line.push(if get_bit(row, i) { '1' } else { '0' });
            }
            line.push(',');
            line.push(if self.labels[t] { '1' } else { '0' });
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    /// Parses a dump written by [`SampleSet::write_dump`]; returns the seed too.
    pub fn read_dump<R: BufRead>(r: R) -> Result<(SampleSet, u64)> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty dump".into()))??;
        let mut n = None;
        let mut m = None;
        let mut seed = None;
        for part in header.trim().split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header field {part:?}")))?;
            let parsed: u64 = v
                .parse()
                .map_err(|_| Error::Parse(format!("bad header value {part:?}")))?;
            match k {
                "n" => n = Some(parsed as usize),
                "m" => m = Some(parsed as usize),
                "seed" => seed = Some(parsed),
                _ => return Err(Error::Parse(format!("unknown header field {k:?}"))),
            }
        }
        let (n, m, seed) = match (n, m, seed) {
            (Some(n), Some(m), Some(s)) => (n, m, s),
            _ => return Err(Error::Parse("header needs n, m and seed".into())),
        };
        let mut out = Self::with_capacity(n, m);
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (bits, label) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("bad example line {line:?}")))?;
            let x: BitString = bits.parse()?;
            let label = match label {
                "0" => false,
                "1" => true,
                other => return Err(Error::Parse(format!("bad label {other:?}"))),
            };
            out.push(&x, label)?;
        }
        if out.len() != m {
            return Err(Error::Parse(format!("header declares m={m}, found {}", out.len())));
        }
        Ok((out, seed))
    }
}

/// Draws `m_samples` i.i.d. examples `(apply_noise(x), c(x))` with `x ~ dist`.
///
/// Clean draws and noise flips come from separate child streams of `seed`,
/// so the clean sequence (and hence the labels) does not depend on `nu`.
pub fn noisy_oracle(
    dist: &GenerativeDist,
    c: &Conjunction,
    nu: &NoiseVector,
    m_samples: usize,
    seed: u64,
) -> Result<SampleSet> {
    let n = dist.dim();
    if nu.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: nu.len(),
        });
    }
    c.check_dimension(n)?;
    if m_samples == 0 {
        return Err(invalid("m_samples", "must be at least 1"));
    }
    let mut clean_rng = child_rng(seed, 0, Purpose::Clean);
    let mut noise_rng = child_rng(seed, 0, Purpose::Noise);
    let sampler = dist.sampler();
    let flippers = nu.flippers();
    let compiled = c.compile(n);
    let mut out = SampleSet::with_capacity(n, m_samples);
    let wpr = out.words_per_row;
    let mut row = vec![0u64; wpr];
    for _ in 0..m_samples {
        row.iter_mut().for_each(|w| *w = 0);
        sampler.fill(&mut clean_rng, &mut row);
        let label = compiled.eval_words(&row);
        for (i, b) in &flippers {
            if b.sample(&mut noise_rng) {
                row[i / 64] ^= 1 << (i % 64);
            }
        }
        out.rows.extend_from_slice(&row);
        out.labels.push(label);
    }
    Ok(out)
}

/// `m` clean draws from `dist` as packed rows (used for Monte Carlo error).
pub(crate) fn clean_rows(dist: &GenerativeDist, m: usize, seed: u64) -> (usize, Vec<u64>) {
    let wpr = words_for(dist.dim()).max(1);
    let mut rng = child_rng(seed, 0, Purpose::Evaluation);
    let sampler = dist.sampler();
    let mut rows = vec![0u64; m * wpr];
    for row in rows.chunks_mut(wpr) {
        sampler.fill(&mut rng, row);
    }
    (wpr, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_vector_validation() {
        assert!(NoiseVector::new(vec![0.1, 0.2], 0.25).is_ok());
        assert!(NoiseVector::new(vec![0.25], 0.25).is_err());
        assert!(NoiseVector::new(vec![-0.01], 0.25).is_err());
        assert!(NoiseVector::new(vec![0.1], 0.0).is_err());
        assert!(NoiseVector::from_rates(vec![0.5]).is_err());
        assert!(NoiseVector::from_rates(vec![0.45, 0.0]).is_ok());
    }

    #[test]
    fn degenerate_biases() {
        let ones = GenerativeDist::product(vec![1.0; 70]).unwrap();
        let zeros = GenerativeDist::product(vec![0.0; 70]).unwrap();
        for seed in 0..20 {
            assert_eq!(sample_clean(&ones, seed), BitString::ones(70));
            assert_eq!(sample_clean(&zeros, seed), BitString::zeros(70));
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let d = GenerativeDist::uniform(20);
        for seed in 0..50 {
            let x = sample_clean(&d, seed);
            assert_eq!(apply_noise(&x, &NoiseVector::zeros(20), seed).unwrap(), x);
        }
    }

    #[test]
    fn noise_length_mismatch() {
        let x = BitString::zeros(4);
        assert!(matches!(
            apply_noise(&x, &NoiseVector::zeros(3), 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn parity_extension_rejects_bad_sets() {
        assert!(GenerativeDist::parity_extension(2, vec![vec![0]]).is_err());
        assert!(GenerativeDist::parity_extension(2, vec![vec![0, 2]]).is_err());
        assert!(GenerativeDist::parity_extension(3, vec![vec![0, 1], vec![1, 0]]).is_err());
        assert_eq!(GenerativeDist::full_parity_extension(3).unwrap().dim(), 7);
    }

    #[test]
    fn parity_extension_sample_is_consistent() {
        let d = GenerativeDist::parity_extension(2, vec![vec![0, 1]]).unwrap();
        for seed in 0..100 {
            let x = sample_clean(&d, seed);
            assert_eq!(x.get(2), x.get(0) ^ x.get(1));
        }
    }

    #[test]
    fn empty_conjunction_labels_all_ones() {
        let d = GenerativeDist::uniform(6);
        let nu = NoiseVector::uniform(6, 0.2, 0.25).unwrap();
        let s = noisy_oracle(&d, &Conjunction::empty(), &nu, 500, 3).unwrap();
        assert!(s.labels().iter().all(|&l| l));
    }

    #[test]
    fn oracle_is_deterministic() {
        let d = GenerativeDist::correlated_pairs(10, 0.3, 0.1).unwrap();
        let nu = NoiseVector::uniform(10, 0.1, 0.25).unwrap();
        let c: Conjunction = "x1&!x4".parse().unwrap();
        let a = noisy_oracle(&d, &c, &nu, 1000, 77).unwrap();
        let b = noisy_oracle(&d, &c, &nu, 1000, 77).unwrap();
        assert_eq!(a, b);
        let e = noisy_oracle(&d, &c, &nu, 1000, 78).unwrap();
        assert_ne!(a, e);
    }

    #[test]
    fn labels_do_not_depend_on_noise_stream() {
        let d = GenerativeDist::uniform(8);
        let c: Conjunction = "x1&x2".parse().unwrap();
        let a = noisy_oracle(&d, &c, &NoiseVector::zeros(8), 2000, 5).unwrap();
        let b = noisy_oracle(&d, &c, &NoiseVector::uniform(8, 0.2, 0.25).unwrap(), 2000, 5).unwrap();
        assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn dump_round_trip() {
        let d = GenerativeDist::uniform(70);
        let c: Conjunction = "x1&x66".parse().unwrap();
        let nu = NoiseVector::uniform(70, 0.1, 0.25).unwrap();
        let s = noisy_oracle(&d, &c, &nu, 30, 9).unwrap();
        let mut buf = Vec::new();
        s.write_dump(&mut buf, 9).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("n=70,m=30,seed=9\n"));
        let (back, seed) = SampleSet::read_dump(buf.as_slice()).unwrap();
        assert_eq!(seed, 9);
        assert_eq!(back, s);
    }

    #[test]
    fn dump_rejects_count_mismatch() {
        let text = "n=2,m=2,seed=0\n01,1\n";
        assert!(SampleSet::read_dump(text.as_bytes()).is_err());
    }
}
