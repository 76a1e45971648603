//! Exact small-dimension probability tables.
//!
//! A table over `{0,1}^n` has `2^n` entries; entry `idx` is the probability
//! of the string whose bit `i` is bit `i` of `idx` (bit `i` least
//! significant). Transforms are exact up to floating-point rounding and are
//! the oracle behind the sampled pipelines.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bits::Conjunction;
use crate::error::{invalid, Error, Result};
use crate::model::{DistKind, GenerativeDist, NoiseVector};

/// Largest dimension with a full table (2^20 doubles, 8 MiB).
pub const MAX_EXACT_DIM: usize = 20;

const SUM_TOL: f64 = 1e-10;
const NEG_TOL: f64 = -1e-15;

/// Full probability table over `{0,1}^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDist {
    n: usize,
    probs: Vec<f64>,
}

impl ExactDist {
    /// Validates and takes ownership of a table. Entries in `[-1e-15, 0)` are
    /// clamped to zero; the total must be 1 within `1e-10`.
    pub fn new(n: usize, mut probs: Vec<f64>) -> Result<Self> {
        if n > MAX_EXACT_DIM {
            return Err(Error::DimensionTooLarge { n, max: MAX_EXACT_DIM });
        }
        if probs.len() != 1usize << n {
            return Err(Error::DimensionMismatch {
                expected: 1 << n,
                found: probs.len(),
            });
        }
        for (idx, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() || *p < NEG_TOL {
                return Err(Error::NotADistribution(format!("entry {idx} is {p}")));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total = neumaier_sum(probs.iter().copied());
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::NotADistribution(format!("total mass {total}")));
        }
        Ok(Self { n, probs })
    }

    pub fn point_mass(n: usize, index: u64) -> Result<Self> {
        let mut probs = vec![0.0; 1 << n];
        probs[index as usize] = 1.0;
        Self::new(n, probs)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(n, vec![1.0 / (1u64 << n) as f64; 1 << n])
    }

    pub fn product(p: &[f64]) -> Result<Self> {
        let factors: Vec<Vec<f64>> = p.iter().map(|&q| vec![1.0 - q, q]).collect();
        Self::new(p.len(), kron_factors(&factors, &vec![1; p.len()]))
    }

    /// Exact table of a generative distribution (`dim <= 20`).
    pub fn from_generative(d: &GenerativeDist) -> Result<Self> {
        let n = d.dim();
        if n > MAX_EXACT_DIM {
            return Err(Error::DimensionTooLarge { n, max: MAX_EXACT_DIM });
        }
        match d.kind() {
            DistKind::Product { p } => Self::product(p),
            DistKind::CorrelatedPairs { base_bias, rho, source } => {
                let (b, r) = (*base_bias, *rho);
                let factors: Vec<Vec<f64>> = source
                    .iter()
                    .map(|&src_second| {
                        // 2-bit block, low bit = coordinate 2i.
                        let joint = |src: bool, partner: bool| {
                            let ps = if src { b } else { 1.0 - b };
                            ps * if src == partner { 1.0 - r } else { r }
                        };
                        let mut t = vec![0.0; 4];
                        for (idx, slot) in t.iter_mut().enumerate() {
                            let lo = idx & 1 == 1;
                            let hi = idx & 2 == 2;
                            *slot = if src_second { joint(hi, lo) } else { joint(lo, hi) };
                        }
                        t
                    })
                    .collect();
                Self::new(n, kron_factors(&factors, &vec![2; source.len()]))
            }
            DistKind::ParityExtension { free, parities } => {
                let mut probs = vec![0.0; 1 << n];
                let w = 1.0 / (1u64 << free) as f64;
                for a in 0u64..(1 << free) {
                    let mut idx = a;
                    for (j, set) in parities.iter().enumerate() {
                        let v = set.iter().fold(0, |acc, &i| acc ^ ((a >> i) & 1));
                        idx |= v << (free + j);
                    }
                    probs[idx as usize] += w;
                }
                Self::new(n, probs)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, index: u64) -> f64 {
        self.probs[index as usize]
    }

    /// Total probability of atoms satisfying `pred`.
    pub fn mass(&self, pred: impl Fn(u64) -> bool) -> f64 {
        neumaier_sum(
            self.probs
                .iter()
                .enumerate()
                .filter(|(idx, _)| pred(*idx as u64))
                .map(|(_, &p)| p),
        )
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.mass(|x| (x >> i) & 1 == 1)
    }

    /// `E[x_i x_j]`.
    pub fn pair_moment(&self, i: usize, j: usize) -> f64 {
        self.mass(|x| (x >> i) & 1 == 1 && (x >> j) & 1 == 1)
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.pair_moment(i, j) - self.mean(i) * self.mean(j)
    }

    /// Joint marginal on `indices`; output bit `t` is coordinate `indices[t]`.
    pub fn marginal(&self, indices: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; 1 << indices.len()];
        for (idx, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut key = 0usize;
            for (t, &i) in indices.iter().enumerate() {
                key |= ((idx >> i) & 1) << t;
            }
            out[key] += p;
        }
        out
    }

    /// Distribution of the first `n - 1` coordinates (drops the top bit).
    pub fn drop_top_coordinate(&self) -> Result<ExactDist> {
        if self.n == 0 {
            return Err(invalid("n", "no coordinate to drop"));
        }
        let half = 1 << (self.n - 1);
        let probs = (0..half).map(|i| self.probs[i] + self.probs[i + half]).collect();
        ExactDist::new(self.n - 1, probs)
    }

    /// Probability that `c(x) = 1`.
    pub fn label_mass(&self, c: &Conjunction) -> Result<f64> {
        c.check_dimension(self.n)?;
        let (mask, want) = c.index_masks();
        Ok(self.mass(|x| x & mask == want))
    }

    /// Writes the binary table and a JSON sidecar at `<path>.json`.
    ///
    /// Layout: 8-byte magic `ATNXDST1`, `n` as little-endian `u64`, then
    /// `2^n` little-endian `f64` entries.
    pub fn write_file(&self, path: &Path, provenance: &str) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(FILE_MAGIC)?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        for p in &self.probs {
            w.write_all(&p.to_le_bytes())?;
        }
        w.flush()?;
        let sidecar = Sidecar {
            n: self.n,
            entries: self.probs.len(),
            layout: "index bit i = coordinate i (least significant first), f64 little-endian".into(),
            provenance: provenance.into(),
        };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[..8] != FILE_MAGIC {
            return Err(Error::Parse("bad magic in exact table file".into()));
        }
        let n = u64::from_le_bytes(header[8..].try_into().expect("8 bytes")) as usize;
        if n > MAX_EXACT_DIM {
            return Err(Error::DimensionTooLarge { n, max: MAX_EXACT_DIM });
        }
        let mut buf = Vec::with_capacity(8 << n);
        r.read_to_end(&mut buf)?;
        if buf.len() != 8 << n {
            return Err(Error::Parse(format!(
                "expected {} bytes of table data, found {}",
                8 << n,
                buf.len()
            )));
        }
        let probs = buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        Self::new(n, probs)
    }
}

const FILE_MAGIC: &[u8; 8] = b"ATNXDST1";

#[derive(Serialize, Deserialize)]
struct Sidecar {
    n: usize,
    entries: usize,
    layout: String,
    provenance: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Kronecker product of block factors; block `b` covers `widths[b]` bits,
/// lower blocks occupying lower bits.
fn kron_factors(factors: &[Vec<f64>], widths: &[usize]) -> Vec<f64> {
    let mut table = vec![1.0];
    for (f, &w) in factors.iter().zip(widths) {
        debug_assert_eq!(f.len(), 1 << w);
        let mut next = Vec::with_capacity(table.len() << w);
        for &fv in f {
            next.extend(table.iter().map(|&t| t * fv));
        }
        table = next;
    }
    table
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Applies the 2x2 matrix `[[a, b], [c, d]]` to axis `axis` of `table`:
/// `(p0, p1) -> (a p0 + b p1, c p0 + d p1)`.
fn sweep_axis(table: &mut [f64], axis: usize, m: [[f64; 2]; 2]) {
    let stride = 1usize << axis;
    for block in table.chunks_mut(stride << 1) {
        let (lo, hi) = block.split_at_mut(stride);
        for (p0, p1) in lo.iter_mut().zip(hi.iter_mut()) {
            let (a, b) = (*p0, *p1);
            *p0 = m[0][0] * a + m[0][1] * b;
            *p1 = m[1][0] * a + m[1][1] * b;
        }
    }
}

/// Channel `[[1-v, v], [v, 1-v]]` on each axis with rate `rates[axis]`.
pub(crate) fn channel_in_place(table: &mut [f64], rates: &[f64]) {
    for (axis, &v) in rates.iter().enumerate() {
        if v != 0.0 {
            sweep_axis(table, axis, [[1.0 - v, v], [v, 1.0 - v]]);
        }
    }
}

/// Distribution of `x XOR noise` for `x ~ d`: the Kronecker product of the
/// per-bit channel matrices acting on the table, in `O(n 2^n)`.
pub fn push_forward_noise(d: &ExactDist, nu: &NoiseVector) -> Result<ExactDist> {
    if nu.len() != d.n {
        return Err(Error::DimensionMismatch {
            expected: d.n,
            found: nu.len(),
        });
    }
    let mut probs = d.probs.clone();
    channel_in_place(&mut probs, nu.rates());
    ExactDist::new(d.n, probs)
}

/// Applies the inverse channel
/// `1/(1-2v) [[1-v, -v], [-v, 1-v]]` on every axis.
///
/// Fails with [`Error::NotADistribution`] when the input is not the image of
/// a distribution under the forward channel.
pub fn inverse_noise(d: &ExactDist, nu: &NoiseVector) -> Result<ExactDist> {
    if nu.len() != d.n {
        return Err(Error::DimensionMismatch {
            expected: d.n,
            found: nu.len(),
        });
    }
    let mut probs = d.probs.clone();
    for (axis, &v) in nu.rates().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        if v >= 0.5 {
            return Err(invalid("nu", "channel is singular at rate 1/2"));
        }
        let s = 1.0 / (1.0 - 2.0 * v);
        sweep_axis(&mut probs, axis, [[(1.0 - v) * s, -v * s], [-v * s, (1.0 - v) * s]]);
    }
    // Rounding can leave tiny negatives on zero atoms.
    for p in probs.iter_mut() {
        if *p < 0.0 && *p > -1e-12 {
            *p = 0.0;
        }
    }
    ExactDist::new(d.n, probs)
}

/// Restriction of `d` to `{x : c(x) = label}`, renormalized.
pub fn conditional(d: &ExactDist, c: &Conjunction, label: bool) -> Result<ExactDist> {
    c.check_dimension(d.n)?;
    let (mask, want) = c.index_masks();
    let mut probs = d.probs.clone();
    for (idx, p) in probs.iter_mut().enumerate() {
        if ((idx as u64) & mask == want) != label {
            *p = 0.0;
        }
    }
    let total = neumaier_sum(probs.iter().copied());
    if total <= 0.0 {
        return Err(Error::EmptyCondition);
    }
    probs.iter_mut().for_each(|p| *p /= total);
    ExactDist::new(d.n, probs)
}

/// Exact law of `(x_tilde, c(x))` as a table over `n + 1` bits, the label
/// in the top bit.
pub fn observed_joint(d: &ExactDist, c: &Conjunction, nu: &NoiseVector) -> Result<ExactDist> {
    if nu.len() != d.n {
        return Err(Error::DimensionMismatch {
            expected: d.n,
            found: nu.len(),
        });
    }
    labeled_push_forward(d, |x| c.eval_index(x), nu.rates())
}

/// Table over `n + 1` bits of `(x XOR noise, label(x))` for `x ~ d`, where
/// `rates` may be shorter than `n` (missing rates are zero).
pub(crate) fn labeled_push_forward(d: &ExactDist, label: impl Fn(u64) -> bool, rates: &[f64]) -> Result<ExactDist> {
    if d.n + 1 > MAX_EXACT_DIM {
        return Err(Error::DimensionTooLarge {
            n: d.n + 1,
            max: MAX_EXACT_DIM,
        });
    }
    let half = 1usize << d.n;
    let mut probs = vec![0.0; half << 1];
    for (idx, &p) in d.probs.iter().enumerate() {
        let slot = if label(idx as u64) { idx + half } else { idx };
        probs[slot] = p;
    }
    channel_in_place(&mut probs[..half], rates);
    channel_in_place(&mut probs[half..], rates);
    ExactDist::new(d.n + 1, probs)
}

/// Outcome of a k-wise independence check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KwiseCheck {
    pub independent: bool,
    pub max_violation: f64,
}

/// Tolerance on the worst absolute deviation from product form.
pub const KWISE_TOL: f64 = 1e-9;

/// Checks `Pr[X_S = z] = prod Pr[X_i = z_i]` for every `|S| = k` and every
/// pattern `z`.
pub fn is_kwise_independent(d: &ExactDist, k: usize) -> Result<KwiseCheck> {
    if k > d.n {
        return Err(invalid("k", format!("{k} exceeds the dimension {}", d.n)));
    }
    let means: Vec<f64> = (0..d.n).map(|i| d.mean(i)).collect();
    let mut worst = 0.0f64;
    if k >= 2 {
        for subset in Subsets::new(d.n, k) {
            let marg = d.marginal(&subset);
            for (z, &p) in marg.iter().enumerate() {
                let prod: f64 = subset
                    .iter()
                    .enumerate()
                    .map(|(t, &i)| if (z >> t) & 1 == 1 { means[i] } else { 1.0 - means[i] })
                    .product();
                worst = worst.max((p - prod).abs());
            }
        }
    }
    Ok(KwiseCheck {
        independent: worst <= KWISE_TOL,
        max_violation: worst,
    })
}

/// Sum of `|a - b| / 2` over atoms.
pub fn total_variation(a: &ExactDist, b: &ExactDist) -> Result<f64> {
    if a.n != b.n {
        return Err(Error::DimensionMismatch {
            expected: a.n,
            found: b.n,
        });
    }
    Ok(0.5 * neumaier_sum(a.probs.iter().zip(&b.probs).map(|(x, y)| (x - y).abs())))
}

/// Lexicographic enumeration of the `k`-subsets of `0..n`.
#[derive(Debug, Clone)]
pub struct Subsets {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Subsets {
    pub fn new(n: usize, k: usize) -> Self {
        let current = (k <= n).then(|| (0..k).collect());
        Self { n, current }
    }
}

impl Iterator for Subsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.current.take()?;
        let k = cur.len();
        let mut next = cur.clone();
        let mut advanced = false;
        for pos in (0..k).rev() {
            if next[pos] < self.n - k + pos {
                next[pos] += 1;
                for q in pos + 1..k {
                    next[q] = next[q - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if advanced {
            self.current = Some(next);
        }
        Some(cur)
    }
}

/// A symmetric Boolean function, given by a predicate on the input weight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetricFn {
    /// Odd weight.
    Parity,
    /// Weight strictly above half the arity.
    Majority,
    /// Weight at least the threshold.
    Threshold(usize),
    /// Explicit value per weight `0..=arity`.
    ByWeight(Vec<bool>),
}

impl SymmetricFn {
    pub fn eval_weight(&self, weight: usize, arity: usize) -> bool {
        match self {
            SymmetricFn::Parity => weight % 2 == 1,
            SymmetricFn::Majority => 2 * weight > arity,
            SymmetricFn::Threshold(t) => weight >= *t,
            SymmetricFn::ByWeight(v) => v[weight],
        }
    }

    pub fn name(&self) -> String {
        match self {
            SymmetricFn::Parity => "parity".into(),
            SymmetricFn::Majority => "majority".into(),
            SymmetricFn::Threshold(t) => format!("threshold{t}"),
            SymmetricFn::ByWeight(_) => "by_weight".into(),
        }
    }
}

fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut coeff = 1.0f64;
    for k in 0..=n {
        if k > 0 {
            coeff = coeff * (n - k + 1) as f64 / k as f64;
        }
        out.push(coeff * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32));
    }
    out
}

/// Largest arity accepted by the combinatorial path.
pub const MAX_NS_ARITY: usize = 24;

/// `NS_{S,rho}(f) = Pr_y[f(y) != f(N_{S,rho}(y))]` for symmetric `f` on
/// `n_half` uniform bits, where the operator flips each bit of a set `S` of
/// size `subset_size` independently with probability `rho`.
///
/// Parity uses the closed form `(1 - (1 - 2 rho)^s) / 2`; other functions
/// convolve the binomial laws of the weight inside `S`, outside `S` and the
/// flips in each direction.
pub fn noise_sensitivity_symmetric(f: &SymmetricFn, n_half: usize, rho: f64, subset_size: usize) -> Result<f64> {
    if subset_size > n_half {
        return Err(invalid("subset_size", format!("{subset_size} exceeds arity {n_half}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(invalid("rho", format!("{rho} outside [0, 1]")));
    }
    if let SymmetricFn::ByWeight(v) = f {
        if v.len() != n_half + 1 {
            return Err(invalid("f", "weight table needs arity + 1 entries"));
        }
    }
    if *f == SymmetricFn::Parity {
        return Ok((1.0 - (1.0 - 2.0 * rho).powi(subset_size as i32)) / 2.0);
    }
    noise_sensitivity_convolution(f, n_half, rho, subset_size)
}

/// The binomial-convolution path, valid for every symmetric `f`.
pub fn noise_sensitivity_convolution(f: &SymmetricFn, n_half: usize, rho: f64, s: usize) -> Result<f64> {
    if n_half > MAX_NS_ARITY {
        return Err(invalid(
            "n_half",
            format!("combinatorial path supports arity <= {MAX_NS_ARITY}"),
        ));
    }
    if s > n_half {
        return Err(invalid("subset_size", format!("{s} exceeds arity {n_half}")));
    }
    let inside = binomial_pmf(s, 0.5);
    let outside = binomial_pmf(n_half - s, 0.5);
    let flips: Vec<Vec<f64>> = (0..=s).map(|t| binomial_pmf(t, rho)).collect();
    let mut terms = Vec::new();
    for (a, &pa) in inside.iter().enumerate() {
        for (b, &pb) in outside.iter().enumerate() {
            let before = f.eval_weight(a + b, n_half);
            for (u, &pu) in flips[a].iter().enumerate() {
                for (v, &pv) in flips[s - a].iter().enumerate() {
                    if f.eval_weight(a - u + v + b, n_half) != before {
                        terms.push(pa * pb * pu * pv);
                    }
                }
            }
        }
    }
    Ok(neumaier_sum(terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dist(n: usize, rng: &mut ChaCha8Rng) -> ExactDist {
        let raw: Vec<f64> = (0..1 << n).map(|_| rng.random::<f64>()).collect();
        let t: f64 = raw.iter().sum();
        ExactDist::new(n, raw.into_iter().map(|p| p / t).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(ExactDist::new(2, vec![0.5, 0.5, 0.0]).is_err());
        assert!(ExactDist::new(1, vec![0.6, 0.6]).is_err());
        assert!(ExactDist::new(1, vec![1.0 + 1e-16, -1e-16]).is_ok());
        assert!(ExactDist::new(1, vec![1.1, -0.1]).is_err());
        assert!(matches!(
            ExactDist::uniform(21),
            Err(Error::DimensionTooLarge { n: 21, .. })
        ));
    }

    #[test]
    fn zero_noise_push_forward_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_dist(6, &mut rng);
        let out = push_forward_noise(&d, &NoiseVector::zeros(6)).unwrap();
        assert_eq!(out, d);
    }

    #[test]
    fn single_bit_channel() {
        let d = ExactDist::point_mass(1, 1).unwrap();
        let nu = NoiseVector::new(vec![0.3], 0.1).unwrap();
        let out = push_forward_noise(&d, &nu).unwrap();
        assert!((out.prob(0) - 0.3).abs() < 1e-15);
        assert!((out.prob(1) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn push_forward_preserves_mass_and_axis_order_is_irrelevant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_dist(9, &mut rng);
        let rates: Vec<f64> = (0..9).map(|_| rng.random::<f64>() * 0.45).collect();
        let nu = NoiseVector::from_rates(rates.clone()).unwrap();
        let fwd = push_forward_noise(&d, &nu).unwrap();
        assert!((neumaier_sum(fwd.probs().iter().copied()) - 1.0).abs() < 1e-12);

        let mut rev = d.probs().to_vec();
        for axis in (0..9).rev() {
            let v = rates[axis];
            sweep_axis(&mut rev, axis, [[1.0 - v, v], [v, 1.0 - v]]);
        }
        for (a, b) in fwd.probs().iter().zip(&rev) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let d = random_dist(8, &mut rng);
            let nu = NoiseVector::from_rates((0..8).map(|_| rng.random::<f64>() * 0.4).collect()).unwrap();
            let back = inverse_noise(&push_forward_noise(&d, &nu).unwrap(), &nu).unwrap();
            for (a, b) in back.probs().iter().zip(d.probs()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn inverse_rejects_tables_outside_the_image() {
        // A point mass cannot be the noisy image of anything at rate 0.3.
        let d = ExactDist::point_mass(1, 0).unwrap();
        let nu = NoiseVector::new(vec![0.3], 0.1).unwrap();
        assert!(inverse_noise(&d, &nu).is_err());
    }

    #[test]
    fn parity_extension_n3_is_pairwise_not_threewise() {
        let d = ExactDist::from_generative(&GenerativeDist::parity_extension(2, vec![vec![0, 1]]).unwrap()).unwrap();
        let two = is_kwise_independent(&d, 2).unwrap();
        assert!(two.independent);
        assert!(two.max_violation < 1e-15);
        let three = is_kwise_independent(&d, 3).unwrap();
        assert!(!three.independent);
        assert!((three.max_violation - 0.125).abs() < 1e-15);
    }

    #[test]
    fn product_is_kwise_for_all_k() {
        let d = ExactDist::product(&[0.1, 0.5, 0.7, 0.93, 0.2]).unwrap();
        for k in 0..=5 {
            assert!(is_kwise_independent(&d, k).unwrap().independent, "k = {k}");
        }
        assert!(is_kwise_independent(&d, 6).is_err());
    }

    #[test]
    fn conditional_cases() {
        let d = ExactDist::uniform(4).unwrap();
        assert_eq!(conditional(&d, &Conjunction::empty(), true).unwrap(), d);
        assert!(matches!(
            conditional(&d, &Conjunction::empty(), false),
            Err(Error::EmptyCondition)
        ));
        let c: Conjunction = "x1".parse().unwrap();
        let d1 = conditional(&d, &c, true).unwrap();
        assert!((d1.mean(0) - 1.0).abs() < 1e-15);
        for i in 1..4 {
            assert!((d1.mean(i) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn generative_tables_match_structure() {
        let d = ExactDist::from_generative(&GenerativeDist::correlated_pairs(4, 0.5, 0.1).unwrap()).unwrap();
        let differ = d.mass(|x| (x & 1) != ((x >> 1) & 1));
        assert!((differ - 0.1).abs() < 1e-15);
        let biased = GenerativeDist::correlated_pairs_with_source(0.2, 0.1, vec![true]).unwrap();
        let t = ExactDist::from_generative(&biased).unwrap();
        // Source is coordinate 2 (bit 1).
        assert!((t.mean(1) - 0.2).abs() < 1e-15);
        assert!((t.mean(0) - (0.2 * 0.9 + 0.8 * 0.1)).abs() < 1e-15);
    }

    #[test]
    fn noise_sensitivity_edges() {
        for f in [SymmetricFn::Parity, SymmetricFn::Majority, SymmetricFn::Threshold(3)] {
            assert_eq!(noise_sensitivity_symmetric(&f, 8, 0.0, 5).unwrap(), 0.0);
        }
        assert!(noise_sensitivity_symmetric(&SymmetricFn::Parity, 4, 0.1, 5).is_err());
        assert!(noise_sensitivity_convolution(&SymmetricFn::Majority, 25, 0.1, 3).is_err());
    }

    #[test]
    fn convolution_agrees_with_parity_closed_form() {
        for s in 0..=10 {
            let closed = noise_sensitivity_symmetric(&SymmetricFn::Parity, 10, 0.17, s).unwrap();
            let conv = noise_sensitivity_convolution(&SymmetricFn::Parity, 10, 0.17, s).unwrap();
            assert!((closed - conv).abs() < 1e-14, "s = {s}");
        }
    }

    #[test]
    fn subsets_enumeration() {
        let all: Vec<_> = Subsets::new(4, 2).collect();
        assert_eq!(
            all,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert_eq!(Subsets::new(3, 0).count(), 1);
        assert_eq!(Subsets::new(2, 3).count(), 0);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let d = ExactDist::product(&[0.2, 0.9, 0.5]).unwrap();
        d.write_file(&path, "unit test").unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"ATNXDST1");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 16 + 8 * 8);
        assert_eq!(ExactDist::read_file(&path).unwrap(), d);
        let side: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("d.bin.json")).unwrap()).unwrap();
        assert_eq!(side["n"], 3);
        assert_eq!(side["provenance"], "unit test");
    }
}
