//! Bit strings, literals, conjunctions and hypotheses.
//!
//! Coordinates are 0-based in the API. Human-facing formats (conjunction
//! strings, JSON) use 1-based names `x1, x2, ...`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

pub(crate) fn words_for(n: usize) -> usize {
    n.div_ceil(64)
}

/// Fixed-length vector over `{0,1}^n`, packed little-endian into `u64` words.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitString {
    len: usize,
    words: Vec<u64>,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut s = Self::zeros(len);
        for i in 0..len {
            s.set(i, true);
        }
        s
    }

    /// Builds a string from packed words; bits beyond `len` must be clear.
    pub fn from_words(len: usize, words: Vec<u64>) -> Result<Self> {
        if words.len() != words_for(len) {
            return Err(Error::DimensionMismatch {
                expected: words_for(len),
                found: words.len(),
            });
        }
        let s = Self { len, words };
        if let Some(&last) = s.words.last() {
            let used = len - 64 * (s.words.len() - 1);
            if used < 64 && last >> used != 0 {
                return Err(invalid("words", "bits set beyond the declared length"));
            }
        }
        Ok(s)
    }

    /// Bit `i` of the table index `index` (bit `i` least significant).
    pub fn from_index(len: usize, index: u64) -> Self {
        assert!(len <= 64);
        let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        let mut s = Self::zeros(len);
        if len > 0 {
            s.words[0] = index & mask;
        }
        s
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            s.set(i, b);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let bit = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    pub fn flip(&mut self, i: usize) {
        let v = self.get(i);
        self.set(i, !v);
    }

    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Table index of a string with `len <= 64`.
    pub fn to_index(&self) -> u64 {
        assert!(self.len <= 64);
        self.words.first().copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut out = Self::zeros(s.len());
        for (i, ch) in s.chars().enumerate() {
            match ch {
                '0' => {}
                '1' => out.set(i, true),
                other => return Err(Error::Parse(format!("invalid bit character {other:?}"))),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Polarity {
    pub fn symbol(self) -> &'static str {
        match self {
            Polarity::Positive => "+",
            Polarity::Negative => "-",
        }
    }

    /// Value of the literal when the underlying bit is `bit`.
    #[inline]
    pub fn apply(self, bit: bool) -> bool {
        match self {
            Polarity::Positive => bit,
            Polarity::Negative => !bit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub index: usize,
    pub polarity: Polarity,
}

impl Literal {
    pub fn pos(index: usize) -> Self {
        Self {
            index,
            polarity: Polarity::Positive,
        }
    }

    pub fn neg(index: usize) -> Self {
        Self {
            index,
            polarity: Polarity::Negative,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LiteralJson {
    i: usize,
    pol: Polarity,
}

impl Serialize for Literal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        LiteralJson {
            i: self.index + 1,
            pol: self.polarity,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Literal {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = LiteralJson::deserialize(d)?;
        if j.i == 0 {
            return Err(serde::de::Error::custom("literal indices are 1-based"));
        }
        Ok(Literal {
            index: j.i - 1,
            polarity: j.pol,
        })
    }
}

/// AND of oriented literals, each index at most once, sorted by index.
///
/// The empty conjunction is the constant 1.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Conjunction {
    literals: Vec<Literal>,
}

impl Conjunction {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(mut literals: Vec<Literal>) -> Result<Self> {
        literals.sort();
        if literals.windows(2).any(|w| w[0].index == w[1].index) {
            return Err(invalid("literals", "an index appears more than once"));
        }
        Ok(Self { literals })
    }

    /// Monotone conjunction over the given 0-based indices.
    pub fn monotone(indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        Self::new(indices.into_iter().map(Literal::pos).collect())
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.literals.last().map(|l| l.index)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.literals.iter().map(|l| l.index)
    }

    pub fn eval(&self, x: &BitString) -> bool {
        self.literals.iter().all(|l| l.polarity.apply(x.get(l.index)))
    }

    /// Evaluates on a table index (`n <= 64`, bit `i` least significant).
    #[inline]
    pub fn eval_index(&self, x: u64) -> bool {
        let (mask, want) = self.index_masks();
        x & mask == want
    }

    /// `(mask, want)` such that the conjunction holds on index `x` iff
    /// `x & mask == want`. Requires all indices `< 64`.
    pub fn index_masks(&self) -> (u64, u64) {
        let mut mask = 0u64;
        let mut want = 0u64;
        for l in &self.literals {
            assert!(l.index < 64, "index_masks needs indices below 64");
            mask |= 1 << l.index;
            if l.polarity == Polarity::Positive {
                want |= 1 << l.index;
            }
        }
        (mask, want)
    }

    pub fn compile(&self, n: usize) -> CompiledConjunction {
        CompiledConjunction::new(self, n)
    }

    pub fn check_dimension(&self, n: usize) -> Result<()> {
        match self.max_index() {
            Some(i) if i >= n => Err(Error::DimensionMismatch {
                expected: n,
                found: i + 1,
            }),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Conjunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.literals.is_empty() {
            return f.write_str("1");
        }
        for (k, l) in self.literals.iter().enumerate() {
            if k > 0 {
                f.write_str("&")?;
            }
            if l.polarity == Polarity::Negative {
                f.write_str("!")?;
            }
            write!(f, "x{}", l.index + 1)?;
        }
        Ok(())
    }
}

impl FromStr for Conjunction {
    type Err = Error;

    /// Parses `x1&!x3`; `1` or the empty string is the empty conjunction.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "1" {
            return Ok(Self::empty());
        }
        let mut lits = Vec::new();
        for part in s.split('&') {
            let part = part.trim();
            let (polarity, rest) = match part.strip_prefix('!') {
                Some(r) => (Polarity::Negative, r),
                None => (Polarity::Positive, part),
            };
            let num = rest
                .strip_prefix('x')
                .ok_or_else(|| Error::Parse(format!("literal {part:?} must look like x<i>")))?;
            let i: usize = num
                .parse()
                .map_err(|_| Error::Parse(format!("bad literal index in {part:?}")))?;
            if i == 0 {
                return Err(Error::Parse("literal indices are 1-based".into()));
            }
            lits.push(Literal { index: i - 1, polarity });
        }
        Self::new(lits)
    }
}

impl Serialize for Conjunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.literals.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Conjunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let lits = Vec::<Literal>::deserialize(d)?;
        Conjunction::new(lits).map_err(serde::de::Error::custom)
    }
}

/// Word-level form of a conjunction for evaluation on packed rows.
#[derive(Debug, Clone)]
pub struct CompiledConjunction {
    terms: Vec<(usize, u64, u64)>,
}

impl CompiledConjunction {
    fn new(c: &Conjunction, n: usize) -> Self {
        let mut terms: Vec<(usize, u64, u64)> = Vec::new();
        for l in c.literals() {
            assert!(l.index < n, "literal x{} outside dimension {n}", l.index + 1);
            let w = l.index / 64;
            let bit = 1u64 << (l.index % 64);
            let want = if l.polarity == Polarity::Positive { bit } else { 0 };
            match terms.last_mut() {
                Some(t) if t.0 == w => {
                    t.1 |= bit;
                    t.2 |= want;
                }
                _ => terms.push((w, bit, want)),
            }
        }
        Self { terms }
    }

    #[inline]
    pub fn eval_words(&self, row: &[u64]) -> bool {
        self.terms.iter().all(|&(w, mask, want)| row[w] & mask == want)
    }
}

/// A list member: the constant 0, or a conjunction (empty = constant 1).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Hypothesis {
    Zero,
    Conj(Conjunction),
}

impl Hypothesis {
    pub fn one() -> Self {
        Hypothesis::Conj(Conjunction::empty())
    }

    pub fn eval(&self, x: &BitString) -> bool {
        match self {
            Hypothesis::Zero => false,
            Hypothesis::Conj(c) => c.eval(x),
        }
    }

    pub fn eval_index(&self, x: u64) -> bool {
        match self {
            Hypothesis::Zero => false,
            Hypothesis::Conj(c) => c.eval_index(x),
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hypothesis::Zero => f.write_str("0"),
            Hypothesis::Conj(c) => c.fmt(f),
        }
    }
}

impl Serialize for Hypothesis {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}
