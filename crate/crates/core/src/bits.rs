//! Points of the hypercube `{0,1}^n`, which double as subsets of `[n]`.
//!
//! Coordinate `i` (1-based, as in the ASCII form where the leftmost character
//! is coordinate 1) lives in bit `i - 1` of the packed words. The numeric value
//! of a mask is therefore `sum 2^(i-1)` over its set coordinates, and that is
//! the order `Ord` uses.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::{smallvec, SmallVec};

use crate::error::{Error, Result};

type Words = SmallVec<[u64; 2]>;

const WORD: usize = 64;

fn word_count(n: usize) -> usize {
    n.div_ceil(WORD).max(1)
}

/// A bit string of fixed dimension. Bits at positions `>= n` are always zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVec {
    n: usize,
    words: Words,
}

impl BitVec {
    pub fn zeros(n: usize) -> Self {
        BitVec {
            n,
            words: smallvec![0; word_count(n)],
        }
    }

    pub fn ones(n: usize) -> Self {
        let mut v = BitVec {
            n,
            words: smallvec![u64::MAX; word_count(n)],
        };
        v.clear_tail();
        v
    }

    /// Builds a point of dimension `n <= 64` from a mask.
    ///
    /// Panics if `n > 64` or the mask has bits at positions `>= n`.
    pub fn from_u64(n: usize, mask: u64) -> Self {
        assert!(n <= WORD, "from_u64 supports n <= 64, got {n}");
        assert!(
            n == WORD || mask >> n == 0,
            "mask {mask:#x} has bits beyond dimension {n}"
        );
        let mut v = BitVec::zeros(n);
        v.words[0] = mask;
        v
    }

    /// The unit vector `e_i` for a 0-based coordinate index.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = BitVec::zeros(n);
        v.set(i, true);
        v
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Self {
        let mut v = BitVec::zeros(n);
        for &i in indices {
            v.set(i, true);
        }
        v
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = BitVec::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b);
        }
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Hamming weight `|x|`.
    #[inline]
    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.n, "coordinate {i} out of range for dimension {}", self.n);
        self.words[i / WORD] >> (i % WORD) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.n, "coordinate {i} out of range for dimension {}", self.n);
        let bit = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= bit;
        } else {
            self.words[i / WORD] &= !bit;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.n, "coordinate {i} out of range for dimension {}", self.n);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    /// The packed value when `n <= 64`.
    pub fn as_u64(&self) -> Option<u64> {
        (self.n <= WORD).then(|| self.words[0])
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    fn clear_tail(&mut self) {
        let rem = self.n % WORD;
        if rem != 0 {
            let last = self.words.len() - 1;
            self.words[last] &= (1u64 << rem) - 1;
        }
        if self.n == 0 {
            self.words[0] = 0;
        }
    }

    pub fn check_dim(&self, other: &BitVec) -> Result<()> {
        if self.n == other.n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            })
        }
    }

    #[inline]
    fn zip_with(&self, other: &BitVec, op: impl Fn(u64, u64) -> u64) -> BitVec {
        debug_assert_eq!(self.n, other.n);
        BitVec {
            n: self.n,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(&a, &b)| op(a, b))
                .collect(),
        }
    }

    #[inline]
    pub fn xor(&self, other: &BitVec) -> BitVec {
        self.zip_with(other, |a, b| a ^ b)
    }

    #[inline]
    pub fn and(&self, other: &BitVec) -> BitVec {
        self.zip_with(other, |a, b| a & b)
    }

    #[inline]
    pub fn or(&self, other: &BitVec) -> BitVec {
        self.zip_with(other, |a, b| a | b)
    }

    /// `self AND NOT other`, i.e. the set difference.
    #[inline]
    pub fn and_not(&self, other: &BitVec) -> BitVec {
        self.zip_with(other, |a, b| a & !b)
    }

    #[inline]
    pub fn xor_assign(&mut self, other: &BitVec) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    /// `popcount(self XOR other)` without allocating.
    #[inline]
    pub fn distance(&self, other: &BitVec) -> usize {
        debug_assert_eq!(self.n, other.n);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// `popcount(self AND other)` without allocating.
    #[inline]
    pub fn overlap(&self, other: &BitVec) -> usize {
        debug_assert_eq!(self.n, other.n);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// True when every set coordinate of `self` is set in `other`.
    #[inline]
    pub fn is_subset_of(&self, other: &BitVec) -> bool {
        debug_assert_eq!(self.n, other.n);
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    #[inline]
    pub fn is_disjoint(&self, other: &BitVec) -> bool {
        debug_assert_eq!(self.n, other.n);
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    /// 0-based indices of the set coordinates, ascending.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let tz = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * WORD + tz)
            })
        })
    }

    /// Every submask of `self`, the empty mask first.
    ///
    /// Panics if the weight is 64 or more.
    pub fn submasks(&self) -> impl Iterator<Item = BitVec> + '_ {
        let positions: Vec<usize> = self.iter_ones().collect();
        assert!(positions.len() < 64, "too many set bits to enumerate submasks");
        let total = 1u64 << positions.len();
        (0..total).map(move |local| self.deposit_into(&BitVec::zeros(self.n), &positions, local))
    }

    /// Overwrites the coordinates listed in `positions` of `base` with the bits
    /// of `local` (bit `j` of `local` goes to `positions[j]`).
    pub fn deposit_into(&self, base: &BitVec, positions: &[usize], local: u64) -> BitVec {
        let mut out = base.clone();
        for (j, &p) in positions.iter().enumerate() {
            out.set(p, local >> j & 1 == 1);
        }
        out
    }

    /// Reads the coordinates in `positions` as a little-endian local index.
    pub fn extract(&self, positions: &[usize]) -> u64 {
        positions
            .iter()
            .enumerate()
            .fold(0u64, |acc, (j, &p)| acc | (self.get(p) as u64) << j)
    }
}

impl Ord for BitVec {
    fn cmp(&self, other: &Self) -> Ordering {
        self.n
            .cmp(&other.n)
            .then_with(|| self.words.iter().rev().cmp(other.words.iter().rev()))
    }
}

impl PartialOrd for BitVec {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.n)
            .map(|i| if self.get(i) { '1' } else { '0' })
            .collect();
        f.write_str(&s)
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec({self})")
    }
}

impl FromStr for BitVec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::param("empty bit string"));
        }
        let mut v = BitVec::zeros(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => v.set(i, true),
                other => return Err(Error::param(format!("invalid bit character {other:?}"))),
            }
        }
        Ok(v)
    }
}

impl Serialize for BitVec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitVec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The character `chi_S(x) = (-1)^{|S AND x|}`.
pub fn chi(s: &BitVec, x: &BitVec) -> Result<i8> {
    s.check_dim(x)?;
    Ok(chi_unchecked(s, x))
}

#[inline]
pub(crate) fn chi_unchecked(s: &BitVec, x: &BitVec) -> i8 {
    if s.overlap(x) % 2 == 0 {
        1
    } else {
        -1
    }
}

pub fn hamming_distance(x: &BitVec, y: &BitVec) -> Result<usize> {
    x.check_dim(y)?;
    Ok(x.distance(y))
}

/// A distribution on `{0,1}^n` with finite support.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SparseDistribution {
    n: usize,
    points: Vec<BitVec>,
    weights: Vec<f64>,
}

impl SparseDistribution {
    pub const WEIGHT_TOLERANCE: f64 = 1e-12;

    pub fn new(points: Vec<BitVec>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::LengthMismatch {
                expected: points.len(),
                found: weights.len(),
            });
        }
        let n = points[0].dim();
        for p in &points {
            points[0].check_dim(p)?;
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::InvalidDistribution(format!("weight {w} outside [0,1]")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > Self::WEIGHT_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}, not 1")));
        }
        let mut sorted: Vec<&BitVec> = points.iter().collect();
        sorted.sort();
        if let Some(pair) = sorted.windows(2).find(|p| p[0] == p[1]) {
            return Err(Error::InvalidDistribution(format!("duplicate point {}", pair[0])));
        }
        Ok(SparseDistribution { n, points, weights })
    }

    /// Uniform weights over the given points.
    pub fn uniform(points: Vec<BitVec>) -> Result<Self> {
        let k = points.len().max(1);
        Self::new(points, vec![1.0 / k as f64; k])
    }

    pub fn point_mass(point: BitVec) -> Self {
        SparseDistribution {
            n: point.dim(),
            points: vec![point],
            weights: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Support size `k`.
    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[BitVec] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BitVec, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    /// `f(x)`, zero off the support.
    pub fn weight_of(&self, x: &BitVec) -> f64 {
        self.points
            .iter()
            .position(|p| p == x)
            .map_or(0.0, |i| self.weights[i])
    }
}

/// Replaces every support point `p` by `p XOR offset`.
pub fn translate(dist: &SparseDistribution, offset: &BitVec) -> Result<SparseDistribution> {
    if offset.dim() != dist.dim() {
        return Err(Error::DimensionMismatch {
            expected: dist.dim(),
            found: offset.dim(),
        });
    }
    Ok(SparseDistribution {
        n: dist.n,
        points: dist.points.iter().map(|p| p.xor(offset)).collect(),
        weights: dist.weights.clone(),
    })
}
