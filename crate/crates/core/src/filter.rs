//! The distance filter `E` around the origin and its noisy mass `(T_mu 1_E)(0)`.
//!
//! After translation the target sits at `0^n`. A support point is far when its
//! weight reaches the threshold `s`; `E` keeps the points at least as close to
//! the origin as to every far point.

use serde::Serialize;

use crate::bits::BitVec;
use crate::error::{Error, Result};
use crate::noise::{sample_noise, NoiseRate, DENSE_LIMIT};
use crate::rng::{stream_rng, Executor};

/// Default multiplier `c` in the threshold `ceil((c / mu^2) ln(2k))`.
pub const DEFAULT_FAR_CONSTANT: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FarSet {
    n: usize,
    far_points: Vec<BitVec>,
    threshold: usize,
    mu: f64,
    k: usize,
}

/// `max(1, ceil((c / mu^2) ln(2k)))`.
pub fn far_threshold(mu: NoiseRate, k: usize, constant: f64) -> usize {
    let raw = constant / (mu.get() * mu.get()) * (2.0 * k.max(1) as f64).ln();
    (raw.ceil() as usize).max(1)
}

/// Far set with the default threshold constant.
pub fn build_far_set(support: &[BitVec], mu: NoiseRate, k: usize) -> Result<FarSet> {
    build_far_set_with(support, mu, k, DEFAULT_FAR_CONSTANT)
}

pub fn build_far_set_with(support: &[BitVec], mu: NoiseRate, k: usize, constant: f64) -> Result<FarSet> {
    if !(constant > 0.0) {
        return Err(Error::param(format!("far constant must be positive, got {constant}")));
    }
    let n = support.first().map_or(0, BitVec::dim);
    for p in support {
        if p.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: p.dim(),
            });
        }
    }
    let threshold = far_threshold(mu, k, constant);
    let far_points = support
        .iter()
        .filter(|p| p.weight() >= threshold)
        .cloned()
        .collect();
    Ok(FarSet {
        n,
        far_points,
        threshold,
        mu: mu.get(),
        k,
    })
}

impl FarSet {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn far_points(&self) -> &[BitVec] {
        &self.far_points
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn mu(&self) -> NoiseRate {
        NoiseRate::new(self.mu).expect("stored from a valid rate")
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.far_points.is_empty()
    }

    #[inline]
    pub(crate) fn contains_unchecked(&self, y: &BitVec) -> bool {
        let wy = y.weight();
        self.far_points.iter().all(|x| wy <= x.distance(y))
    }
}

/// Whether `y` is at least as close to the origin as to every far point.
pub fn in_e(y: &BitVec, fs: &FarSet) -> Result<bool> {
    if y.dim() != fs.n && !fs.far_points.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: fs.n,
            found: y.dim(),
        });
    }
    Ok(fs.contains_unchecked(y))
}

/// Hoeffding count for a `[0, 1]` mean: `ceil(ln(2/kappa) / (2 eps^2))`.
pub fn upsilon_sample_count(eps: f64, kappa: f64) -> Result<usize> {
    check_unit("epsilon", eps)?;
    check_unit("kappa", kappa)?;
    Ok(((2.0 / kappa).ln() / (2.0 * eps * eps)).ceil() as usize)
}

pub(crate) fn check_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must lie in (0, 1), got {x}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UpsilonEstimate {
    pub value: f64,
    pub samples: usize,
}

/// Monte-Carlo estimate of `Pr_{e ~ D_mu}[e in E]` from `(seed, stream)`.
pub fn estimate_upsilon(
    fs: &FarSet,
    eps: f64,
    kappa: f64,
    seed: u64,
    stream: u64,
    exec: &Executor,
) -> Result<UpsilonEstimate> {
    let m = upsilon_sample_count(eps, kappa)?;
    if fs.is_empty() {
        return Ok(UpsilonEstimate {
            value: 1.0,
            samples: 0,
        });
    }
    let mu = fs.mu();
    let hits: usize = exec
        .map_shards(m, |w, range| {
            let mut rng = stream_rng(seed, stream, w);
            range
                .filter(|_| fs.contains_unchecked(&sample_noise(mu, fs.n, &mut rng)))
                .count()
        })
        .into_iter()
        .sum();
    Ok(UpsilonEstimate {
        value: hits as f64 / m as f64,
        samples: m,
    })
}

/// `(T_mu 1_E)(x) = sum_e Pr[e] 1_E(x + e)` by enumeration of all `2^n` noise vectors.
pub fn exact_t_mu_e(x: &BitVec, fs: &FarSet) -> Result<f64> {
    let n = x.dim();
    if fs.is_empty() {
        return Ok(1.0);
    }
    if n != fs.n {
        return Err(Error::DimensionMismatch {
            expected: fs.n,
            found: n,
        });
    }
    if n > DENSE_LIMIT {
        return Err(Error::OracleTooLarge { n, limit: DENSE_LIMIT });
    }
    let mu = fs.mu();
    let probs: Vec<f64> = (0..=n).map(|w| mu.vector_probability(n, w)).collect();
    let base = x.as_u64().expect("n <= 20");
    let mut total = 0.0;
    for e in 0..(1u64 << n) {
        let y = BitVec::from_u64(n, base ^ e);
        if fs.contains_unchecked(&y) {
            total += probs[e.count_ones() as usize];
        }
    }
    Ok(total)
}
