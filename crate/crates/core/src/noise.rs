//! The bit-flip channel and its per-coordinate operators.

use std::sync::Arc;

use rand::distributions::{Bernoulli, Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::bits::{BitVec, SparseDistribution};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Largest dimension any dense `2^n` table is allowed to reach.
pub const DENSE_LIMIT: usize = 20;

/// Correlation `mu` of the channel: each bit flips with probability `(1 - mu) / 2`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct NoiseRate(f64);

impl NoiseRate {
    pub fn new(mu: f64) -> Result<Self> {
        if mu > 0.0 && mu <= 1.0 {
            Ok(NoiseRate(mu))
        } else {
            Err(Error::param(format!("noise rate mu must lie in (0, 1], got {mu}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn flip_probability(self) -> f64 {
        (1.0 - self.0) / 2.0
    }

    /// Probability of a specific noise vector of weight `w` out of `n` coordinates under `D_mu`.
    pub fn vector_probability(self, n: usize, w: usize) -> f64 {
        let p = self.flip_probability();
        p.powi(w as i32) * (1.0 - p).powi((n - w) as i32)
    }
}

/// A 2x2 operator acting on one coordinate: `out[a] = sum_b m[a][b] * in[b]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoordKernel {
    pub m: [[f64; 2]; 2],
}

impl CoordKernel {
    pub const IDENTITY: CoordKernel = CoordKernel {
        m: [[1.0, 0.0], [0.0, 1.0]],
    };

    pub fn compose(&self, other: &CoordKernel) -> CoordKernel {
        let mut m = [[0.0; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.m[i][0] * other.m[0][j] + self.m[i][1] * other.m[1][j];
            }
        }
        CoordKernel { m }
    }

    /// The induced `l1 -> l1` norm: largest absolute column sum.
    pub fn norm_1_to_1(&self) -> f64 {
        (0..2)
            .map(|j| self.m[0][j].abs() + self.m[1][j].abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &CoordKernel) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.m[i][j] - other.m[i][j]).abs());
            }
        }
        d
    }

    /// Applies the kernel along the bit `stride` of a table laid out by index.
    pub(crate) fn apply_along(&self, table: &mut [f64], stride: usize) {
        let [[a, b], [c, d]] = self.m;
        let block = stride << 1;
        for base in (0..table.len()).step_by(block) {
            for i in base..base + stride {
                let lo = table[i];
                let hi = table[i + stride];
                table[i] = a * lo + b * hi;
                table[i + stride] = c * lo + d * hi;
            }
        }
    }
}

/// The single-coordinate noise operator `T_{mu,i}` or its inverse.
///
/// Forward: diagonal `(1+mu)/2`, off-diagonal `(1-mu)/2`. Its determinant is
/// `mu`, so the inverse is `[[a, -b], [-b, a]] / mu`, whose absolute column
/// sums are `(a + b) / mu = 1 / mu`.
pub fn coord_kernel(mu: f64, inverse: bool) -> Result<CoordKernel> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::param(format!("mu must lie in [0, 1], got {mu}")));
    }
    let a = (1.0 + mu) / 2.0;
    let b = (1.0 - mu) / 2.0;
    if !inverse {
        return Ok(CoordKernel { m: [[a, b], [b, a]] });
    }
    if mu == 0.0 {
        return Err(Error::param("T_mu has no inverse at mu = 0"));
    }
    Ok(CoordKernel {
        m: [[a / mu, -b / mu], [-b / mu, a / mu]],
    })
}

fn table_dimension(len: usize) -> Result<usize> {
    if !len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(len));
    }
    let n = len.trailing_zeros() as usize;
    if n > DENSE_LIMIT {
        return Err(Error::OracleTooLarge { n, limit: DENSE_LIMIT });
    }
    Ok(n)
}

/// Exact `T_mu f` on a dense table indexed by the packed point value.
pub fn apply_t_mu_dense(f: &[f64], mu: f64) -> Result<Vec<f64>> {
    let n = table_dimension(f.len())?;
    let kernel = coord_kernel(mu, false)?;
    let mut out = f.to_vec();
    for i in 0..n {
        kernel.apply_along(&mut out, 1 << i);
    }
    Ok(out)
}

/// Exact `T_mu^{-1} f` on a dense table.
pub fn apply_t_mu_inverse_dense(f: &[f64], mu: f64) -> Result<Vec<f64>> {
    let n = table_dimension(f.len())?;
    let kernel = coord_kernel(mu, true)?;
    let mut out = f.to_vec();
    for i in 0..n {
        kernel.apply_along(&mut out, 1 << i);
    }
    Ok(out)
}

/// One draw `e ~ D_mu`: each bit is 1 independently with probability `(1 - mu) / 2`.
pub fn sample_noise<R: Rng + ?Sized>(mu: NoiseRate, n: usize, rng: &mut R) -> BitVec {
    let mut e = BitVec::zeros(n);
    let p = mu.flip_probability();
    if p == 0.0 {
        return e;
    }
    let coin = Bernoulli::new(p).expect("flip probability lies in [0, 1/2]");
    for i in 0..n {
        if coin.sample(rng) {
            e.set(i, true);
        }
    }
    e
}

/// Draws samples of `T_mu f`: a point from `f` XORed with fresh `D_mu` noise.
#[derive(Clone, Debug)]
pub struct NoisySampler {
    dist: Arc<SparseDistribution>,
    mu: NoiseRate,
    seed: u64,
    picker: WeightedIndex<f64>,
    coin: Option<Bernoulli>,
    rng: ChaCha8Rng,
    drawn: u64,
}

impl NoisySampler {
    pub fn new(dist: Arc<SparseDistribution>, mu: NoiseRate, seed: u64) -> Self {
        Self::with_stream(dist, mu, seed, 0, 0)
    }

    /// A sampler on the independent stream `(seed, stream, worker)`.
    pub fn with_stream(
        dist: Arc<SparseDistribution>,
        mu: NoiseRate,
        seed: u64,
        stream: u64,
        worker: usize,
    ) -> Self {
        let picker = WeightedIndex::new(dist.weights()).expect("distribution weights are valid");
        let p = mu.flip_probability();
        let coin = (p > 0.0).then(|| Bernoulli::new(p).expect("flip probability lies in [0, 1/2]"));
        NoisySampler {
            dist,
            mu,
            seed,
            picker,
            coin,
            rng: stream_rng(seed, stream, worker),
            drawn: 0,
        }
    }

    pub fn mu(&self) -> NoiseRate {
        self.mu
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dist.dim()
    }

    pub fn distribution(&self) -> &SparseDistribution {
        &self.dist
    }

    pub fn drawn(&self) -> u64 {
        self.drawn
    }

    pub fn draw(&mut self) -> BitVec {
        let idx = self.picker.sample(&mut self.rng);
        let mut x = self.dist.points()[idx].clone();
        if let Some(coin) = self.coin {
            for i in 0..x.dim() {
                if coin.sample(&mut self.rng) {
                    x.flip(i);
                }
            }
        }
        self.drawn += 1;
        x
    }
}
