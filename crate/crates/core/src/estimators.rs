//! Sample-based estimators: Fourier coefficients of `f`, attenuated
//! coefficients `g^(S)` of `g = f * T_mu 1_E`, and `<l, g>`.
//!
//! For a sample `z ~ T_mu f` the kernel value `<T_{mu,S} X_S T_{mu,S}^{-1} 1_z, 1_E>`
//! is an unbiased estimate of `g^(S)` bounded by `mu^{-|S|}`.

use serde::Serialize;

use crate::basis::EllFunction;
use crate::bits::{chi_unchecked, BitVec};
use crate::error::{Error, Result};
use crate::filter::{check_unit, FarSet};
use crate::noise::{coord_kernel, CoordKernel, NoiseRate};
use crate::rng::Executor;
use crate::source::SampleSource;

/// Default largest `|S|` accepted by the kernel.
pub const DEFAULT_KERNEL_CAP: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimatorBudget {
    pub epsilon: f64,
    pub kappa: f64,
    pub samples: usize,
    /// Bound on the magnitude of each averaged value.
    pub per_s_bound: f64,
}

impl EstimatorBudget {
    /// Two-sided Hoeffding for values in `[-B, B]`: `M = ceil(2 B^2 ln(2/kappa) / eps^2)`.
    pub fn hoeffding(epsilon: f64, kappa: f64, per_s_bound: f64) -> Result<Self> {
        check_unit("epsilon", epsilon)?;
        check_unit("kappa", kappa)?;
        if !(per_s_bound >= 1.0) || !per_s_bound.is_finite() {
            return Err(Error::param(format!("value bound must be finite and >= 1, got {per_s_bound}")));
        }
        let m = 2.0 * per_s_bound * per_s_bound * (2.0 / kappa).ln() / (epsilon * epsilon);
        Ok(EstimatorBudget {
            epsilon,
            kappa,
            samples: to_count(m)?,
            per_s_bound,
        })
    }

    /// Budget for a single coefficient of degree `s` at noise rate `mu`.
    pub fn for_degree(epsilon: f64, kappa: f64, mu: NoiseRate, s: usize) -> Result<Self> {
        Self::hoeffding(epsilon, kappa, mu.get().recip().powi(s as i32))
    }

    /// Shared-batch budget for `<l, g>` with `T = ||l^||_1`, max degree `s0`
    /// and `supp` coefficients:
    /// `M = ceil(2 (T/eps)^2 mu^{-2 s0} ln(2 supp / kappa))`.
    pub fn for_inner_product(
        epsilon: f64,
        kappa: f64,
        mu: NoiseRate,
        l1_norm: f64,
        max_degree: usize,
        support: usize,
    ) -> Result<Self> {
        check_unit("epsilon", epsilon)?;
        check_unit("kappa", kappa)?;
        let bound = mu.get().recip().powi(max_degree as i32);
        let t = l1_norm.max(f64::MIN_POSITIVE);
        let m = 2.0 * (t / epsilon).powi(2) * bound * bound * (2.0 * support.max(1) as f64 / kappa).ln();
        Ok(EstimatorBudget {
            epsilon,
            kappa,
            samples: to_count(m)?,
            per_s_bound: bound,
        })
    }
}

fn to_count(m: f64) -> Result<usize> {
    if m.is_finite() && m < usize::MAX as f64 / 2.0 {
        Ok(m.ceil() as usize)
    } else {
        Err(Error::param(format!("sample budget {m:e} is not representable")))
    }
}

/// `mean over M samples of mu^{-|S|} chi_S(z)`, estimating `f^(S)`.
pub fn estimate_fourier(
    source: &dyn SampleSource,
    s: &BitVec,
    budget: &EstimatorBudget,
    stream: u64,
    exec: &Executor,
) -> Result<f64> {
    if s.dim() != source.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            found: s.dim(),
        });
    }
    let m = budget.samples;
    source.ensure(m)?;
    let scale = source.mu().get().recip().powi(s.weight() as i32);
    let sum: f64 = exec
        .map_shards(m, |w, range| {
            let mut acc = 0i64;
            source.visit(stream, w, range, &mut |z| acc += i64::from(chi_unchecked(s, z)));
            acc as f64
        })
        .into_iter()
        .sum();
    Ok(scale * sum / m.max(1) as f64)
}

/// Reusable evaluator of the attenuated kernel for a fixed `(mu, E)`.
pub struct KernelEvaluator<'a> {
    fs: &'a FarSet,
    forward: CoordKernel,
    inverse: CoordKernel,
    cap: usize,
    buf: Vec<f64>,
    positions: Vec<usize>,
    far_base: Vec<(usize, u64)>,
}

impl<'a> KernelEvaluator<'a> {
    pub fn new(mu: NoiseRate, fs: &'a FarSet) -> Self {
        Self::with_cap(mu, fs, DEFAULT_KERNEL_CAP)
    }

    pub fn with_cap(mu: NoiseRate, fs: &'a FarSet, cap: usize) -> Self {
        KernelEvaluator {
            fs,
            forward: coord_kernel(mu.get(), false).expect("valid rate"),
            inverse: coord_kernel(mu.get(), true).expect("rate is positive"),
            cap,
            buf: Vec::new(),
            positions: Vec::new(),
            far_base: Vec::new(),
        }
    }

    /// `<T_{mu,S} X_S T_{mu,S}^{-1} 1_z, 1_E>` over the block of points agreeing with `z` off `S`.
    pub fn eval(&mut self, z: &BitVec, s: &BitVec) -> Result<f64> {
        let d = s.weight();
        if d > self.cap {
            return Err(Error::SubsetTooLarge { size: d, cap: self.cap });
        }
        z.check_dim(s)?;
        self.positions.clear();
        self.positions.extend(s.iter_ones());
        let size = 1usize << d;
        self.buf.clear();
        self.buf.resize(size, 0.0);
        let z_local = z.extract(&self.positions) as usize;
        self.buf[z_local] = 1.0;
        for j in 0..d {
            self.inverse.apply_along(&mut self.buf, 1 << j);
        }
        for (idx, x) in self.buf.iter_mut().enumerate() {
            if idx.count_ones() % 2 == 1 {
                *x = -*x;
            }
        }
        for j in 0..d {
            self.forward.apply_along(&mut self.buf, 1 << j);
        }
        if self.fs.is_empty() {
            return Ok(self.buf.iter().sum());
        }
        // Weight and far distances split into the part off S (fixed) and on S (local).
        let off_s = z.and_not(s);
        let base_w = off_s.weight();
        self.far_base.clear();
        for x in self.fs.far_points() {
            let dist_off = x.xor(z).and_not(s).weight();
            self.far_base.push((dist_off, x.extract(&self.positions)));
        }
        let mut total = 0.0;
        for (local, value) in self.buf.iter().enumerate() {
            let local = local as u64;
            let wy = base_w + local.count_ones() as usize;
            let keep = self
                .far_base
                .iter()
                .all(|&(dist_off, xs)| wy <= dist_off + (local ^ xs).count_ones() as usize);
            if keep {
                total += value;
            }
        }
        Ok(total)
    }
}

/// One-shot kernel evaluation with the default cap.
pub fn attenuated_kernel(z: &BitVec, s: &BitVec, mu: NoiseRate, fs: &FarSet) -> Result<f64> {
    KernelEvaluator::new(mu, fs).eval(z, s)
}

#[derive(Clone, Debug, Serialize)]
pub struct GHatEstimate {
    pub s: BitVec,
    pub value: f64,
    pub budget: EstimatorBudget,
}

/// Mean of the attenuated kernel over the budgeted number of samples.
pub fn estimate_g_hat(
    source: &dyn SampleSource,
    s: &BitVec,
    fs: &FarSet,
    budget: &EstimatorBudget,
    stream: u64,
    exec: &Executor,
) -> Result<GHatEstimate> {
    let sums = kernel_sums(source, std::slice::from_ref(s), fs, budget.samples, stream, exec)?;
    Ok(GHatEstimate {
        s: s.clone(),
        value: sums[0] / budget.samples.max(1) as f64,
        budget: *budget,
    })
}

/// Per-subset kernel sums over one shared batch of `m` samples.
fn kernel_sums(
    source: &dyn SampleSource,
    subsets: &[BitVec],
    fs: &FarSet,
    m: usize,
    stream: u64,
    exec: &Executor,
) -> Result<Vec<f64>> {
    source.ensure(m)?;
    if let Some(s) = subsets.iter().find(|s| s.dim() != source.dim()) {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            found: s.dim(),
        });
    }
    if let Some(s) = subsets.iter().find(|s| s.weight() > DEFAULT_KERNEL_CAP) {
        return Err(Error::SubsetTooLarge {
            size: s.weight(),
            cap: DEFAULT_KERNEL_CAP,
        });
    }
    let mu = source.mu();
    let partials = exec.map_shards(m, |w, range| {
        let mut eval = KernelEvaluator::new(mu, fs);
        let mut acc = vec![0.0; subsets.len()];
        source.visit(stream, w, range, &mut |z| {
            for (a, s) in acc.iter_mut().zip(subsets) {
                *a += eval.eval(z, s).expect("dimensions and cap checked");
            }
        });
        acc
    });
    let mut total = vec![0.0; subsets.len()];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, Serialize)]
pub struct InnerProductEstimate {
    pub value: f64,
    pub budget: EstimatorBudget,
    /// Estimates of `g^(S)` for every `S` in the character support of `l`.
    pub g_hat: Vec<(BitVec, f64)>,
}

/// `sum_S l_S g~(S)`, with every `g~(S)` computed from the same batch.
///
/// Each coefficient gets accuracy `eps / T` and confidence `kappa / |supp|`,
/// so the total error is at most `eps` with probability `1 - kappa`.
pub fn estimate_inner_product(
    source: &dyn SampleSource,
    ell: &EllFunction,
    fs: &FarSet,
    eps: f64,
    kappa: f64,
    stream: u64,
    exec: &Executor,
) -> Result<InnerProductEstimate> {
    let budget = inner_product_budget(source.mu(), ell, eps, kappa)?;
    estimate_inner_product_with(source, ell, fs, budget, stream, exec)
}

pub fn inner_product_budget(mu: NoiseRate, ell: &EllFunction, eps: f64, kappa: f64) -> Result<EstimatorBudget> {
    let ch = &ell.character;
    EstimatorBudget::for_inner_product(eps, kappa, mu, ch.l1_norm, ch.max_degree, ch.support_size())
}

/// As [`estimate_inner_product`] with an explicit budget.
pub fn estimate_inner_product_with(
    source: &dyn SampleSource,
    ell: &EllFunction,
    fs: &FarSet,
    budget: EstimatorBudget,
    stream: u64,
    exec: &Executor,
) -> Result<InnerProductEstimate> {
    let (subsets, coeffs): (Vec<BitVec>, Vec<f64>) =
        ell.character.support().map(|(s, c)| (s.clone(), c)).unzip();
    let sums = kernel_sums(source, &subsets, fs, budget.samples, stream, exec)?;
    let m = budget.samples.max(1) as f64;
    let g_hat: Vec<(BitVec, f64)> = subsets.into_iter().zip(sums.iter().map(|s| s / m)).collect();
    let value = g_hat.iter().zip(&coeffs).map(|((_, g), c)| c * g).sum();
    Ok(InnerProductEstimate { value, budget, g_hat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::SparseDistribution;
    use crate::filter::{build_far_set, build_far_set_with};
    use crate::source::LiveSource;

    fn bv(s: &str) -> BitVec {
        s.parse().unwrap()
    }

    #[test]
    fn budget_rule() {
        let b = EstimatorBudget::hoeffding(0.1, 0.05, 1.0).unwrap();
        assert_eq!(b.samples, (2.0 * (40.0f64).ln() / 0.01).ceil() as usize);
        let mu = NoiseRate::new(0.5).unwrap();
        let b = EstimatorBudget::for_degree(0.1, 0.05, mu, 2).unwrap();
        assert_eq!(b.per_s_bound, 4.0);
        assert!(b.samples as f64 >= 2.0 * 16.0 * (40.0f64).ln() / 0.01);
        assert!(EstimatorBudget::hoeffding(0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn kernel_empty_subset_is_indicator() {
        let mu = NoiseRate::new(0.7).unwrap();
        let fs = build_far_set_with(&[BitVec::zeros(6), BitVec::ones(6)], mu, 2, 1.0).unwrap();
        let s = BitVec::zeros(6);
        assert_eq!(attenuated_kernel(&BitVec::zeros(6), &s, mu, &fs).unwrap(), 1.0);
        assert_eq!(attenuated_kernel(&BitVec::ones(6), &s, mu, &fs).unwrap(), 0.0);
    }

    #[test]
    fn kernel_with_whole_cube() {
        let mu = NoiseRate::new(0.6).unwrap();
        let fs = build_far_set(&[BitVec::zeros(5)], mu, 1).unwrap();
        for (z, s) in [("10110", "11000"), ("00000", "10101"), ("11111", "01111")] {
            let (z, s) = (bv(z), bv(s));
            let expected = f64::from(chi_unchecked(&s, &z)) * mu.get().powi(-(s.weight() as i32));
            assert!((attenuated_kernel(&z, &s, mu, &fs).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_cap() {
        let mu = NoiseRate::new(0.6).unwrap();
        let fs = build_far_set(&[BitVec::zeros(6)], mu, 1).unwrap();
        let mut eval = KernelEvaluator::with_cap(mu, &fs, 2);
        assert!(matches!(
            eval.eval(&BitVec::zeros(6), &bv("111000")),
            Err(Error::SubsetTooLarge { size: 3, cap: 2 })
        ));
    }

    #[test]
    fn fourier_estimates() {
        let mu = NoiseRate::new(0.6).unwrap();
        let src = LiveSource::new(SparseDistribution::point_mass(BitVec::zeros(8)), mu, 3);
        let ex = Executor::new(2);
        let b = EstimatorBudget::for_degree(0.1, 0.01, mu, 2).unwrap();
        assert_eq!(estimate_fourier(&src, &BitVec::zeros(8), &b, 0, &ex).unwrap(), 1.0);
        let est = estimate_fourier(&src, &bv("11000000"), &b, 0, &ex).unwrap();
        assert!((est - 1.0).abs() <= 0.1);
    }

    #[test]
    fn g_hat_of_empty_set_is_one_without_far_points() {
        let mu = NoiseRate::new(0.6).unwrap();
        let dist = SparseDistribution::new(vec![BitVec::zeros(6), bv("110000")], vec![0.5, 0.5]).unwrap();
        let fs = build_far_set(&[BitVec::zeros(6), bv("110000")], mu, 2).unwrap();
        assert!(fs.is_empty());
        let src = LiveSource::new(dist, mu, 11);
        let b = EstimatorBudget::for_degree(0.1, 0.05, mu, 0).unwrap();
        let est = estimate_g_hat(&src, &BitVec::zeros(6), &fs, &b, 0, &Executor::default()).unwrap();
        assert_eq!(est.value, 1.0);
    }
}
