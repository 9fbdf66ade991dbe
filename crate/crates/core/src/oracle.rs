//! Exact brute-force counterparts of the estimators, guarded to `n <= 20`.

use nalgebra::{DMatrix, DVector};

use crate::basis::Evaluate;
use crate::bits::{chi_unchecked, BitVec, SparseDistribution};
use crate::error::{Error, Result};
use crate::filter::{exact_t_mu_e, FarSet};
use crate::local_inverse::NoiseMatrix;
use crate::noise::{apply_t_mu_dense, coord_kernel, NoiseRate, DENSE_LIMIT};

fn guard(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        Err(Error::OracleTooLarge { n, limit: DENSE_LIMIT })
    } else {
        Ok(())
    }
}

/// A real function on `{0,1}^n` stored as a table indexed by packed point value.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseFunction {
    n: usize,
    values: Vec<f64>,
}

impl DenseFunction {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        guard(n)?;
        if values.len() != 1 << n {
            return Err(Error::LengthMismatch {
                expected: 1 << n,
                found: values.len(),
            });
        }
        Ok(DenseFunction { n, values })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        guard(n)?;
        Ok(DenseFunction {
            n,
            values: vec![0.0; 1 << n],
        })
    }

    pub fn from_fn(n: usize, f: impl Fn(&BitVec) -> f64) -> Result<Self> {
        guard(n)?;
        let values = (0..1u64 << n).map(|x| f(&BitVec::from_u64(n, x))).collect();
        Ok(DenseFunction { n, values })
    }

    pub fn from_sparse(dist: &SparseDistribution) -> Result<Self> {
        let mut out = Self::zeros(dist.dim())?;
        for (p, w) in dist.iter() {
            out.values[p.as_u64().expect("n <= 20") as usize] += w;
        }
        Ok(out)
    }

    /// Tabulates any evaluable expansion.
    pub fn tabulate(n: usize, e: &impl Evaluate) -> Result<Self> {
        Self::from_fn(n, |x| e.eval(x))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, x: &BitVec) -> f64 {
        self.values[x.as_u64().expect("n <= 20") as usize]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `T_mu` applied to the table.
    pub fn noised(&self, mu: NoiseRate) -> Result<Self> {
        Ok(DenseFunction {
            n: self.n,
            values: apply_t_mu_dense(&self.values, mu.get())?,
        })
    }
}

/// `f^(S) = sum_x f(x) chi_S(x)`.
pub fn exact_fourier(f: &DenseFunction, s: &BitVec) -> Result<f64> {
    if s.dim() != f.n {
        return Err(Error::DimensionMismatch {
            expected: f.n,
            found: s.dim(),
        });
    }
    let mask = s.as_u64().expect("n <= 20");
    Ok(f.values
        .iter()
        .enumerate()
        .map(|(x, v)| if (x as u64 & mask).count_ones() % 2 == 0 { *v } else { -*v })
        .sum())
}

/// `f(x) = sum_S 2^{-n} f^(S) chi_S(x)`, from all `2^n` coefficients.
pub fn synthesize(n: usize, coeffs: &[f64]) -> Result<DenseFunction> {
    let spectrum = DenseFunction::new(n, coeffs.to_vec())?;
    let scale = 0.5f64.powi(n as i32);
    DenseFunction::from_fn(n, |x| scale * exact_fourier(&spectrum, x).expect("same dimension"))
}

/// `g(x) = f(x) (T_mu 1_E)(x)`.
pub fn exact_g(f: &SparseDistribution, fs: &FarSet) -> Result<DenseFunction> {
    let mut g = DenseFunction::zeros(f.dim())?;
    for (p, w) in f.iter() {
        g.values[p.as_u64().expect("n <= 20") as usize] = w * exact_t_mu_e(p, fs)?;
    }
    Ok(g)
}

/// `sum_x a(x) b(x)`.
pub fn exact_inner_product(a: &DenseFunction, b: &DenseFunction) -> Result<f64> {
    if a.n != b.n {
        return Err(Error::DimensionMismatch {
            expected: a.n,
            found: b.n,
        });
    }
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum())
}

/// Largest `|S|` the explicit-matrix kernel oracle accepts.
pub const DENSE_KERNEL_LIMIT: usize = 10;

/// The attenuated kernel from explicit `2^{|S|} x 2^{|S|}` matrices, with
/// `T_{mu,S}` built as a Kronecker product and inverted numerically.
pub fn dense_kernel_oracle(z: &BitVec, s: &BitVec, mu: NoiseRate, fs: &FarSet) -> Result<f64> {
    let positions: Vec<usize> = s.iter_ones().collect();
    let d = positions.len();
    if d > DENSE_KERNEL_LIMIT {
        return Err(Error::SubsetTooLarge {
            size: d,
            cap: DENSE_KERNEL_LIMIT,
        });
    }
    let size = 1usize << d;
    let k = coord_kernel(mu.get(), false)?;
    let mut t = DMatrix::<f64>::identity(1, 1);
    // Local bit j is position j; the Kronecker factor for the highest bit goes leftmost.
    for _ in 0..d {
        let k2 = DMatrix::from_row_slice(2, 2, &[k.m[0][0], k.m[0][1], k.m[1][0], k.m[1][1]]);
        t = k2.kronecker(&t);
    }
    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::param("T_{mu,S} is singular"))?;
    let x = DMatrix::from_diagonal(&DVector::from_fn(size, |i, _| {
        if i.count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }));
    let op = &t * x * t_inv;
    let col = z.extract(&positions) as usize;
    let mut total = 0.0;
    for row in 0..size {
        let y = z.deposit_into(z, &positions, row as u64);
        if fs.far_points().iter().all(|p| y.weight() <= p.distance(&y)) {
            total += op[(row, col)];
        }
    }
    Ok(total)
}

/// `g^(S)` from the dense `g` table.
pub fn exact_g_hat(f: &SparseDistribution, fs: &FarSet, s: &BitVec) -> Result<f64> {
    exact_fourier(&exact_g(f, fs)?, s)
}

/// `E_{z ~ T_mu f}[kernel(z, S)]` by summing over all `2^n` points.
pub fn kernel_expectation(
    f: &SparseDistribution,
    s: &BitVec,
    mu: NoiseRate,
    kernel: impl Fn(&BitVec, &BitVec) -> Result<f64>,
) -> Result<f64> {
    let noised = DenseFunction::from_sparse(f)?.noised(mu)?;
    let mut total = 0.0;
    for (x, p) in noised.values.iter().enumerate() {
        let z = BitVec::from_u64(f.dim(), x as u64);
        total += p * kernel(&z, s)?;
    }
    Ok(total)
}

/// `chi_S` as a dense table.
pub fn character_table(n: usize, s: &BitVec) -> Result<DenseFunction> {
    DenseFunction::from_fn(n, |x| f64::from(chi_unchecked(s, x)))
}

/// Largest matrix size `r + 1` accepted by the enumeration oracle.
pub const LP_ORACLE_MAX_R: usize = 4;

/// Optimal `min ||w||_inf s.t. ||A w - e_0||_inf <= eps`, by bisection on `t`.
///
/// For fixed `t` the feasible set is a bounded polytope in `R^{r+1}`; it is
/// nonempty iff one of its vertices exists, and every vertex is the solution
/// of `r + 1` tight constraints chosen among `w_i = ±t` and
/// `(A w)_i = e0_i ± eps`. All such choices are enumerated.
pub fn lp_oracle_min_infnorm(a: &NoiseMatrix, eps: f64) -> Result<(f64, Vec<f64>)> {
    let r = a.r();
    if r > LP_ORACLE_MAX_R {
        return Err(Error::param(format!("enumeration oracle supports r <= {LP_ORACLE_MAX_R}")));
    }
    let mut hi = 1.0;
    let mut witness = loop {
        if let Some(w) = feasible_vertex(a, eps, hi) {
            break w;
        }
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Lp("oracle found no feasible t".into()));
        }
    };
    let mut lo = 0.0;
    for _ in 0..200 {
        if hi - lo <= 1e-13 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match feasible_vertex(a, eps, mid) {
            Some(w) => {
                hi = mid;
                witness = w;
            }
            None => lo = mid,
        }
    }
    Ok((hi, witness))
}

fn feasible_vertex(a: &NoiseMatrix, eps: f64, t: f64) -> Option<Vec<f64>> {
    let d = a.size();
    // Hyperplanes (normal, offset) with constraint normal.w <= offset.
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::with_capacity(4 * d);
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        planes.push((e.clone(), t));
        planes.push((e.iter().map(|x| -x).collect(), t));
    }
    for i in 0..d {
        let target = if i == 0 { 1.0 } else { 0.0 };
        let row = a.rows()[i].clone();
        planes.push((row.clone(), target + eps));
        planes.push((row.iter().map(|x| -x).collect(), eps - target));
    }
    // Slack only for rounding: the optimum is sensitive to eps, so any wider
    // tolerance biases the bisection downward.
    let feasible = |w: &DVector<f64>| {
        planes.iter().all(|(nrm, off)| {
            let dot: f64 = nrm.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
            let scale: f64 = nrm.iter().zip(w.iter()).map(|(a, b)| (a * b).abs()).sum();
            dot <= off + 1e-13 * (1.0 + scale)
        })
    };
    let mut choice: Vec<usize> = (0..d).collect();
    let total = planes.len();
    loop {
        let m = DMatrix::from_fn(d, d, |i, j| planes[choice[i]].0[j]);
        let rhs = DVector::from_fn(d, |i, _| planes[choice[i]].1);
        if let Some(w) = m.lu().solve(&rhs) {
            if w.iter().all(|x| x.is_finite()) && feasible(&w) {
                return Some(w.iter().copied().collect());
            }
        }
        // next combination in lexicographic order
        let mut i = d;
        loop {
            if i == 0 {
                return None;
            }
            i -= 1;
            if choice[i] < total - d + i {
                break;
            }
        }
        choice[i] += 1;
        for j in i + 1..d {
            choice[j] = choice[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{build_far_set, build_far_set_with};
    use crate::local_inverse::{build_noise_matrix, solve_min_infnorm};

    #[test]
    fn fourier_examples() {
        let n = 5;
        let uniform = DenseFunction::new(n, vec![1.0 / 32.0; 32]).unwrap();
        assert!((exact_fourier(&uniform, &BitVec::zeros(n)).unwrap() - 1.0).abs() < 1e-15);
        assert!(exact_fourier(&uniform, &BitVec::unit(n, 2)).unwrap().abs() < 1e-15);

        let pts: Vec<BitVec> = ["10100", "01110", "11111"].iter().map(|s| s.parse().unwrap()).collect();
        let dist = SparseDistribution::new(pts, vec![0.2, 0.3, 0.5]).unwrap();
        let f = DenseFunction::from_sparse(&dist).unwrap();
        let s: BitVec = "11000".parse().unwrap();
        let direct: f64 = dist.iter().map(|(p, w)| w * f64::from(chi_unchecked(&s, p))).sum();
        assert!((exact_fourier(&f, &s).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn synthesis_inverts_transform() {
        let n = 6;
        let f = DenseFunction::from_fn(n, |x| (x.as_u64().unwrap() as f64 * 0.37).sin()).unwrap();
        let coeffs: Vec<f64> = (0..1u64 << n)
            .map(|s| exact_fourier(&f, &BitVec::from_u64(n, s)).unwrap())
            .collect();
        let back = synthesize(n, &coeffs).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn inner_product_examples() {
        let n = 4;
        let dist = SparseDistribution::uniform(vec![BitVec::zeros(n), BitVec::ones(n)]).unwrap();
        let f = DenseFunction::from_sparse(&dist).unwrap();
        let one = DenseFunction::from_fn(n, |_| 1.0).unwrap();
        assert!((exact_inner_product(&f, &one).unwrap() - 1.0).abs() < 1e-15);
        let a = character_table(n, &"1100".parse().unwrap()).unwrap();
        let b = character_table(n, &"0110".parse().unwrap()).unwrap();
        assert_eq!(exact_inner_product(&a, &a).unwrap(), 16.0);
        assert_eq!(exact_inner_product(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn g_examples() {
        let mu = NoiseRate::new(0.6).unwrap();
        let pts = vec![BitVec::zeros(8), "11000000".parse().unwrap()];
        let dist = SparseDistribution::new(pts.clone(), vec![0.7, 0.3]).unwrap();
        let fs = build_far_set(&pts, mu, 2).unwrap();
        assert!(fs.is_empty());
        assert_eq!(exact_g(&dist, &fs).unwrap(), DenseFunction::from_sparse(&dist).unwrap());

        let pts = vec![BitVec::zeros(8), BitVec::ones(8)];
        let dist = SparseDistribution::new(pts.clone(), vec![0.7, 0.3]).unwrap();
        let fs = build_far_set_with(&pts, mu, 2, 1.0).unwrap();
        let g = exact_g(&dist, &fs).unwrap();
        assert!(g.at(&BitVec::zeros(8)) >= 0.7 / 2.0);
        assert!(g.sum() <= 1.0);
    }

    #[test]
    fn kernel_oracle_matches_closed_form_without_filter() {
        let mu = NoiseRate::new(0.6).unwrap();
        let fs = build_far_set(&[BitVec::zeros(6)], mu, 1).unwrap();
        let z: BitVec = "101100".parse().unwrap();
        let s: BitVec = "111001".parse().unwrap();
        let expected = f64::from(chi_unchecked(&s, &z)) / mu.get().powi(4);
        assert!((dense_kernel_oracle(&z, &s, mu, &fs).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn lp_oracle_matches_simplex() {
        for (delta, r, eps) in [(0.25, 3, 0.1), (0.5, 2, 0.2), (0.1, 3, 0.05), (0.3, 1, 0.1)] {
            let a = build_noise_matrix(delta, r).unwrap();
            let (t, w_oracle) = lp_oracle_min_infnorm(&a, eps).unwrap();
            let w = solve_min_infnorm(&a, eps).unwrap();
            let t_simplex = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!((t - t_simplex).abs() < 1e-6, "{delta} {r}: {t} vs {t_simplex}");
            assert!(a.residual(&w_oracle).unwrap() <= eps + 1e-8);
        }
    }

    #[test]
    fn guards() {
        assert!(DenseFunction::zeros(21).is_err());
        assert!(DenseFunction::new(3, vec![0.0; 7]).is_err());
        let a = build_noise_matrix(0.5, 5).unwrap();
        assert!(lp_oracle_min_infnorm(&a, 0.1).is_err());
    }
}
