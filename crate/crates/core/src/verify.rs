//! Field self-check: every production computation against its brute-force oracle
//! on one seeded random instance.

use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::Serialize;

use crate::basis::{build_ell, build_ell_zero, log_ell_norm_bound, Evaluate};
use crate::bits::{BitVec, SparseDistribution};
use crate::downset::{generate_downset, mobius_transform, zeta_transform, Downset};
use crate::error::{Error, Result};
use crate::estimators::attenuated_kernel;
use crate::filter::{build_far_set_with, exact_t_mu_e};
use crate::local_inverse::{build_noise_matrix, robust_local_inverse, solve_min_infnorm};
use crate::noise::{apply_t_mu_dense, coord_kernel, CoordKernel, NoiseRate};
use crate::oracle::{
    dense_kernel_oracle, exact_fourier, exact_g, exact_g_hat, exact_inner_product, kernel_expectation,
    lp_oracle_min_infnorm, DenseFunction,
};
use crate::recovery::{claim_bound, plan_point, RecoveryConfig};
use crate::rng::stream_rng;

/// Largest dimension `verify` accepts.
pub const VERIFY_MAX_N: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Flip the sign convention of the Möbius transform.
    MobiusSign,
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mobius-sign" => Ok(Fault::MobiusSign),
            other => Err(Error::param(format!("unknown fault `{other}` (mobius-sign)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerifySpec {
    pub n: usize,
    pub k: usize,
    pub mu: f64,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            n: 14,
            k: 5,
            mu: 0.6,
            seed: 1,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn faulty_mobius(ds: &Downset, f: &[i64]) -> Vec<i64> {
    (0..ds.len())
        .map(|i| {
            let wx = ds.members()[i].weight();
            ds.supersets_of(i)
                .map(|j| {
                    if (ds.members()[j].weight() - wx) % 2 == 0 {
                        -f[j]
                    } else {
                        f[j]
                    }
                })
                .sum()
        })
        .collect()
}

struct Instance {
    dist: SparseDistribution,
    mu: NoiseRate,
    downset: Arc<Downset>,
}

fn random_instance(spec: &VerifySpec) -> Result<Instance> {
    let n = spec.n;
    let mut rng = stream_rng(spec.seed, 0x7e51, 0);
    let mut points = vec![BitVec::zeros(n)];
    while points.len() < spec.k {
        let w = rng.gen_range(1..=n.min(4));
        let p = BitVec::from_indices(n, &sample_indices(&mut rng, n, w).into_vec());
        if !points.contains(&p) {
            points.push(p);
        }
    }
    // One far-away point so the filter is exercised.
    if spec.k >= 2 {
        points[spec.k - 1] = BitVec::ones(n);
    }
    let raw: Vec<f64> = (0..spec.k).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let drift: f64 = 1.0 - weights.iter().sum::<f64>();
    weights[0] += drift;
    let dist = SparseDistribution::new(points.clone(), weights)?;
    let near: Vec<BitVec> = points.iter().filter(|p| p.weight() <= 5).cloned().collect();
    Ok(Instance {
        dist,
        mu: NoiseRate::new(spec.mu)?,
        downset: Arc::new(generate_downset(&near)?),
    })
}

/// Runs the oracle-equivalence suite.
pub fn run_verification(spec: &VerifySpec) -> Result<VerifyReport> {
    if spec.n == 0 || spec.n > VERIFY_MAX_N {
        return Err(Error::param(format!("verify needs 1 <= n <= {VERIFY_MAX_N}, got {}", spec.n)));
    }
    if spec.k == 0 || spec.k > 8 {
        return Err(Error::param("verify needs 1 <= k <= 8"));
    }
    let inst = random_instance(spec)?;
    let mut checks = Vec::new();
    let mut record = |name: &str, result: Result<(bool, String)>| {
        let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
        checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    };

    record("mobius-zeta-inverse", check_mobius(&inst, spec));
    record("noise-kernels", check_kernels(&inst));
    record("local-inverse-lp", check_lp());
    record("ell-construction", check_ell(&inst));
    record("ell-zero-interpolation", check_ell_zero(&inst));
    record("filter-set", check_filter(&inst));
    record("attenuated-kernel", check_attenuated(&inst, spec.seed));
    record("error-budget", check_budget(&inst));
    Ok(VerifyReport { checks })
}

fn check_mobius(inst: &Instance, spec: &VerifySpec) -> Result<(bool, String)> {
    let ds = &inst.downset;
    let mut rng = stream_rng(spec.seed, 0x70b, 0);
    let f: Vec<i64> = (0..ds.len()).map(|_| rng.gen_range(-50..=50)).collect();
    let z = zeta_transform(ds, &f)?;
    let back = match spec.fault {
        Some(Fault::MobiusSign) => faulty_mobius(ds, &z),
        None => mobius_transform(ds, &z)?,
    };
    let ok = back == f;
    Ok((ok, format!("|C↓| = {}", ds.len())))
}

fn check_kernels(inst: &Instance) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for mu in [0.3, 0.6, 0.9, inst.mu.get()] {
        let fwd = coord_kernel(mu, false)?;
        let inv = coord_kernel(mu, true)?;
        worst = worst.max(fwd.compose(&inv).max_abs_diff(&CoordKernel::IDENTITY));
        worst = worst.max((inv.norm_1_to_1() - 1.0 / mu).abs());
    }
    let f = DenseFunction::from_sparse(&inst.dist)?;
    let (m1, m2) = (inst.mu.get(), 0.7);
    let two = apply_t_mu_dense(&apply_t_mu_dense(f.values(), m2)?, m1)?;
    let one = apply_t_mu_dense(f.values(), m1 * m2)?;
    let semigroup = two.iter().zip(&one).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok((worst <= 1e-12 && semigroup <= 1e-10, format!("kernel {worst:.1e}, semigroup {semigroup:.1e}")))
}

fn check_lp() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (delta, r) in [(0.25, 3), (0.1, 2), (0.5, 3)] {
        let a = build_noise_matrix(delta, r)?;
        let (t, _) = lp_oracle_min_infnorm(&a, 0.1)?;
        let w = solve_min_infnorm(&a, 0.1)?;
        let ts = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        worst = worst.max((t - ts).abs());
        let inv = robust_local_inverse(&a, 0.1)?;
        if inv.residual > 0.1 + 1e-9 {
            return Ok((false, format!("residual {} at delta {delta}", inv.residual)));
        }
    }
    Ok((worst <= 1e-6, format!("max objective gap {worst:.1e}")))
}

fn check_ell(inst: &Instance) -> Result<(bool, String)> {
    let ds = &inst.downset;
    let (delta, eta) = (0.25, 0.05);
    let ell = build_ell(ds, delta, eta)?;
    let n = ds.dim();
    let table = DenseFunction::tabulate(n, &ell.monomial)?;
    let mut outside: f64 = 0.0;
    let mut mismatch: f64 = 0.0;
    for s in 0..1u64 << n {
        let s = BitVec::from_u64(n, s);
        let coeff = exact_fourier(&table, &s)? / (1u64 << n) as f64;
        match ds.index_of(&s) {
            Some(i) => mismatch = mismatch.max((coeff - ell.character.coeffs[i]).abs()),
            None => outside = outside.max(coeff.abs()),
        }
    }
    let within = ell.l1_norm().ln() <= log_ell_norm_bound(ell.k, delta, eta, ell.r);
    let ok = outside <= 1e-9 && mismatch <= 1e-9 && within && (ell.eval(&BitVec::zeros(n)) - 1.0).abs() <= 1e-9;
    Ok((ok, format!("outside-support {outside:.1e}, coefficient gap {mismatch:.1e}, ||l^|| {:.3}", ell.l1_norm())))
}

fn check_ell_zero(inst: &Instance) -> Result<(bool, String)> {
    let ds = &inst.downset;
    let l0 = build_ell_zero(ds);
    let worst = ds
        .members()
        .iter()
        .map(|y| (l0.monomial.eval_member(y).unwrap() - if y.is_zero() { 1.0 } else { 0.0 }).abs())
        .fold(0.0f64, f64::max);
    let bound = (ds.k() << ds.max_weight()) as f64;
    Ok((worst == 0.0 && l0.l1_norm() <= bound, format!("||l0^|| {:.3} <= {bound}", l0.l1_norm())))
}

fn check_filter(inst: &Instance) -> Result<(bool, String)> {
    let fs = build_far_set_with(inst.dist.points(), inst.mu, inst.dist.k(), 2.0)?;
    let at_origin = exact_t_mu_e(&BitVec::zeros(inst.dist.dim()), &fs)?;
    let mu2 = inst.mu.get().powi(2);
    let mut decay_ok = true;
    for x in fs.far_points() {
        decay_ok &= exact_t_mu_e(x, &fs)? <= (-mu2 * x.weight() as f64 / 2.0).exp();
    }
    Ok((
        at_origin >= 0.5 && decay_ok,
        format!("(T 1_E)(0) = {at_origin:.4}, {} far points", fs.far_points().len()),
    ))
}

fn check_attenuated(inst: &Instance, seed: u64) -> Result<(bool, String)> {
    let n = inst.dist.dim();
    let fs = build_far_set_with(inst.dist.points(), inst.mu, inst.dist.k(), 1.0)?;
    let mut rng = stream_rng(seed, 0xa77, 0);
    let mut gap: f64 = 0.0;
    let mut bound_ok = true;
    for _ in 0..200 {
        let z = BitVec::from_u64(n, rng.gen_range(0..1u64 << n));
        let w = rng.gen_range(0..=4.min(n));
        let s = BitVec::from_indices(n, &sample_indices(&mut rng, n, w).into_vec());
        let fast = attenuated_kernel(&z, &s, inst.mu, &fs)?;
        let dense = dense_kernel_oracle(&z, &s, inst.mu, &fs)?;
        gap = gap.max((fast - dense).abs());
        bound_ok &= fast.abs() <= inst.mu.get().powi(-(w as i32)) * (1.0 + 1e-9);
    }
    let mut expect_gap: f64 = 0.0;
    for s in inst.downset.members().iter().take(8) {
        let expected = exact_g_hat(&inst.dist, &fs, s)?;
        let got = kernel_expectation(&inst.dist, s, inst.mu, |z, s| attenuated_kernel(z, s, inst.mu, &fs))?;
        expect_gap = expect_gap.max((expected - got).abs());
    }
    Ok((
        gap <= 1e-9 && expect_gap <= 1e-9 && bound_ok,
        format!("dense gap {gap:.1e}, expectation gap {expect_gap:.1e}"),
    ))
}

fn check_budget(inst: &Instance) -> Result<(bool, String)> {
    let n = inst.dist.dim();
    let support = inst.dist.points().to_vec();
    let target = support[0].clone();
    let cfg = RecoveryConfig {
        max_r: 5,
        ..Default::default()
    };
    let plan = plan_point(&support, &target, inst.mu, &cfg)?;
    let dist = crate::bits::translate(&inst.dist, &target)?;
    let g = exact_g(&dist, &plan.far_set)?;
    let ell_table = DenseFunction::tabulate(n, &plan.ell)?;
    let ip = exact_inner_product(&ell_table, &g)?;
    let truth = dist.weight_of(&BitVec::zeros(n)) * exact_t_mu_e(&BitVec::zeros(n), &plan.far_set)?;
    let bound = claim_bound(plan.ell.eta, plan.ell.l1_norm(), inst.mu, plan.params.r);
    let gap = (ip - truth).abs();
    Ok((gap <= bound, format!("|<l,g> - f(0)Y| = {gap:.2e} <= {bound:.2e}")))
}
