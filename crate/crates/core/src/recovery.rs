//! End-to-end recovery of `f(target)` for each candidate support point.
//!
//! For one target: translate so the target is the origin, build the far set
//! and the filter `E`, build `l` on the downset of the nearby support, then
//! estimate `<l, g>` and `Upsilon = (T_mu 1_E)(0)` and return their ratio.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::basis::{build_ell, EllFunction};
use crate::bits::BitVec;
use crate::downset::generate_downset;
use crate::error::{Error, Result};
use crate::estimators::{estimate_inner_product_with, inner_product_budget};
use crate::filter::{build_far_set_with, estimate_upsilon, FarSet, DEFAULT_FAR_CONSTANT};
use crate::noise::NoiseRate;
use crate::rng::{substream, Executor};
use crate::source::{SampleSource, Translated};

/// Default cap on the ball radius `r`.
pub const DEFAULT_MAX_R: usize = 8;

/// Smallest filter-mass estimate the pipeline will divide by.
pub const UPSILON_FLOOR: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryConfig {
    pub epsilon: f64,
    pub kappa: f64,
    pub delta_override: Option<f64>,
    pub eta_override: Option<f64>,
    pub r_override: Option<usize>,
    pub far_constant: f64,
    pub max_r: usize,
    /// Seed of the noise draws used for `Upsilon`.
    pub seed: u64,
    pub workers: usize,
    /// Refuse any estimator whose budget exceeds this many samples.
    pub sample_cap: Option<usize>,
    /// Also report the estimates projected onto the simplex.
    pub normalize: bool,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            epsilon: 0.1,
            kappa: 0.05,
            delta_override: None,
            eta_override: None,
            r_override: None,
            far_constant: DEFAULT_FAR_CONSTANT,
            max_r: DEFAULT_MAX_R,
            seed: 0,
            workers: 1,
            sample_cap: None,
            normalize: false,
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, x) in [("epsilon", self.epsilon), ("kappa", self.kappa)] {
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::param(format!("{name} must lie in (0, 1), got {x}")));
            }
        }
        if let Some(r) = self.r_override {
            if r > n {
                return Err(Error::param(format!("r override {r} exceeds dimension {n}")));
            }
        }
        if let Some(d) = self.delta_override {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::param(format!("delta must lie in (0, 1), got {d}")));
            }
        }
        if let Some(e) = self.eta_override {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::param(format!("eta must lie in (0, 1), got {e}")));
            }
        }
        if !(self.far_constant > 0.0) {
            return Err(Error::param("far constant must be positive"));
        }
        Ok(())
    }
}

/// The parameters chosen for one target.
#[derive(Clone, Debug, Serialize)]
pub struct Parameters {
    pub delta: f64,
    pub eta: f64,
    pub r: usize,
    /// `max(ceil((100/mu^4) ln(1/mu) ln(k/eps)), s - 1)` before capping.
    pub r_uncapped: f64,
}

/// Default parameter rule: `delta = mu^2/16`, `eta = eps/16`, and
/// `r = min(n, max_r, max(ceil((100/mu^4) ln(1/mu) ln(k/eps)), s - 1))`.
///
/// The `s - 1` floor makes every support point outside the ball a far point.
pub fn choose_parameters(n: usize, k: usize, mu: NoiseRate, threshold: usize, cfg: &RecoveryConfig) -> Parameters {
    let m = mu.get();
    let delta = cfg.delta_override.unwrap_or(m * m / 16.0);
    let eta = cfg.eta_override.unwrap_or(cfg.epsilon / 16.0);
    let formula = (100.0 / m.powi(4) * (1.0 / m).ln() * (k as f64 / cfg.epsilon).ln()).ceil().max(0.0);
    let r_uncapped = formula.max(threshold.saturating_sub(1) as f64);
    let r = match cfg.r_override {
        Some(r) => r,
        None => (r_uncapped.min(n as f64) as usize).min(cfg.max_r),
    };
    Parameters {
        delta,
        eta,
        r,
        r_uncapped,
    }
}

/// Everything deterministic about one target, before any sampling.
#[derive(Clone, Debug)]
pub struct PointPlan {
    pub target: BitVec,
    /// The support translated so that the target is the origin.
    pub translated: Vec<BitVec>,
    pub far_set: FarSet,
    pub params: Parameters,
    pub ell: EllFunction,
}

pub fn plan_point(support: &[BitVec], target: &BitVec, mu: NoiseRate, cfg: &RecoveryConfig) -> Result<PointPlan> {
    let n = target.dim();
    cfg.validate(n)?;
    if !support.contains(target) {
        return Err(Error::param(format!("target {target} is not in the support")));
    }
    for p in support {
        target.check_dim(p)?;
    }
    let k = support.len();
    let translated: Vec<BitVec> = support.iter().map(|p| p.xor(target)).collect();
    let far_set = build_far_set_with(&translated, mu, k, cfg.far_constant)?;
    let params = choose_parameters(n, k, mu, far_set.threshold(), cfg);
    let nearby: Vec<BitVec> = translated
        .iter()
        .filter(|p| p.weight() <= params.r)
        .cloned()
        .collect();
    let ds = Arc::new(generate_downset(&nearby)?);
    let ell = build_ell(&ds, params.delta, params.eta)?;
    Ok(PointPlan {
        target: target.clone(),
        translated,
        far_set,
        params,
        ell,
    })
}

/// The error bound `eta + ||l^||_1 e^{-mu^2 r / 2}` and its two parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorBudget {
    pub eta: f64,
    pub tail: f64,
    pub bound: f64,
    /// Accuracy assigned to the `<l, g>` estimate.
    pub inner_product_accuracy: f64,
    /// Accuracy assigned to the `Upsilon` estimate.
    pub upsilon_accuracy: f64,
}

pub fn claim_bound(eta: f64, l1_norm: f64, mu: NoiseRate, r: usize) -> f64 {
    eta + l1_norm * (-mu.get() * mu.get() * r as f64 / 2.0).exp()
}

pub fn audit_error_budget(ell: &EllFunction, r: usize, mu: NoiseRate, epsilon: f64) -> ErrorBudget {
    let bound = claim_bound(ell.eta, ell.l1_norm(), mu, r);
    ErrorBudget {
        eta: ell.eta,
        tail: bound - ell.eta,
        bound,
        inner_product_accuracy: epsilon / 16.0,
        upsilon_accuracy: epsilon / 8.0,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PointReport {
    pub target: BitVec,
    /// `clamp(<l,g>~ / Upsilon, 0, 1)`; `None` when the point failed.
    pub estimate: Option<f64>,
    pub inner_product: Option<f64>,
    pub upsilon: Option<f64>,
    pub inner_product_samples: usize,
    pub upsilon_samples: usize,
    pub ell_l1_norm: f64,
    pub downset_size: usize,
    pub r: usize,
    pub r_uncapped: f64,
    pub delta: f64,
    pub eta: f64,
    pub far_points: usize,
    pub far_threshold: usize,
    pub audit_bound: f64,
    pub error: Option<String>,
}

/// Recovers `f(target)` from samples of `T_mu f`.
///
/// `stream` selects the random streams; reusing it for a translated problem
/// reproduces the same draws.
pub fn recover_point(
    source: &dyn SampleSource,
    support: &[BitVec],
    target: &BitVec,
    cfg: &RecoveryConfig,
    stream: u64,
) -> Result<(f64, PointReport)> {
    let mu = source.mu();
    let plan = plan_point(support, target, mu, cfg)?;
    let mut report = blank_report(&plan, mu, cfg);
    let shifted = Translated::new(source, target.clone())?;
    let exec = Executor::new(cfg.workers);

    let ip_budget = inner_product_budget(mu, &plan.ell, cfg.epsilon / 16.0, cfg.kappa / 2.0)?;
    report.inner_product_samples = ip_budget.samples;
    if let Some(cap) = cfg.sample_cap {
        if ip_budget.samples > cap {
            return Err(Error::InsufficientSamples {
                required: ip_budget.samples,
                available: cap,
            });
        }
    }
    // Upsilon is cheap; abort before spending the inner-product budget.
    let ups = estimate_upsilon(
        &plan.far_set,
        cfg.epsilon / 8.0,
        cfg.kappa / 2.0,
        cfg.seed,
        substream(stream, 2),
        &exec,
    )?;
    report.upsilon = Some(ups.value);
    report.upsilon_samples = ups.samples;
    if ups.value < UPSILON_FLOOR {
        return Err(Error::UpsilonTooSmall(ups.value));
    }
    let ip = estimate_inner_product_with(
        &shifted,
        &plan.ell,
        &plan.far_set,
        ip_budget,
        substream(stream, 1),
        &exec,
    )?;
    report.inner_product = Some(ip.value);
    let estimate = (ip.value / ups.value).clamp(0.0, 1.0);
    report.estimate = Some(estimate);
    Ok((estimate, report))
}

/// Largest inner-product budget over the support: the sample count a recorded source must hold.
pub fn required_samples(support: &[BitVec], mu: NoiseRate, cfg: &RecoveryConfig) -> Result<usize> {
    let mut most = 0;
    for target in support {
        let plan = plan_point(support, target, mu, cfg)?;
        let budget = inner_product_budget(mu, &plan.ell, cfg.epsilon / 16.0, cfg.kappa / 2.0)?;
        most = most.max(budget.samples);
    }
    Ok(most)
}

fn blank_report(plan: &PointPlan, mu: NoiseRate, cfg: &RecoveryConfig) -> PointReport {
    let audit = audit_error_budget(&plan.ell, plan.params.r, mu, cfg.epsilon);
    PointReport {
        target: plan.target.clone(),
        estimate: None,
        inner_product: None,
        upsilon: None,
        inner_product_samples: 0,
        upsilon_samples: 0,
        ell_l1_norm: plan.ell.l1_norm(),
        downset_size: plan.ell.downset().len(),
        r: plan.params.r,
        r_uncapped: plan.params.r_uncapped,
        delta: plan.params.delta,
        eta: plan.params.eta,
        far_points: plan.far_set.far_points().len(),
        far_threshold: plan.far_set.threshold(),
        audit_bound: audit.bound,
        error: None,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoveryReport {
    pub n: usize,
    pub mu: f64,
    pub k: usize,
    pub config: RecoveryConfig,
    pub points: Vec<PointReport>,
    /// Sum of the successful estimates.
    pub estimate_sum: f64,
    /// Estimates projected onto the probability simplex, if requested.
    pub normalized: Option<Vec<f64>>,
    pub failures: usize,
}

impl RecoveryReport {
    pub fn estimates(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.estimate).collect()
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// One CSV row per support point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        for p in &self.points {
            wtr.serialize(p)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn failed_report(target: &BitVec, err: &Error, plan: Option<PointReport>) -> PointReport {
    let mut rep = plan.unwrap_or(PointReport {
        target: target.clone(),
        estimate: None,
        inner_product: None,
        upsilon: None,
        inner_product_samples: 0,
        upsilon_samples: 0,
        ell_l1_norm: f64::NAN,
        downset_size: 0,
        r: 0,
        r_uncapped: f64::NAN,
        delta: f64::NAN,
        eta: f64::NAN,
        far_points: 0,
        far_threshold: 0,
        audit_bound: f64::NAN,
        error: None,
    });
    rep.estimate = None;
    rep.error = Some(err.to_string());
    rep
}

/// Runs [`recover_point`] for every support point; point `i` uses stream `i`.
pub fn recover_distribution(
    source: &dyn SampleSource,
    support: &[BitVec],
    cfg: &RecoveryConfig,
) -> Result<RecoveryReport> {
    let n = source.dim();
    cfg.validate(n)?;
    if support.is_empty() {
        return Err(Error::InvalidDistribution("empty support".into()));
    }
    for p in support {
        if p.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: p.dim(),
            });
        }
    }
    let mu = source.mu();
    let mut points = Vec::with_capacity(support.len());
    for (i, target) in support.iter().enumerate() {
        match recover_point(source, support, target, cfg, i as u64) {
            Ok((_, rep)) => points.push(rep),
            Err(err) => {
                let partial = plan_point(support, target, mu, cfg)
                    .ok()
                    .map(|plan| blank_report(&plan, mu, cfg));
                points.push(failed_report(target, &err, partial));
            }
        }
    }
    let failures = points.iter().filter(|p| p.estimate.is_none()).count();
    let estimate_sum = points.iter().filter_map(|p| p.estimate).sum();
    let normalized = cfg.normalize.then(|| {
        let raw: Vec<f64> = points.iter().map(|p| p.estimate.unwrap_or(0.0)).collect();
        project_to_simplex(&raw)
    });
    Ok(RecoveryReport {
        n,
        mu: mu.get(),
        k: support.len(),
        config: cfg.clone(),
        points,
        estimate_sum,
        normalized,
        failures,
    })
}

/// Euclidean projection onto `{x >= 0, sum x = 1}`.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::SparseDistribution;
    use crate::source::LiveSource;

    #[test]
    fn claim_bound_example() {
        let mu = NoiseRate::new(1.0).unwrap();
        let b = claim_bound(0.01, 10.0, mu, 20);
        assert!((b - (0.01 + 10.0 * (-10.0f64).exp())).abs() < 1e-15);
        assert!((b - 0.01045).abs() < 1e-5);
        let mut prev = f64::INFINITY;
        for r in 0..30 {
            let now = claim_bound(0.01, 10.0, NoiseRate::new(0.5).unwrap(), r);
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn parameter_rule() {
        let mu = NoiseRate::new(0.6).unwrap();
        let cfg = RecoveryConfig::default();
        let p = choose_parameters(12, 4, mu, 12, &cfg);
        assert!((p.delta - 0.36 / 16.0).abs() < 1e-15);
        assert!((p.eta - 0.1 / 16.0).abs() < 1e-15);
        assert_eq!(p.r, 8);
        assert!(p.r_uncapped > 12.0);

        let noiseless = choose_parameters(12, 4, NoiseRate::new(1.0).unwrap(), 5, &cfg);
        assert_eq!(noiseless.r_uncapped, 4.0);
        assert_eq!(noiseless.r, 4);

        let cfg = RecoveryConfig {
            r_override: Some(3),
            ..Default::default()
        };
        assert_eq!(choose_parameters(12, 4, mu, 12, &cfg).r, 3);
        assert!(cfg.validate(2).is_err());
    }

    #[test]
    fn simplex_projection() {
        let p = project_to_simplex(&[0.5, 0.3, 0.4]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|x| *x >= 0.0));
        assert_eq!(project_to_simplex(&[0.2, 0.8]), vec![0.2, 0.8]);
        assert_eq!(project_to_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn noiseless_point_mass() {
        let n = 6;
        let target: BitVec = "101100".parse().unwrap();
        let src = LiveSource::new(SparseDistribution::point_mass(target.clone()), NoiseRate::new(1.0).unwrap(), 1);
        let cfg = RecoveryConfig::default();
        let (est, rep) = recover_point(&src, std::slice::from_ref(&target), &target, &cfg, 0).unwrap();
        assert!((est - 1.0).abs() <= cfg.epsilon);
        assert_eq!(rep.upsilon, Some(1.0));
        assert_eq!(rep.target.dim(), n);
    }

    #[test]
    fn rejects_targets_outside_support() {
        let mu = NoiseRate::new(0.8).unwrap();
        let support = vec![BitVec::zeros(4)];
        assert!(plan_point(&support, &BitVec::ones(4), mu, &RecoveryConfig::default()).is_err());
    }

    #[test]
    fn sample_cap_is_enforced() {
        let target = BitVec::zeros(5);
        let src = LiveSource::new(SparseDistribution::point_mass(target.clone()), NoiseRate::new(0.9).unwrap(), 1);
        let cfg = RecoveryConfig {
            sample_cap: Some(10),
            ..Default::default()
        };
        assert!(matches!(
            recover_point(&src, std::slice::from_ref(&target), &target, &cfg, 0),
            Err(Error::InsufficientSamples { available: 10, .. })
        ));
        let report = recover_distribution(&src, std::slice::from_ref(&target), &cfg).unwrap();
        assert_eq!(report.failures, 1);
        assert!(report.points[0].error.is_some());
    }
}
