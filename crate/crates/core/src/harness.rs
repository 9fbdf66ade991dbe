//! Synthetic populations, their file format, and the parameter sweep used by `bench`.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::basis::{build_ell_zero, log_ell_norm_bound};
use crate::bits::{BitVec, SparseDistribution};
use crate::error::{Error, Result};
use crate::estimators::inner_product_budget;
use crate::noise::NoiseRate;
use crate::recovery::{plan_point, recover_distribution, RecoveryConfig};
use crate::rng::{stream_rng, substream};
use crate::source::{parse_field, parse_header_optional, LiveSource};

/// Tolerance on the weight sum when loading a population file.
pub const LOAD_TOLERANCE: f64 = 1e-9;

/// A planted distribution, optionally tagged with the channel's noise rate.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationFile {
    pub mu: Option<f64>,
    pub dist: SparseDistribution,
}

impl PopulationFile {
    /// Header `n=<n> k=<k>` (plus `mu=` when set), then `<bits> <weight>` rows.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "n={} k={}", self.dist.dim(), self.dist.k())?;
        if let Some(mu) = self.mu {
            write!(out, " mu={mu}")?;
        }
        writeln!(out)?;
        for (p, w) in self.dist.iter() {
            writeln!(out, "{p} {w}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Parses a population file; weights must sum to 1 within `1e-9` and are then renormalized.
    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "missing header line"))?;
        let fields = parse_header_optional(&header?, 1, &["n", "k", "mu"])?;
        let require = |i: usize, key: &str| {
            fields[i]
                .clone()
                .ok_or_else(|| Error::parse(1, format!("header is missing `{key}`")))
        };
        let n: usize = parse_field(&require(0, "n")?, 1, "n")?;
        let k: usize = parse_field(&require(1, "k")?, 1, "k")?;
        let mu = match &fields[2] {
            Some(v) => Some(parse_field::<f64>(v, 1, "mu")?),
            None => None,
        };
        let mut points = Vec::with_capacity(k);
        let mut weights = Vec::with_capacity(k);
        for (idx, line) in lines {
            let line = line?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            let line_no = idx + 1;
            let mut parts = text.split_whitespace();
            let (Some(bits), Some(weight), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::parse(line_no, "expected `<bits> <weight>`"));
            };
            let p: BitVec = bits.parse().map_err(|e: Error| Error::parse(line_no, e.to_string()))?;
            if p.dim() != n {
                return Err(Error::parse(line_no, format!("expected {n} bits, found {}", p.dim())));
            }
            points.push(p);
            weights.push(parse_field::<f64>(weight, line_no, "weight")?);
        }
        if points.len() != k {
            return Err(Error::parse(
                1,
                format!("header declares k={k}, file has {} rows", points.len()),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > LOAD_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}")));
        }
        let mut weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        fix_sum(&mut weights);
        let dist = SparseDistribution::new(points, weights)?;
        Ok(PopulationFile { mu, dist })
    }
}

/// Nudges the largest weight so the sum is 1 to within one rounding step.
fn fix_sum(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    if let Some(max) = weights.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *max = (*max + (1.0 - total)).clamp(0.0, 1.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightProfile {
    Uniform,
    /// `w_i ∝ 2^{-i}`.
    Geometric,
    /// Normalized independent `Exp(1)` draws.
    Dirichlet,
}

impl FromStr for WeightProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(WeightProfile::Uniform),
            "geometric" => Ok(WeightProfile::Geometric),
            "dirichlet" => Ok(WeightProfile::Dirichlet),
            other => Err(Error::param(format!(
                "unknown weight profile `{other}` (uniform, geometric, dirichlet)"
            ))),
        }
    }
}

fn ball_size(n: usize, radius: usize) -> f64 {
    let mut total = 0.0;
    let mut binom = 1.0;
    for w in 0..=radius.min(n) {
        total += binom;
        binom = binom * (n - w) as f64 / (w + 1) as f64;
    }
    total
}

/// `k` distinct random points with weights from `profile`.
///
/// With `radius`, points lie within that Hamming distance of a random center.
pub fn generate_population(
    n: usize,
    k: usize,
    profile: WeightProfile,
    seed: u64,
    radius: Option<usize>,
) -> Result<PopulationFile> {
    if n == 0 || k == 0 {
        return Err(Error::param("n and k must be positive"));
    }
    let capacity = match radius {
        Some(r) => ball_size(n, r),
        None => 2f64.powi(n as i32),
    };
    if k as f64 > capacity {
        return Err(Error::param(format!("cannot place {k} distinct points (only {capacity} available)")));
    }
    let mut rng = stream_rng(seed, 0x9e4, 0);
    let random_point = |rng: &mut rand_chacha::ChaCha8Rng| {
        let bits: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        BitVec::from_bools(&bits)
    };
    let center = random_point(&mut rng);
    let mut seen = HashSet::new();
    let mut points = Vec::with_capacity(k);
    while points.len() < k {
        let p = match radius {
            Some(r) => {
                let w = rng.gen_range(0..=r.min(n));
                let flips = sample_indices(&mut rng, n, w).into_vec();
                center.xor(&BitVec::from_indices(n, &flips))
            }
            None => random_point(&mut rng),
        };
        if seen.insert(p.clone()) {
            points.push(p);
        }
    }
    let raw: Vec<f64> = match profile {
        WeightProfile::Uniform => vec![1.0; k],
        WeightProfile::Geometric => (0..k).map(|i| 0.5f64.powi(i as i32)).collect(),
        WeightProfile::Dirichlet => (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect(),
    };
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    fix_sum(&mut weights);
    Ok(PopulationFile {
        mu: None,
        dist: SparseDistribution::new(points, weights)?,
    })
}

/// The grid swept by [`run_bench`].
#[derive(Clone, Debug)]
pub struct BenchGrid {
    pub n: usize,
    pub mus: Vec<f64>,
    pub ks: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub repetitions: usize,
    /// Support points are drawn within this distance of a random center.
    pub radius: usize,
    pub profile: WeightProfile,
    pub seed: u64,
    /// Cells whose per-point budget exceeds this are marked and skipped.
    pub max_samples: usize,
    pub base: RecoveryConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub mu: f64,
    pub k: usize,
    pub epsilon: f64,
    pub repetition: usize,
    pub n: usize,
    pub r: usize,
    pub downset_size: usize,
    /// Largest per-point inner-product budget.
    pub samples_per_point: usize,
    pub total_samples: usize,
    pub ell_l1: f64,
    /// `ln` of the norm certificate for `l`.
    pub ell_log_bound: f64,
    pub ell_within_bound: bool,
    pub ell_zero_l1: f64,
    /// `k 2^r`.
    pub ell_zero_bound: f64,
    pub ell_zero_within_bound: bool,
    /// `max_i |estimate_i - f(x_i)|`, empty when not run.
    pub max_abs_error: Option<f64>,
    pub status: String,
}

/// Sweeps `mus x ks x epsilons x repetitions`, one row per cell and repetition.
pub fn run_bench(grid: &BenchGrid) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for &mu_value in &grid.mus {
        let mu = NoiseRate::new(mu_value)?;
        for &k in &grid.ks {
            for &epsilon in &grid.epsilons {
                for rep in 0..grid.repetitions {
                    let seed = substream(grid.seed, cell);
                    cell += 1;
                    rows.push(bench_cell(grid, mu, k, epsilon, rep, seed));
                }
            }
        }
    }
    Ok(rows)
}

fn bench_cell(grid: &BenchGrid, mu: NoiseRate, k: usize, epsilon: f64, rep: usize, seed: u64) -> BenchRow {
    let mut row = BenchRow {
        mu: mu.get(),
        k,
        epsilon,
        repetition: rep,
        n: grid.n,
        r: 0,
        downset_size: 0,
        samples_per_point: 0,
        total_samples: 0,
        ell_l1: f64::NAN,
        ell_log_bound: f64::NAN,
        ell_within_bound: false,
        ell_zero_l1: f64::NAN,
        ell_zero_bound: f64::NAN,
        ell_zero_within_bound: false,
        max_abs_error: None,
        status: String::new(),
    };
    match bench_cell_inner(grid, mu, k, epsilon, seed, &mut row) {
        Ok(status) => row.status = status,
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

fn bench_cell_inner(
    grid: &BenchGrid,
    mu: NoiseRate,
    k: usize,
    epsilon: f64,
    seed: u64,
    row: &mut BenchRow,
) -> Result<String> {
    let pop = generate_population(grid.n, k, grid.profile, seed, Some(grid.radius))?;
    let support = pop.dist.points().to_vec();
    let cfg = RecoveryConfig {
        epsilon,
        seed,
        sample_cap: Some(grid.max_samples),
        ..grid.base.clone()
    };
    let mut worst: Option<f64> = None;
    row.ell_within_bound = true;
    row.ell_zero_within_bound = true;
    for target in &support {
        let plan = plan_point(&support, target, mu, &cfg)?;
        let l1 = plan.ell.l1_norm();
        let log_bound = log_ell_norm_bound(plan.ell.k, plan.ell.delta, plan.ell.eta, plan.ell.r);
        let zero = build_ell_zero(plan.ell.downset());
        let zero_bound = plan.ell.k as f64 * 2f64.powi(plan.ell.r as i32);
        let budget = inner_product_budget(mu, &plan.ell, epsilon / 16.0, cfg.kappa / 2.0)?;
        row.samples_per_point = row.samples_per_point.max(budget.samples);
        if worst.is_none_or(|w| l1 > w) {
            worst = Some(l1);
            row.ell_l1 = l1;
            row.ell_log_bound = log_bound;
            row.ell_zero_l1 = zero.l1_norm();
            row.ell_zero_bound = zero_bound;
            row.r = plan.params.r;
        }
        row.ell_within_bound &= l1.ln() <= log_bound + 1e-9;
        row.ell_zero_within_bound &= zero.l1_norm() <= zero_bound + 1e-9;
        row.downset_size = row.downset_size.max(plan.ell.downset().len());
    }
    if row.samples_per_point > grid.max_samples {
        return Ok(format!("skipped: budget {} > max {}", row.samples_per_point, grid.max_samples));
    }
    let source = LiveSource::new(pop.dist.clone(), mu, seed);
    let report = recover_distribution(&source, &support, &cfg)?;
    row.total_samples = report
        .points
        .iter()
        .map(|p| p.inner_product_samples + p.upsilon_samples)
        .sum();
    let err = report
        .points
        .iter()
        .zip(pop.dist.weights())
        .filter_map(|(p, w)| p.estimate.map(|e| (e - w).abs()))
        .fold(0.0f64, f64::max);
    row.max_abs_error = Some(err);
    Ok(if report.failures == 0 {
        "ok".to_string()
    } else {
        format!("{} point failures", report.failures)
    })
}

/// Writes bench rows as CSV with a header.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_round_trip() {
        let pop = generate_population(10, 5, WeightProfile::Dirichlet, 7, None).unwrap();
        let mut buf = Vec::new();
        pop.write_to(&mut buf).unwrap();
        let back = PopulationFile::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.dist.points(), pop.dist.points());
        for (a, b) in back.dist.weights().iter().zip(pop.dist.weights()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn generation_examples() {
        let single = generate_population(6, 1, WeightProfile::Geometric, 1, None).unwrap();
        assert_eq!(single.dist.weights(), &[1.0]);
        let uniform = generate_population(6, 4, WeightProfile::Uniform, 1, None).unwrap();
        assert!(uniform.dist.weights().iter().all(|w| *w == 0.25));
        assert_eq!(
            generate_population(8, 3, WeightProfile::Dirichlet, 99, None).unwrap(),
            generate_population(8, 3, WeightProfile::Dirichlet, 99, None).unwrap()
        );
        assert!(generate_population(2, 5, WeightProfile::Uniform, 1, None).is_err());
        assert_eq!(generate_population(2, 4, WeightProfile::Uniform, 1, None).unwrap().dist.k(), 4);
        let near = generate_population(12, 4, WeightProfile::Uniform, 3, Some(1)).unwrap();
        let pts = near.dist.points();
        for a in pts {
            for b in pts {
                assert!(a.distance(b) <= 2);
            }
        }
        assert!(generate_population(4, 6, WeightProfile::Uniform, 1, Some(1)).is_err());
        assert_eq!("geometric".parse::<WeightProfile>().unwrap(), WeightProfile::Geometric);
        assert!("zipf".parse::<WeightProfile>().is_err());
    }

    #[test]
    fn population_file_validation() {
        assert!(PopulationFile::read_from("n=3 k=2\n010 0.5\n110 0.4\n".as_bytes()).is_err());
        assert!(PopulationFile::read_from("n=3 k=2\n010 0.5\n010 0.5\n".as_bytes()).is_err());
        assert!(PopulationFile::read_from("n=3 k=1\n0101 1\n".as_bytes()).is_err());
        assert!(PopulationFile::read_from("n=3 k=2\n010 0.5\n".as_bytes()).is_err());
        let ok = PopulationFile::read_from("n=3 k=2 mu=0.5\n010 0.5000000001\n110 0.5\n".as_bytes()).unwrap();
        assert_eq!(ok.mu, Some(0.5));
        assert!((ok.dist.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
