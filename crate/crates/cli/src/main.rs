use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use poprec::harness::{generate_population, run_bench, write_bench_csv, BenchGrid, PopulationFile, WeightProfile};
use poprec::recovery::{recover_distribution, required_samples, RecoveryConfig, DEFAULT_MAX_R};
use poprec::source::{LiveSource, RecordedSamples, SampleSource};
use poprec::verify::{run_verification, Fault, VerifySpec};
use poprec::{BitVec, NoiseRate, NoisySampler};

const RECOVER_COLUMNS: &str = "\
CSV columns (one row per support point):
  target, estimate, inner_product, upsilon, inner_product_samples, upsilon_samples,
  ell_l1_norm, downset_size, r, r_uncapped, delta, eta, far_points, far_threshold,
  audit_bound, error

Exit status: 0 success, 1 some point failed (Upsilon abort, LP failure), 2 input error.";

const BENCH_COLUMNS: &str = "\
CSV columns (one row per grid cell and repetition):
  mu, k, epsilon, repetition, n, r, downset_size, samples_per_point, total_samples,
  ell_l1, ell_log_bound (natural log of the norm certificate), ell_within_bound,
  ell_zero_l1, ell_zero_bound (k 2^r), ell_zero_within_bound, max_abs_error, status";

#[derive(Parser)]
#[command(name = "poprec", version, about = "Recover sparse distributions on {0,1}^n from noisy samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random planted population file.
    Gen(GenArgs),
    /// Emit noisy samples from a population file.
    Sample(SampleArgs),
    /// Estimate the weight of every support point.
    #[command(after_help = RECOVER_COLUMNS)]
    Recover(RecoverArgs),
    /// Sweep a parameter grid and write a CSV of budgets, norms and errors.
    #[command(after_help = BENCH_COLUMNS)]
    Bench(BenchArgs),
    /// Cross-check every computation against the brute-force oracles.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Uniform,
    Geometric,
    Dirichlet,
}

impl From<Profile> for WeightProfile {
    fn from(p: Profile) -> Self {
        match p {
            Profile::Uniform => WeightProfile::Uniform,
            Profile::Geometric => WeightProfile::Geometric,
            Profile::Dirichlet => WeightProfile::Dirichlet,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    profile: Profile,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep all points within this Hamming distance of a random center.
    #[arg(long)]
    radius: Option<usize>,
    /// Record a noise rate in the header.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    population: PathBuf,
    /// Noise rate; defaults to the population header's `mu`.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

/// Recovery parameters shared by `recover` and `bench`.
#[derive(Args, Clone)]
struct Tuning {
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    kappa: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_R)]
    max_r: usize,
    /// Fix r instead of using the parameter rule.
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = poprec::filter::DEFAULT_FAR_CONSTANT)]
    far_constant: f64,
}

impl Tuning {
    fn config(&self) -> RecoveryConfig {
        RecoveryConfig {
            epsilon: self.epsilon,
            kappa: self.kappa,
            delta_override: self.delta,
            eta_override: self.eta,
            r_override: self.r,
            far_constant: self.far_constant,
            max_r: self.max_r,
            seed: self.seed,
            workers: self.workers.max(1),
            ..RecoveryConfig::default()
        }
    }
}

#[derive(Args)]
struct RecoverArgs {
    /// Population file; its points are the known support.
    #[arg(long, conflicts_with = "support")]
    population: Option<PathBuf>,
    /// Support file: one bit string per line (a trailing weight column is ignored).
    #[arg(long)]
    support: Option<PathBuf>,
    /// Recorded sample file.
    #[arg(long, conflicts_with = "live")]
    samples: Option<PathBuf>,
    /// Draw fresh samples from the population file (needs --population).
    #[arg(long)]
    live: bool,
    /// Noise rate for --live; defaults to the population header's `mu`.
    #[arg(long)]
    mu: Option<f64>,
    /// Seed of the live sampler.
    #[arg(long, default_value_t = 0)]
    sample_seed: u64,
    /// Also report estimates projected onto the simplex.
    #[arg(long)]
    normalize: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 12)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.9")]
    mus: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    ks: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.2")]
    epsilons: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    #[arg(long, default_value_t = 3)]
    radius: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    profile: Profile,
    /// Cells needing more samples per point than this are skipped.
    #[arg(long, default_value_t = 20_000_000)]
    max_samples: usize,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 14)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0.6)]
    mu: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Deliberately break one component to confirm the suite notices.
    #[arg(long, value_parser = parse_fault)]
    inject_fault: Option<Fault>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    s.parse().map_err(|e: poprec::Error| e.to_string())
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_population(path: &Path) -> anyhow::Result<PopulationFile> {
    PopulationFile::read_from(open(path)?).with_context(|| format!("bad population file {}", path.display()))
}

fn read_support(path: &Path) -> anyhow::Result<Vec<BitVec>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let Some(bits) = line.split_whitespace().next() else {
            continue;
        };
        if bits.contains('=') {
            continue;
        }
        let p: BitVec = bits
            .parse()
            .with_context(|| format!("{}:{}: bad bit string", path.display(), i + 1))?;
        points.push(p);
    }
    if points.is_empty() {
        bail!("support file {} lists no points", path.display());
    }
    Ok(points)
}

fn noise_rate(flag: Option<f64>, header: Option<f64>) -> anyhow::Result<NoiseRate> {
    let mu = flag.or(header).context("no noise rate: pass --mu")?;
    Ok(NoiseRate::new(mu)?)
}

fn cmd_gen(a: GenArgs) -> anyhow::Result<u8> {
    let mut pop = generate_population(a.n, a.k, a.profile.into(), a.seed, a.radius)?;
    if let Some(mu) = a.mu {
        NoiseRate::new(mu)?;
        pop.mu = Some(mu);
    }
    pop.write_to(sink(a.output.as_deref())?)?;
    Ok(0)
}

fn cmd_sample(a: SampleArgs) -> anyhow::Result<u8> {
    let pop = read_population(&a.population)?;
    let mu = noise_rate(a.mu, pop.mu)?;
    let mut sampler = NoisySampler::new(Arc::new(pop.dist), mu, a.seed);
    RecordedSamples::record(&mut sampler, a.count).write_to(sink(a.output.as_deref())?)?;
    Ok(0)
}

fn cmd_recover(a: RecoverArgs) -> anyhow::Result<u8> {
    let population = a.population.as_deref().map(read_population).transpose()?;
    let support = match (&population, &a.support) {
        (Some(pop), _) => pop.dist.points().to_vec(),
        (None, Some(path)) => read_support(path)?,
        (None, None) => bail!("pass --population or --support"),
    };
    let mut cfg = a.tuning.config();
    cfg.normalize = a.normalize;

    let source: Box<dyn SampleSource> = match (&a.samples, a.live) {
        (Some(path), _) => {
            let rec = RecordedSamples::read_from(open(path)?)
                .with_context(|| format!("bad sample file {}", path.display()))?;
            let required = required_samples(&support, rec.mu(), &cfg)?;
            if rec.len() < required {
                bail!(
                    "sample file {} holds {} samples but the budget requires M = {required}",
                    path.display(),
                    rec.len()
                );
            }
            Box::new(rec)
        }
        (None, true) => {
            let pop = population.as_ref().context("--live needs --population")?;
            let mu = noise_rate(a.mu, pop.mu)?;
            Box::new(LiveSource::new(pop.dist.clone(), mu, a.sample_seed))
        }
        (None, false) => bail!("pass --samples FILE or --live"),
    };
    if support.iter().any(|p| p.dim() != source.dim()) {
        bail!("support dimension does not match the samples (n = {})", source.dim());
    }

    let report = recover_distribution(source.as_ref(), &support, &cfg)?;
    let out = sink(a.output.as_deref())?;
    match a.format {
        Format::Json => report.write_json(out)?,
        Format::Csv => report.write_csv(out)?,
    }
    for p in report.points.iter().filter(|p| p.error.is_some()) {
        eprintln!("point {} failed: {}", p.target, p.error.as_deref().unwrap_or(""));
    }
    Ok(if report.failures == 0 { 0 } else { 1 })
}

fn cmd_bench(a: BenchArgs) -> anyhow::Result<u8> {
    let base = a.tuning.config();
    let grid = BenchGrid {
        n: a.n,
        mus: a.mus,
        ks: a.ks,
        epsilons: a.epsilons,
        repetitions: a.repetitions,
        radius: a.radius,
        profile: a.profile.into(),
        seed: base.seed,
        max_samples: a.max_samples,
        base,
    };
    let rows = run_bench(&grid)?;
    write_bench_csv(&rows, sink(a.output.as_deref())?)?;
    Ok(0)
}

fn cmd_verify(a: VerifyArgs) -> anyhow::Result<u8> {
    let spec = VerifySpec {
        n: a.n,
        k: a.k,
        mu: a.mu,
        seed: a.seed,
        fault: a.inject_fault,
    };
    let report = run_verification(&spec)?;
    let mut out = sink(None)?;
    match a.format {
        Some(Format::Json) => {
            serde_json::to_writer_pretty(&mut out, &report)?;
            writeln!(out)?;
        }
        Some(Format::Csv) => {
            writeln!(out, "check,passed,detail")?;
            for c in &report.checks {
                writeln!(out, "{},{},\"{}\"", c.name, c.passed, c.detail.replace('"', "'"))?;
            }
        }
        None => {
            for c in &report.checks {
                writeln!(out, "{} {:<24} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            }
        }
    }
    out.flush()?;
    Ok(if report.passed() { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Recover(a) => cmd_recover(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
