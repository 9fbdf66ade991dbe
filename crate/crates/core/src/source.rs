//! Where noisy samples come from: a live channel or a recorded file.

use std::io::{BufRead, Write};
use std::ops::Range;
use std::sync::Arc;

use crate::bits::{BitVec, SparseDistribution};
use crate::error::{Error, Result};
use crate::noise::{NoiseRate, NoisySampler};

/// A supply of samples from `T_mu f`, addressable by shard.
///
/// `visit` must be deterministic in `(stream, worker, range)`, so that a fixed
/// worker count reproduces the same estimate.
pub trait SampleSource: Sync {
    fn dim(&self) -> usize;
    fn mu(&self) -> NoiseRate;
    /// Number of samples available, or `None` for an unbounded source.
    fn available(&self) -> Option<usize>;
    /// Feeds the samples of `range` to `f`.
    fn visit(&self, stream: u64, worker: usize, range: Range<usize>, f: &mut dyn FnMut(&BitVec));

    /// Errors unless `required` samples can be provided.
    fn ensure(&self, required: usize) -> Result<()> {
        match self.available() {
            Some(available) if available < required => {
                Err(Error::InsufficientSamples { required, available })
            }
            _ => Ok(()),
        }
    }
}

/// Fresh draws from the channel; each `(stream, worker)` pair is its own RNG stream.
#[derive(Clone, Debug)]
pub struct LiveSource {
    dist: Arc<SparseDistribution>,
    mu: NoiseRate,
    seed: u64,
}

impl LiveSource {
    pub fn new(dist: SparseDistribution, mu: NoiseRate, seed: u64) -> Self {
        LiveSource {
            dist: Arc::new(dist),
            mu,
            seed,
        }
    }

    pub fn distribution(&self) -> &SparseDistribution {
        &self.dist
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sampler(&self, stream: u64, worker: usize) -> NoisySampler {
        NoisySampler::with_stream(self.dist.clone(), self.mu, self.seed, stream, worker)
    }
}

impl SampleSource for LiveSource {
    fn dim(&self) -> usize {
        self.dist.dim()
    }

    fn mu(&self) -> NoiseRate {
        self.mu
    }

    fn available(&self) -> Option<usize> {
        None
    }

    fn visit(&self, stream: u64, worker: usize, range: Range<usize>, f: &mut dyn FnMut(&BitVec)) {
        let mut sampler = self.sampler(stream, worker);
        for _ in range {
            f(&sampler.draw());
        }
    }
}

/// A finite list of samples, typically loaded from a sample file.
///
/// Every stream sees the same list; `visit` hands out the requested slice.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordedSamples {
    n: usize,
    mu: NoiseRate,
    seed: u64,
    samples: Vec<BitVec>,
}

impl RecordedSamples {
    pub fn new(n: usize, mu: NoiseRate, seed: u64, samples: Vec<BitVec>) -> Result<Self> {
        for s in &samples {
            if s.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: s.dim(),
                });
            }
        }
        Ok(RecordedSamples { n, mu, seed, samples })
    }

    /// Draws `count` samples from one stream of `sampler`.
    pub fn record(sampler: &mut NoisySampler, count: usize) -> Self {
        let samples = (0..count).map(|_| sampler.draw()).collect();
        RecordedSamples {
            n: sampler.dim(),
            mu: sampler.mu(),
            seed: sampler.seed(),
            samples,
        }
    }

    pub fn samples(&self) -> &[BitVec] {
        &self.samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Writes the header line `n=<n> mu=<mu> seed=<seed> count=<m>` and one bit string per line.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "n={} mu={} seed={} count={}",
            self.n,
            self.mu.get(),
            self.seed,
            self.samples.len()
        )?;
        for s in &self.samples {
            writeln!(out, "{s}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "missing header line"))?;
        let header = header?;
        let fields = parse_header(&header, 1, &["n", "mu", "seed", "count"])?;
        let n: usize = parse_field(&fields[0], 1, "n")?;
        let mu = NoiseRate::new(parse_field(&fields[1], 1, "mu")?)
            .map_err(|e| Error::parse(1, e.to_string()))?;
        let seed: u64 = parse_field(&fields[2], 1, "seed")?;
        let count: usize = parse_field(&fields[3], 1, "count")?;

        let mut samples = Vec::with_capacity(count);
        for (idx, line) in lines {
            let line = line?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            let bits: BitVec = text.parse().map_err(|e: Error| Error::parse(idx + 1, e.to_string()))?;
            if bits.dim() != n {
                return Err(Error::parse(
                    idx + 1,
                    format!("expected {n} bits, found {}", bits.dim()),
                ));
            }
            samples.push(bits);
        }
        if samples.len() != count {
            return Err(Error::parse(
                1,
                format!("header declares {count} samples, file has {}", samples.len()),
            ));
        }
        Ok(RecordedSamples { n, mu, seed, samples })
    }
}

impl SampleSource for RecordedSamples {
    fn dim(&self) -> usize {
        self.n
    }

    fn mu(&self) -> NoiseRate {
        self.mu
    }

    fn available(&self) -> Option<usize> {
        Some(self.samples.len())
    }

    fn visit(&self, _stream: u64, _worker: usize, range: Range<usize>, f: &mut dyn FnMut(&BitVec)) {
        for s in &self.samples[range] {
            f(s);
        }
    }
}

/// `inner` with every sample XORed by `offset`: samples of `T_mu` of the translated distribution.
pub struct Translated<'a, S: SampleSource + ?Sized> {
    inner: &'a S,
    offset: BitVec,
}

impl<'a, S: SampleSource + ?Sized> Translated<'a, S> {
    pub fn new(inner: &'a S, offset: BitVec) -> Result<Self> {
        if offset.dim() != inner.dim() {
            return Err(Error::DimensionMismatch {
                expected: inner.dim(),
                found: offset.dim(),
            });
        }
        Ok(Translated { inner, offset })
    }
}

impl<S: SampleSource + ?Sized> SampleSource for Translated<'_, S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn mu(&self) -> NoiseRate {
        self.inner.mu()
    }

    fn available(&self) -> Option<usize> {
        self.inner.available()
    }

    fn visit(&self, stream: u64, worker: usize, range: Range<usize>, f: &mut dyn FnMut(&BitVec)) {
        self.inner.visit(stream, worker, range, &mut |x| f(&x.xor(&self.offset)));
    }
}

/// Splits a `key=value` header into the values of `keys`, in order; all are required.
pub(crate) fn parse_header(line: &str, line_no: usize, keys: &[&str]) -> Result<Vec<String>> {
    parse_header_optional(line, line_no, keys)?
        .into_iter()
        .zip(keys)
        .map(|(v, k)| v.ok_or_else(|| Error::parse(line_no, format!("header is missing `{k}`"))))
        .collect()
}

/// As [`parse_header`], leaving absent keys as `None`.
pub(crate) fn parse_header_optional(line: &str, line_no: usize, keys: &[&str]) -> Result<Vec<Option<String>>> {
    let mut values = vec![None; keys.len()];
    for token in line.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| Error::parse(line_no, format!("header token `{token}` is not key=value")))?;
        match keys.iter().position(|k| *k == key) {
            Some(i) => values[i] = Some(value.to_string()),
            None => return Err(Error::parse(line_no, format!("unknown header key `{key}`"))),
        }
    }
    Ok(values)
}

pub(crate) fn parse_field<T: std::str::FromStr>(value: &str, line_no: usize, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| Error::parse(line_no, format!("bad value for `{key}`: {e}")))
}
