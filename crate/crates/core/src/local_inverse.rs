//! The binomial noise matrix `A_{delta,r}` and its robust local inverse.
//!
//! `A(i, j) = C(i, j) delta^j (1 - delta)^(i - j)` is the law of
//! `Binomial(i, delta)`, so `(A v)_i = E[v_{Bin(i, delta)}]`. A local inverse
//! is a `v` with `(A v)_0 = 1` and `|(A v)_i| <= eps` for `i >= 1`, found by
//! minimizing `||w||_inf` under `||A w - e_0||_inf <= eps0` and rescaling.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, SimplexOptions};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseMatrix {
    delta: f64,
    r: usize,
    entries: Vec<Vec<f64>>,
}

impl NoiseMatrix {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Number of rows and columns, `r + 1`.
    pub fn size(&self) -> usize {
        self.r + 1
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.size() {
            return Err(Error::LengthMismatch {
                expected: self.size(),
                found: v.len(),
            });
        }
        Ok(self
            .entries
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, x)| a * x).sum())
            .collect())
    }

    /// `||A v - e_0||_inf`.
    pub fn residual(&self, v: &[f64]) -> Result<f64> {
        let av = self.apply(v)?;
        Ok(av
            .iter()
            .enumerate()
            .map(|(i, x)| (x - if i == 0 { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max))
    }
}

/// Builds `A_{delta,r}` row by row with the recurrence
/// `A(i, j) = (1 - delta) A(i-1, j) + delta A(i-1, j-1)`.
pub fn build_noise_matrix(delta: f64, r: usize) -> Result<NoiseMatrix> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta must lie in (0, 1), got {delta}")));
    }
    let mut entries = vec![vec![0.0; r + 1]; r + 1];
    entries[0][0] = 1.0;
    for i in 1..=r {
        for j in 0..=i {
            let stay = (1.0 - delta) * entries[i - 1][j];
            let step = if j > 0 { delta * entries[i - 1][j - 1] } else { 0.0 };
            entries[i][j] = stay + step;
        }
    }
    Ok(NoiseMatrix { delta, r, entries })
}

/// Result of the local-inverse computation.
#[derive(Clone, Debug, Serialize)]
pub struct LocalInverse {
    /// Normalized vector with `(A v)_0 = 1`.
    pub v: Vec<f64>,
    /// LP solution before normalization.
    pub w: Vec<f64>,
    /// `(A w)_0`.
    pub alpha0: f64,
    /// The final guarantee `max_{i>=1} |(A v)_i| <= epsilon`.
    pub epsilon: f64,
    /// `||A v - e_0||_inf`.
    pub residual: f64,
    /// `||v||_inf`.
    pub sensitivity: f64,
}

impl LocalInverse {
    pub fn r(&self) -> usize {
        self.v.len() - 1
    }
}

/// Natural log of the sensitivity bound `(2/eps)^((2/delta) ln(1/delta))`.
pub fn log_sensitivity_bound(delta: f64, eps: f64) -> f64 {
    (2.0 / delta) * (1.0 / delta).ln() * (2.0 / eps).ln()
}

/// `M = diag(delta^i) A^{-1}`, i.e. `M(i, j) = C(i, j) (delta - 1)^{i-j}`.
fn scaled_inverse(delta: f64, r: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; r + 1]; r + 1];
    m[0][0] = 1.0;
    for i in 1..=r {
        for j in 0..=i {
            let stay = if j < i { (delta - 1.0) * m[i - 1][j] } else { 0.0 };
            let step = if j > 0 { m[i - 1][j - 1] } else { 0.0 };
            m[i][j] = stay + step;
        }
    }
    m
}

/// The LP in the original coordinates: `w = u - t` with `u, t >= 0` turns
/// `|w_i| <= t` into `u_i <= 2t`, and since rows of `A` sum to one,
/// `(A w)_i = (A u)_i - t`.
fn solve_direct(a: &NoiseMatrix, eps: f64) -> Result<Vec<f64>> {
    let d = a.size();
    let t = d;
    let mut rows = Vec::with_capacity(3 * d);
    let mut rhs = Vec::with_capacity(3 * d);
    for i in 0..d {
        let mut row = vec![0.0; d + 1];
        row[i] = 1.0;
        row[t] = -2.0;
        rows.push(row);
        rhs.push(0.0);
    }
    for i in 0..d {
        let target = if i == 0 { 1.0 } else { 0.0 };
        let rowsum: f64 = a.entries[i].iter().sum();
        let mut upper = a.entries[i].clone();
        upper.push(-rowsum);
        let lower: Vec<f64> = upper.iter().map(|x| -x).collect();
        rows.push(upper);
        rhs.push(target + eps);
        rows.push(lower);
        rhs.push(eps - target);
    }
    let mut c = vec![0.0; d + 1];
    c[t] = 1.0;
    let sol = lp::solve(&LinearProgram { c, a: rows, b: rhs }, SimplexOptions::default())?;
    let tval = sol.x[t];
    Ok(sol.x[..d].iter().map(|u| u - tval).collect())
}

/// Solves `min ||w||_inf  s.t.  ||A w - e_0||_inf <= eps` by simplex.
///
/// Large `delta` is well conditioned in the original coordinates and small
/// `delta` in residual coordinates, so both are solved and the smaller valid
/// solution is kept.
pub fn solve_min_infnorm(a: &NoiseMatrix, eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param(format!("epsilon must lie in (0, 1), got {eps}")));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut last_err = None;
    for attempt in [solve_direct(a, eps), solve_residual_coordinates(a, eps)] {
        let checked = attempt.and_then(|w| {
            let res = a.residual(&w)?;
            if res > eps + residual_slack(&w) {
                return Err(Error::Lp(format!("solution residual {res:.3e} exceeds epsilon {eps}")));
            }
            Ok(w)
        });
        match checked {
            Ok(w) => {
                let norm = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                if best.as_ref().is_none_or(|(b, _)| norm < *b) {
                    best = Some((norm, w));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((_, w)) => Ok(w),
        None => Err(last_err.expect("at least one attempt failed")),
    }
}

/// The LP in residual coordinates. It runs in the residual coordinates `p = A w`, which stay `O(1)` while
/// `w` itself can reach `delta^{-r}`. With `p = lo + q`, `0 <= q <= 2 eps` and
/// `tau = delta^r ||w||_inf`, each `|w_i| <= t` becomes the pair of rows
/// `+-delta^{r-i} (M p)_i <= tau`. Then `w_i = delta^{-i} (M p)_i`.
fn solve_residual_coordinates(a: &NoiseMatrix, eps: f64) -> Result<Vec<f64>> {
    let d = a.size();
    let r = a.r;
    let delta = a.delta;
    let m = scaled_inverse(delta, r);
    let lo: Vec<f64> = (0..d).map(|i| if i == 0 { 1.0 - eps } else { -eps }).collect();
    let tau = d;
    let mut rows = Vec::with_capacity(3 * d);
    let mut rhs = Vec::with_capacity(3 * d);
    for i in 0..d {
        let mut row = vec![0.0; d + 1];
        row[i] = 1.0;
        rows.push(row);
        rhs.push(2.0 * eps);
    }
    for i in 0..d {
        let scale = delta.powi((r - i) as i32);
        let offset: f64 = (0..=i).map(|j| m[i][j] * lo[j]).sum::<f64>() * scale;
        let mut upper: Vec<f64> = (0..d).map(|j| if j <= i { m[i][j] * scale } else { 0.0 }).collect();
        upper.push(-1.0);
        let mut lower: Vec<f64> = upper[..d].iter().map(|x| -x).collect();
        lower.push(-1.0);
        rows.push(upper);
        rhs.push(-offset);
        rows.push(lower);
        rhs.push(offset);
    }
    let mut c = vec![0.0; d + 1];
    c[tau] = 1.0;
    let program = LinearProgram { c, a: rows, b: rhs };
    let sol = lp::solve(&program, SimplexOptions::default())?;
    let p: Vec<f64> = (0..d).map(|j| lo[j] + sol.x[j].clamp(0.0, 2.0 * eps)).collect();
    let w: Vec<f64> = (0..d)
        .map(|i| (0..=i).map(|j| m[i][j] * p[j]).sum::<f64>() / delta.powi(i as i32))
        .collect();
    Ok(w)
}

/// Forward rounding bound for `A w` when rows of `A` are nonnegative and sum to one.
pub(crate) fn residual_slack(w: &[f64]) -> f64 {
    let wmax = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    2.0 * (w.len() + 1) as f64 * f64::EPSILON * (1.0 + wmax)
}

/// Rescales an LP solution solved at `eps / (1 + eps)` so that `(A v)_0 = 1`
/// and every other coordinate of `A v` is at most `eps` in magnitude, then
/// checks the sensitivity bound.
pub fn normalize_zeroth(w: &[f64], a: &NoiseMatrix, eps: f64) -> Result<LocalInverse> {
    let aw = a.apply(w)?;
    let alpha0 = aw[0];
    if alpha0.abs() < 1e-12 {
        return Err(Error::DegenerateNormalization(alpha0));
    }
    let v: Vec<f64> = w.iter().map(|x| x / alpha0).collect();
    let av = a.apply(&v)?;
    let off = av[1..].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if off > eps + residual_slack(&v) {
        return Err(Error::Lp(format!(
            "normalized off-diagonal residual {off:.3e} exceeds epsilon {eps}"
        )));
    }
    let residual = a.residual(&v)?;
    let sensitivity = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if sensitivity.ln() > log_sensitivity_bound(a.delta, eps) + 1e-9 {
        return Err(Error::Lp(format!(
            "sensitivity {sensitivity:.3e} exceeds the local-inverse bound"
        )));
    }
    Ok(LocalInverse {
        v,
        w: w.to_vec(),
        alpha0,
        epsilon: eps,
        residual,
        sensitivity,
    })
}

/// Relative amount by which the LP target is tightened to absorb rounding in `w`.
pub const SOLVE_MARGIN: f64 = 1e-3;

/// Solves at `eps0 = (1 - SOLVE_MARGIN) eps / (1 + eps)` and normalizes to the guarantee `eps`.
pub fn robust_local_inverse(a: &NoiseMatrix, eps: f64) -> Result<LocalInverse> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param(format!("epsilon must lie in (0, 1), got {eps}")));
    }
    let eps0 = eps / (1.0 + eps) * (1.0 - SOLVE_MARGIN);
    let w = solve_min_infnorm(a, eps0)?;
    normalize_zeroth(&w, a, eps)
}

/// Dumps one row per index: `i, w_i, v_i, (A v)_i`, then the matrix rows.
pub fn write_debug_csv<W: Write>(a: &NoiseMatrix, inv: &LocalInverse, out: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let av = a.apply(&inv.v)?;
    wtr.write_record(["i", "w", "v", "av"])?;
    for i in 0..a.size() {
        wtr.write_record(&[
            i.to_string(),
            inv.w[i].to_string(),
            inv.v[i].to_string(),
            av[i].to_string(),
        ])?;
    }
    let mut header = vec!["row".to_string()];
    header.extend((0..a.size()).map(|j| format!("a{j}")));
    wtr.write_record(&header)?;
    for (i, row) in a.entries.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|x| x.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
