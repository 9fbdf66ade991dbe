//! A small dense two-phase simplex for `min c.x  s.t.  A x <= b, x >= 0`.
//!
//! Bland's rule picks both the entering column (lowest index with negative
//! reduced cost) and the leaving row (lowest basic index among ratio ties), so
//! the method cannot cycle. Sizes here are a few hundred rows at most.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivot elements and reduced costs below this magnitude are treated as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-10;
/// Largest negative reduced cost accepted when certifying optimality.
pub const DUAL_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct LinearProgram {
    /// Objective coefficients, one per structural variable.
    pub c: Vec<f64>,
    /// Constraint rows, each of length `c.len()`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Most negative reduced cost at termination (zero when none is negative).
    pub dual_infeasibility: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Re-solve the final basis by LU factorization of the original columns.
    pub refine: bool,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_iterations: 100_000,
            refine: true,
        }
    }
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major, `rows + 1` rows of `cols + 1` entries; the last row is the objective,
    /// the last column the right-hand side.
    t: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.cols + 1) + j]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.t[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.at(pr, pc);
        for j in 0..w {
            *self.at_mut(pr, j) /= p;
        }
        let pivot_row: Vec<f64> = self.t[pr * w..(pr + 1) * w].to_vec();
        for i in 0..=self.rows {
            if i == pr {
                continue;
            }
            let factor = self.at(i, pc);
            if factor == 0.0 {
                continue;
            }
            let row = &mut self.t[i * w..(i + 1) * w];
            for (x, &pv) in row.iter_mut().zip(&pivot_row) {
                *x -= factor * pv;
            }
            row[pc] = 0.0;
        }
        self.basis[pr] = pc;
        self.iterations += 1;
    }

    /// Loads `cost` into the objective row as reduced costs for the current basis.
    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.cols + 1;
        let obj = self.rows * w;
        for j in 0..w {
            self.t[obj + j] = if j < self.cols { cost[j] } else { 0.0 };
        }
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            for j in 0..w {
                self.t[obj + j] -= cb * self.t[i * w + j];
            }
        }
    }

    /// Runs Bland-rule pivots over the columns allowed by `eligible`.
    fn optimize(&mut self, eligible: &dyn Fn(usize) -> bool, budget: usize) -> Result<()> {
        loop {
            if self.iterations >= budget {
                return Err(Error::Lp(format!("iteration budget {budget} exhausted")));
            }
            let entering = (0..self.cols)
                .find(|&j| eligible(j) && self.at(self.rows, j) < -PIVOT_TOLERANCE);
            let Some(pc) = entering else {
                return Ok(());
            };
            let mut best: Option<(f64, usize)> = None;
            for i in 0..self.rows {
                let a = self.at(i, pc);
                if a > PIVOT_TOLERANCE {
                    let ratio = self.rhs(i) / a;
                    best = match best {
                        None => Some((ratio, i)),
                        Some((r, bi)) => {
                            if ratio < r - PIVOT_TOLERANCE
                                || (ratio <= r + PIVOT_TOLERANCE && self.basis[i] < self.basis[bi])
                            {
                                Some((ratio, i))
                            } else {
                                Some((r, bi))
                            }
                        }
                    };
                }
            }
            match best {
                Some((_, pr)) => self.pivot(pr, pc),
                None => return Err(Error::Lp("objective is unbounded below".into())),
            }
        }
    }
}

/// Solves `min c.x` subject to `A x <= b` and `x >= 0`.
pub fn solve(lp: &LinearProgram, opts: SimplexOptions) -> Result<LpSolution> {
    let nv = lp.c.len();
    let m = lp.a.len();
    if lp.b.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            found: lp.b.len(),
        });
    }
    if let Some(row) = lp.a.iter().find(|row| row.len() != nv) {
        return Err(Error::LengthMismatch {
            expected: nv,
            found: row.len(),
        });
    }

    // Columns: structural, one slack per row, one artificial per negative-rhs row.
    let negative: Vec<usize> = (0..m).filter(|&i| lp.b[i] < 0.0).collect();
    let n_art = negative.len();
    let slack0 = nv;
    let art0 = nv + m;
    let cols = nv + m + n_art;
    let mut tab = Tableau {
        rows: m,
        cols,
        t: vec![0.0; (m + 1) * (cols + 1)],
        basis: vec![0; m],
        iterations: 0,
    };
    let mut art_of_row = vec![None; m];
    for (a, &i) in negative.iter().enumerate() {
        art_of_row[i] = Some(art0 + a);
    }
    for i in 0..m {
        let sign = if lp.b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nv {
            *tab.at_mut(i, j) = sign * lp.a[i][j];
        }
        *tab.at_mut(i, slack0 + i) = sign;
        *tab.at_mut(i, cols) = sign * lp.b[i];
        match art_of_row[i] {
            Some(a) => {
                *tab.at_mut(i, a) = 1.0;
                tab.basis[i] = a;
            }
            None => tab.basis[i] = slack0 + i,
        }
    }

    let budget = opts.max_iterations;
    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        for c in phase1.iter_mut().skip(art0) {
            *c = 1.0;
        }
        tab.set_objective(&phase1);
        tab.optimize(&|_| true, budget)?;
        let infeasibility = -tab.at(m, cols);
        if infeasibility > 1e-9 * (1.0 + lp.b.iter().fold(0.0f64, |a, b| a.max(b.abs()))) {
            return Err(Error::Lp(format!("infeasible (phase-one residual {infeasibility:.3e})")));
        }
        // Drive artificials out of the basis where a structural or slack pivot exists.
        for i in 0..m {
            if tab.basis[i] >= art0 {
                if let Some(pc) = (0..art0).find(|&j| tab.at(i, j).abs() > PIVOT_TOLERANCE) {
                    tab.pivot(i, pc);
                }
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..nv].copy_from_slice(&lp.c);
    tab.set_objective(&cost);
    tab.optimize(&|j| j < art0, budget)?;

    let dual_infeasibility = (0..art0)
        .map(|j| tab.at(m, j))
        .fold(0.0f64, f64::min);
    if dual_infeasibility < -DUAL_TOLERANCE {
        return Err(Error::Lp(format!(
            "optimality not certified: reduced cost {dual_infeasibility:.3e}"
        )));
    }

    let mut full = vec![0.0; cols];
    for i in 0..m {
        full[tab.basis[i]] = tab.rhs(i);
    }
    if opts.refine {
        if let Some(refined) = refine_basis(lp, &tab.basis, art0) {
            if refined.iter().all(|v| *v >= -1e-9) {
                full = refined;
            }
        }
    }
    let x: Vec<f64> = full[..nv].iter().map(|v| v.max(0.0)).collect();
    let objective = lp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
    Ok(LpSolution {
        x,
        objective,
        iterations: tab.iterations,
        dual_infeasibility,
    })
}

/// Recomputes the basic variables from the original data with partial-pivot LU.
fn refine_basis(lp: &LinearProgram, basis: &[usize], art0: usize) -> Option<Vec<f64>> {
    let m = lp.a.len();
    let nv = lp.c.len();
    if basis.iter().any(|&j| j >= art0) {
        return None;
    }
    let b_mat = DMatrix::from_fn(m, m, |i, k| {
        let j = basis[k];
        if j < nv {
            lp.a[i][j]
        } else if j - nv == i {
            1.0
        } else {
            0.0
        }
    });
    let rhs = DVector::from_column_slice(&lp.b);
    let sol = b_mat.lu().solve(&rhs)?;
    let mut full = vec![0.0; art0];
    for (k, &j) in basis.iter().enumerate() {
        full[j] = sol[k];
    }
    Some(full)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(c: &[f64], a: &[&[f64]], b: &[f64]) -> LinearProgram {
        LinearProgram {
            c: c.to_vec(),
            a: a.iter().map(|r| r.to_vec()).collect(),
            b: b.to_vec(),
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), value 36.
        let p = lp(&[-3.0, -5.0], &[&[1.0, 0.0], &[0.0, 2.0], &[3.0, 2.0]], &[4.0, 12.0, 18.0]);
        let s = solve(&p, SimplexOptions::default()).unwrap();
        assert!((s.objective + 36.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn phase_one_with_lower_bounds() {
        // min x + y, x + y >= 2, x - y <= 1  -> value 2.
        let p = lp(&[1.0, 1.0], &[&[-1.0, -1.0], &[1.0, -1.0]], &[-2.0, 1.0]);
        let s = solve(&p, SimplexOptions::default()).unwrap();
        assert!((s.objective - 2.0).abs() < 1e-12);
        assert!(s.x[0] + s.x[1] >= 2.0 - 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let infeasible = lp(&[1.0], &[&[1.0], &[-1.0]], &[1.0, -2.0]);
        assert!(matches!(solve(&infeasible, SimplexOptions::default()), Err(Error::Lp(_))));
        let unbounded = lp(&[-1.0, 0.0], &[&[-1.0, 1.0]], &[1.0]);
        assert!(matches!(solve(&unbounded, SimplexOptions::default()), Err(Error::Lp(_))));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // A classic cycling example for Dantzig's rule; Bland's rule must finish.
        let p = lp(
            &[-0.75, 150.0, -0.02, 6.0],
            &[
                &[0.25, -60.0, -0.04, 9.0],
                &[0.5, -90.0, -0.02, 3.0],
                &[0.0, 0.0, 1.0, 0.0],
            ],
            &[0.0, 0.0, 1.0],
        );
        let s = solve(&p, SimplexOptions::default()).unwrap();
        assert!((s.objective + 0.05).abs() < 1e-9, "{}", s.objective);
    }

    #[test]
    fn refinement_does_not_change_optimum() {
        let p = lp(&[-1.0, -2.0], &[&[1.0, 1.0], &[1.0, 3.0]], &[4.0, 6.0]);
        let plain = solve(&p, SimplexOptions { refine: false, ..Default::default() }).unwrap();
        let refined = solve(&p, SimplexOptions::default()).unwrap();
        assert!((plain.objective - refined.objective).abs() < 1e-12);
        assert!((refined.objective + 5.0).abs() < 1e-12);
    }
}
