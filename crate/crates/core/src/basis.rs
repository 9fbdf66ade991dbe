//! AND monomials, attenuated ANDs, and the test functions built from them.
//!
//! Functions here are expanded over a downset `C↓` in one of two bases:
//! monomials `AND_z(x) = 1[z ⊆ x]` or characters `chi_S`. Since
//! `AND_w = 2^{-|w|} sum_{T ⊆ w} (-1)^{|T|} chi_T`, a monomial expansion over a
//! downset has its character support inside the same downset.

use std::io::Write;
use std::ops::{Add, Neg};
use std::sync::Arc;

use num_traits::{One, Zero};

use crate::bits::{chi_unchecked, BitVec};
use crate::downset::{generate_downset, Downset};
use crate::error::{Error, Result};
use crate::local_inverse::{build_noise_matrix, residual_slack, robust_local_inverse, LocalInverse, NoiseMatrix};

/// Anything that can be evaluated pointwise.
pub trait Evaluate {
    fn eval(&self, x: &BitVec) -> f64;
}

/// Coefficients of `AND_z` for each member `z` of a downset.
#[derive(Clone, Debug)]
pub struct MonomialExpansion {
    pub ds: Arc<Downset>,
    pub coeffs: Vec<f64>,
}

/// Coefficients `l_S` of `chi_S` for each member `S` of a downset.
#[derive(Clone, Debug)]
pub struct CharacterExpansion {
    pub ds: Arc<Downset>,
    pub coeffs: Vec<f64>,
    /// `sum_S |l_S|`.
    pub l1_norm: f64,
    /// Largest `|S|` with a nonzero coefficient.
    pub max_degree: usize,
}

impl MonomialExpansion {
    pub fn zeros(ds: Arc<Downset>) -> Self {
        let coeffs = vec![0.0; ds.len()];
        MonomialExpansion { ds, coeffs }
    }

    pub fn new(ds: Arc<Downset>, coeffs: Vec<f64>) -> Result<Self> {
        ds.check_len(coeffs.len())?;
        Ok(MonomialExpansion { ds, coeffs })
    }

    /// Value at a member `y`: sums coefficients over the submasks of `y`.
    pub fn eval_member(&self, y: &BitVec) -> Result<f64> {
        if !self.ds.contains(y) {
            return Err(Error::NotAMember(y.to_string()));
        }
        Ok(y.submasks()
            .map(|w| self.coeffs[self.ds.index_of(&w).expect("downset is closed")])
            .sum())
    }
}

impl Evaluate for MonomialExpansion {
    fn eval(&self, x: &BitVec) -> f64 {
        self.ds
            .members()
            .iter()
            .zip(&self.coeffs)
            .filter(|(z, _)| z.is_subset_of(x))
            .map(|(_, c)| c)
            .sum()
    }
}

impl CharacterExpansion {
    pub fn new(ds: Arc<Downset>, coeffs: Vec<f64>) -> Result<Self> {
        ds.check_len(coeffs.len())?;
        let l1_norm = coeffs.iter().map(|c| c.abs()).sum();
        let max_degree = ds
            .members()
            .iter()
            .zip(&coeffs)
            .filter(|(_, c)| **c != 0.0)
            .map(|(s, _)| s.weight())
            .max()
            .unwrap_or(0);
        Ok(CharacterExpansion {
            ds,
            coeffs,
            l1_norm,
            max_degree,
        })
    }

    /// Nonzero terms `(S, l_S)`, in downset order.
    pub fn support(&self) -> impl Iterator<Item = (&BitVec, f64)> {
        self.ds
            .members()
            .iter()
            .zip(self.coeffs.iter().copied())
            .filter(|(_, c)| *c != 0.0)
    }

    pub fn support_size(&self) -> usize {
        self.coeffs.iter().filter(|c| **c != 0.0).count()
    }
}

impl Evaluate for CharacterExpansion {
    fn eval(&self, x: &BitVec) -> f64 {
        self.support()
            .map(|(s, c)| c * f64::from(chi_unchecked(s, x)))
            .sum()
    }
}

/// `AND_z = 2^{-|z|} sum_{T ⊆ z} (-1)^{|T|} chi_T`, over the downset `z↓`.
pub fn and_character_expansion(z: &BitVec) -> CharacterExpansion {
    let ds = Arc::new(generate_downset(std::slice::from_ref(z)).expect("one generator"));
    let scale = 0.5f64.powi(z.weight() as i32);
    let coeffs = ds
        .members()
        .iter()
        .map(|t| if t.weight() % 2 == 0 { scale } else { -scale })
        .collect();
    CharacterExpansion::new(ds, coeffs).expect("lengths match")
}

/// The attenuated AND: coefficient `(-delta)^{|w \ z|}` on every member `w ⊇ z`.
///
/// On a member `y` this evaluates to `1[y ⊇ z] (1 - delta)^{|y| - |z|}`, since
/// every `w` between `z` and `y` is itself a member.
pub fn build_and_delta(ds: &Arc<Downset>, delta: f64, z: &BitVec) -> Result<MonomialExpansion> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::param(format!("delta must lie in [0, 1], got {delta}")));
    }
    let zi = ds.index_of(z).ok_or_else(|| Error::NotAMember(z.to_string()))?;
    let mut out = MonomialExpansion::zeros(ds.clone());
    let wz = z.weight();
    for j in ds.supersets_of(zi) {
        out.coeffs[j] = (-delta).powi((ds.members()[j].weight() - wz) as i32);
    }
    Ok(out)
}

/// Substitutes each `AND_w` by its character expansion:
/// `l_S = (-1)^{|S|} sum_{w ⊇ S} c_w 2^{-|w|}`.
pub fn to_character(m: &MonomialExpansion) -> CharacterExpansion {
    let ds = &m.ds;
    let scaled: Vec<f64> = ds
        .members()
        .iter()
        .zip(&m.coeffs)
        .map(|(w, c)| c * 0.5f64.powi(w.weight() as i32))
        .collect();
    let coeffs = (0..ds.len())
        .map(|i| {
            let sum: f64 = ds.supersets_of(i).map(|j| scaled[j]).sum();
            if ds.members()[i].weight() % 2 == 0 {
                sum
            } else {
                -sum
            }
        })
        .collect();
    CharacterExpansion::new(ds.clone(), coeffs).expect("lengths match")
}

/// A test function in both bases together with its construction parameters.
#[derive(Clone, Debug)]
pub struct EllFunction {
    pub delta: f64,
    pub eta: f64,
    /// Largest member weight of the downset.
    pub r: usize,
    /// Number of generators of the downset.
    pub k: usize,
    /// `None` for the exact interpolant.
    pub local_inverse: Option<LocalInverse>,
    pub monomial: MonomialExpansion,
    pub character: CharacterExpansion,
}

impl Evaluate for EllFunction {
    fn eval(&self, x: &BitVec) -> f64 {
        self.character.eval(x)
    }
}

impl EllFunction {
    pub fn downset(&self) -> &Arc<Downset> {
        &self.monomial.ds
    }

    /// `||l^||_{L1}`.
    pub fn l1_norm(&self) -> f64 {
        self.character.l1_norm
    }

    /// Writes `mask, weight, monomial, character` rows.
    pub fn write_coefficients_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["mask", "weight", "monomial", "character"])?;
        for (i, m) in self.downset().members().iter().enumerate() {
            wtr.write_record(&[
                m.to_string(),
                m.weight().to_string(),
                self.monomial.coeffs[i].to_string(),
                self.character.coeffs[i].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Natural log of `k^2 (1 + 2 delta)^r (2/eta)^{delta^{-1} ln(2/delta)}`.
pub fn log_ell_norm_bound(k: usize, delta: f64, eta: f64, r: usize) -> f64 {
    2.0 * (k as f64).ln() + r as f64 * (2.0 * delta).ln_1p() + (2.0 / delta).ln() / delta * (2.0 / eta).ln()
}

/// Monomial coefficient of `l` at weight `m`:
/// `delta^m sum_t C(m, t) (-1)^{m-t} v_t`.
fn ell_level_coefficients(v: &[f64], delta: f64) -> Vec<f64> {
    let r = v.len() - 1;
    let mut binom = vec![1.0f64];
    let mut out = Vec::with_capacity(r + 1);
    for m in 0..=r {
        if m > 0 {
            let mut next = vec![1.0; m + 1];
            for t in 1..m {
                next[t] = binom[t - 1] + binom[t];
            }
            binom = next;
        }
        let alt: f64 = (0..=m)
            .map(|t| {
                let s = if (m - t) % 2 == 0 { 1.0 } else { -1.0 };
                s * binom[t] * v[t]
            })
            .sum();
        out.push(delta.powi(m as i32) * alt);
    }
    out
}

/// Builds `l = sum_{z} v_{|z|} delta^{|z|} AND_{delta,z}` from a local inverse of
/// `A_{delta,r}` at accuracy `eta`, and checks `l(0) = 1`, `|l| <= eta` on the
/// rest of the downset, and the norm certificate.
pub fn build_ell(ds: &Arc<Downset>, delta: f64, eta: f64) -> Result<EllFunction> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::param(format!("eta must lie in (0, 1), got {eta}")));
    }
    let r = ds.max_weight();
    let a = build_noise_matrix(delta, r)?;
    let inv = robust_local_inverse(&a, eta)?;
    let level = ell_level_coefficients(&inv.v, delta);
    let coeffs = ds.members().iter().map(|w| level[w.weight()]).collect();
    let monomial = MonomialExpansion::new(ds.clone(), coeffs)?;
    let character = to_character(&monomial);
    let ell = EllFunction {
        delta,
        eta,
        r,
        k: ds.k(),
        local_inverse: Some(inv),
        monomial,
        character,
    };
    check_ell(&ell, &a)?;
    Ok(ell)
}

fn check_ell(ell: &EllFunction, a: &NoiseMatrix) -> Result<()> {
    let inv = ell.local_inverse.as_ref().expect("checked functions carry a local inverse");
    let av = a.apply(&inv.v)?;
    let coeff_mass: f64 = ell.monomial.coeffs.iter().map(|c| c.abs()).sum();
    let terms = (ell.downset().len() + inv.v.len()) as f64;
    let tol = ell.eta * (1.0 + 1e-6) + residual_slack(&inv.v) + 2.0 * terms * f64::EPSILON * coeff_mass;
    for y in ell.downset().members() {
        let value = ell.monomial.eval_member(y)?;
        let expected = av[y.weight()];
        if (value - expected).abs() > 1e-8 {
            return Err(Error::EllBoundViolated(format!(
                "l({y}) = {value} but (A v)_{} = {expected}",
                y.weight()
            )));
        }
        if y.is_zero() {
            if (value - 1.0).abs() > 1e-9 {
                return Err(Error::EllBoundViolated(format!("l(0) = {value}")));
            }
        } else if value.abs() > tol {
            return Err(Error::EllBoundViolated(format!("|l({y})| = {} > eta", value.abs())));
        }
    }
    let bound = log_ell_norm_bound(ell.k, ell.delta, ell.eta, ell.r);
    if ell.l1_norm() > 0.0 && ell.l1_norm().ln() > bound + 1e-9 {
        return Err(Error::EllBoundViolated(format!(
            "||l^||_1 = {:.3e} exceeds the certificate",
            ell.l1_norm()
        )));
    }
    Ok(())
}

/// Monomial coefficients `(-1)^{|z|}` of the exact interpolant, in any ring.
pub fn ell_zero_coefficients<T: One + Neg<Output = T>>(ds: &Downset) -> Vec<T> {
    ds.members()
        .iter()
        .map(|z| if z.weight() % 2 == 0 { T::one() } else { -T::one() })
        .collect()
}

/// Evaluates a monomial expansion at a member `y`, in any ring.
pub fn eval_monomial_exact<T: Clone + Zero + Add<Output = T>>(
    ds: &Downset,
    coeffs: &[T],
    y: &BitVec,
) -> Result<T> {
    ds.check_len(coeffs.len())?;
    if !ds.contains(y) {
        return Err(Error::NotAMember(y.to_string()));
    }
    Ok(y.submasks().fold(T::zero(), |acc, w| {
        acc + coeffs[ds.index_of(&w).expect("downset is closed")].clone()
    }))
}

/// `l0 = sum_{z} (-1)^{|z|} AND_z`: one at the origin and zero on the rest of the downset.
pub fn build_ell_zero(ds: &Arc<Downset>) -> EllFunction {
    let monomial = MonomialExpansion::new(ds.clone(), ell_zero_coefficients(ds)).expect("lengths match");
    let character = to_character(&monomial);
    EllFunction {
        delta: 0.0,
        eta: 0.0,
        r: ds.max_weight(),
        k: ds.k(),
        local_inverse: None,
        monomial,
        character,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn bv(s: &str) -> BitVec {
        s.parse().unwrap()
    }

    fn ds_of(gens: &[&str]) -> Arc<Downset> {
        Arc::new(generate_downset(&gens.iter().map(|g| bv(g)).collect::<Vec<_>>()).unwrap())
    }

    #[test]
    fn and_expansion_examples() {
        let empty = and_character_expansion(&bv("000"));
        assert_eq!(empty.coeffs, vec![1.0]);
        let one = and_character_expansion(&bv("100"));
        assert_eq!(one.coeffs, vec![0.5, -0.5]);
        assert_eq!(one.eval(&bv("100")), 1.0);
        assert_eq!(one.eval(&bv("011")), 0.0);
        for z in ["1101", "1111", "0010"] {
            let e = and_character_expansion(&bv(z));
            assert!((e.l1_norm - 1.0).abs() < 1e-15);
            for x in 0..16u64 {
                let x = BitVec::from_u64(4, x);
                let expected = if bv(z).is_subset_of(&x) { 1.0 } else { 0.0 };
                assert!((e.eval(&x) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn and_delta_values_on_downset() {
        let ds = ds_of(&["11010", "01101", "10001"]);
        for delta in [0.0, 0.2, 0.7] {
            for z in ds.members() {
                let m = build_and_delta(&ds, delta, z).unwrap();
                for y in ds.members() {
                    let expected = if z.is_subset_of(y) {
                        (1.0 - delta).powi((y.weight() - z.weight()) as i32)
                    } else {
                        0.0
                    };
                    assert!((m.eval_member(y).unwrap() - expected).abs() < 1e-10);
                    assert!((m.eval(y) - expected).abs() < 1e-10);
                }
                let ch = to_character(&m);
                let bound = ds.k() as f64 * (1.0 + delta).powi((ds.max_weight() - z.weight()) as i32);
                assert!(ch.l1_norm <= bound + 1e-12);
            }
        }
        assert!(build_and_delta(&ds, 0.2, &bv("11111")).is_err());
    }

    #[test]
    fn to_character_constant() {
        let ds = ds_of(&["000"]);
        let m = MonomialExpansion::new(ds, vec![1.0]).unwrap();
        let c = to_character(&m);
        assert_eq!(c.coeffs, vec![1.0]);
        assert_eq!(c.max_degree, 0);
        let zero = MonomialExpansion::zeros(ds_of(&["110"]));
        assert_eq!(zero.eval(&bv("110")), 0.0);
        assert_eq!(to_character(&zero).eval(&bv("111")), 0.0);
    }

    #[test]
    fn ell_on_origin_downset_is_constant() {
        let ell = build_ell(&ds_of(&["0000"]), 0.3, 0.1).unwrap();
        assert_eq!(ell.r, 0);
        assert!((ell.eval(&bv("1011")) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ell_two_paths_agree() {
        let ds = ds_of(&["1110100", "0111011", "1000110"]);
        let ell = build_ell(&ds, 0.25, 0.05).unwrap();
        let inv = ell.local_inverse.as_ref().unwrap();
        let av = build_noise_matrix(0.25, ell.r).unwrap().apply(&inv.v).unwrap();
        for y in ds.members() {
            assert!((ell.monomial.eval_member(y).unwrap() - av[y.weight()]).abs() < 1e-8);
            assert!((ell.character.eval(y) - av[y.weight()]).abs() < 1e-8);
        }
        assert!((ell.eval(&BitVec::zeros(7)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ell_closed_form_matches_literal_accumulation() {
        let ds = ds_of(&["110110", "011001", "001111"]);
        let (delta, eta) = (0.2, 0.1);
        let ell = build_ell(&ds, delta, eta).unwrap();
        let v = &ell.local_inverse.as_ref().unwrap().v;
        let mut acc = vec![0.0; ds.len()];
        for z in ds.members() {
            let scale = v[z.weight()] * delta.powi(z.weight() as i32);
            let m = build_and_delta(&ds, delta, z).unwrap();
            for (a, c) in acc.iter_mut().zip(&m.coeffs) {
                *a += scale * c;
            }
        }
        for (a, b) in acc.iter().zip(&ell.monomial.coeffs) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn ell_zero_examples() {
        let ds = ds_of(&["10"]);
        let l0 = build_ell_zero(&ds);
        assert_eq!(l0.monomial.coeffs, vec![1.0, -1.0]);
        assert_eq!(l0.eval(&bv("00")), 1.0);
        assert_eq!(l0.eval(&bv("10")), 0.0);

        let ds = ds_of(&["111000", "001110", "100011"]);
        let coeffs: Vec<Ratio<i64>> = ell_zero_coefficients(&ds);
        for y in ds.members() {
            let value = eval_monomial_exact(&ds, &coeffs, y).unwrap();
            let expected = if y.is_zero() { Ratio::from_integer(1) } else { Ratio::from_integer(0) };
            assert_eq!(value, expected);
        }
        let l0 = build_ell_zero(&ds);
        assert!(l0.l1_norm() <= ds.len() as f64 + 1e-12);
        assert!(l0.l1_norm() <= (3 << 3) as f64);
    }

    #[test]
    fn coefficient_dump() {
        let ds = ds_of(&["11"]);
        let ell = build_ell(&ds, 0.3, 0.1).unwrap();
        let mut buf = Vec::new();
        ell.write_coefficients_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }
}
