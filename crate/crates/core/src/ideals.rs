//! Integral ideals of ℤ[α] as HNF lattices, and the prime factorization of αO.

use std::sync::RwLock;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, hnf, reduce_mod_hnf, solve_upper, IMat};
use crate::numberfield::{FieldDescriptor, OrderElement, XFraction};
use crate::poly::{self, fp_factor, fp_gcd, fp_reduce, small_primes, FpPoly};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdealError {
    #[error("all generators are zero")]
    ZeroIdeal,
    #[error("Z[alpha] is not maximal at p = {0} (Dedekind criterion fails)")]
    NotMaximalAtP(i64),
    #[error("product of prime norms {got} does not match d = {expected}")]
    FactorizationMismatch { expected: i128, got: i128 },
    #[error("valuation of zero is undefined")]
    ZeroElement,
}

/// An ideal given by the row HNF of its coordinate lattice.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct IdealHNF {
    pub basis: IMat,
}

impl IdealHNF {
    pub fn unit(n: usize) -> Self {
        Self { basis: linalg::identity(n) }
    }

    /// Index in the order.
    pub fn norm(&self) -> i128 {
        (0..self.basis.len()).map(|i| self.basis[i][i]).product()
    }

    pub fn contains(&self, a: &OrderElement) -> bool {
        solve_upper(&a.coords, &self.basis).is_some()
    }

    pub fn reduce(&self, a: &[i128]) -> Vec<i128> {
        reduce_mod_hnf(a, &self.basis)
    }
}

pub fn ideal_from_generators(
    field: &FieldDescriptor,
    gens: &[OrderElement],
) -> Result<IdealHNF, IdealError> {
    let n = field.degree();
    let mut rows = Vec::with_capacity(gens.len() * n);
    for g in gens {
        let mut cur = g.clone();
        for _ in 0..n {
            rows.push(cur.coords.clone());
            cur = field.mul_alpha(&cur);
        }
    }
    let h = hnf(&rows);
    if h.len() < n {
        return Err(IdealError::ZeroIdeal);
    }
    Ok(IdealHNF { basis: h })
}

pub fn ideal_mul(field: &FieldDescriptor, i: &IdealHNF, j: &IdealHNF) -> IdealHNF {
    let mut rows = Vec::with_capacity(i.basis.len() * j.basis.len());
    for a in &i.basis {
        for b in &j.basis {
            let p = field
                .oe_mul(&OrderElement::new(a.clone()), &OrderElement::new(b.clone()))
                .expect("dimensions agree");
            rows.push(p.coords);
        }
    }
    IdealHNF { basis: hnf(&rows) }
}

pub fn ideal_pow(field: &FieldDescriptor, i: &IdealHNF, e: u32) -> IdealHNF {
    (0..e).fold(IdealHNF::unit(field.degree()), |acc, _| ideal_mul(field, &acc, i))
}

pub fn contains(i: &IdealHNF, a: &OrderElement) -> bool {
    i.contains(a)
}

/// A prime 𝔭 = (p, g(α)) dividing αO.
#[derive(Debug, Serialize)]
pub struct PrimeFactor {
    pub p: i64,
    pub gpoly: Vec<i128>,
    pub e: u32,
    pub f: u32,
    pub k: u32,
    pub ideal: IdealHNF,
    #[serde(skip)]
    ladder: RwLock<Vec<IdealHNF>>,
}

impl Clone for PrimeFactor {
    fn clone(&self) -> Self {
        Self {
            p: self.p,
            gpoly: self.gpoly.clone(),
            e: self.e,
            f: self.f,
            k: self.k,
            ideal: self.ideal.clone(),
            ladder: RwLock::new(self.ladder.read().unwrap().clone()),
        }
    }
}

impl PrimeFactor {
    fn new(p: i64, gpoly: Vec<i128>, e: u32, ideal: IdealHNF) -> Self {
        let f = (gpoly.len() - 1) as u32;
        let n = ideal.basis.len();
        Self { p, gpoly, e, f, k: 0, ideal, ladder: RwLock::new(vec![IdealHNF::unit(n)]) }
    }

    pub fn norm(&self) -> i128 {
        self.ideal.norm()
    }

    /// 𝔭^t from a cached power ladder.
    pub fn power(&self, field: &FieldDescriptor, t: u32) -> IdealHNF {
        {
            let l = self.ladder.read().unwrap();
            if let Some(p) = l.get(t as usize) {
                return p.clone();
            }
        }
        let mut l = self.ladder.write().unwrap();
        while l.len() <= t as usize {
            let next = ideal_mul(field, l.last().unwrap(), &self.ideal);
            l.push(next);
        }
        l[t as usize].clone()
    }

    /// v_𝔭(a) for a nonzero order element.
    pub fn valuation_order(&self, field: &FieldDescriptor, a: &OrderElement) -> Result<u32, IdealError> {
        if a.is_zero() {
            return Err(IdealError::ZeroElement);
        }
        // f·v_𝔭(a) ≤ v_p(N(a)) bounds the search
        let mut norm = field.norm(a);
        let mut bound = 0u32;
        while norm % self.p as i128 == 0 {
            norm /= self.p as i128;
            bound += 1;
        }
        let bound = bound / self.f;
        let mut t = 0;
        while t < bound && self.power(field, t + 1).contains(a) {
            t += 1;
        }
        Ok(t)
    }
}

/// v_𝔭(a/α^ℓ) = v_𝔭(a) − ℓ·v_𝔭(α).
pub fn prime_valuation(
    field: &FieldDescriptor,
    b: &XFraction,
    prime: &PrimeFactor,
) -> Result<i64, IdealError> {
    let v = prime.valuation_order(field, &b.numer)? as i64;
    Ok(v - b.denom_exp as i64 * prime.k as i64)
}

fn lift(g: &FpPoly) -> Vec<i128> {
    g.iter().map(|c| *c as i128).collect()
}

fn eval_at_alpha(field: &FieldDescriptor, g: &[i128]) -> OrderElement {
    let n = field.degree();
    let mut acc = OrderElement::zero(n);
    for c in g.iter().rev() {
        acc = field.mul_alpha(&acc).add(&OrderElement::constant(n, *c));
    }
    acc
}

/// Dedekind's criterion: ℤ[α] is p-maximal iff gcd(F̄, Ḡ, H̄) = 1 where
/// m ≡ G·H mod p with G the radical and F = (G·H − m)/p.
pub fn is_p_maximal(field: &FieldDescriptor, p: i64) -> bool {
    let m = field.min_poly();
    let factors = fp_factor(&fp_reduce(&m, p), p);
    let mut g: Vec<i128> = vec![1];
    let mut h: Vec<i128> = vec![1];
    for (fac, e) in &factors {
        let l = lift(fac);
        g = poly::z_mul(&g, &l);
        for _ in 1..*e {
            h = poly::z_mul(&h, &l);
        }
    }
    let gh = poly::z_mul(&g, &h);
    let diff = poly::z_sub(&gh, &m);
    debug_assert!(diff.iter().all(|c| c % p as i128 == 0));
    let fpoly: Vec<i128> = diff.iter().map(|c| c / p as i128).collect();
    let fbar = fp_reduce(&fpoly, p);
    let gbar = fp_reduce(&g, p);
    let hbar = fp_reduce(&h, p);
    let gcd1 = fp_gcd(&gbar, &hbar, p);
    let gcd = if fbar.is_empty() { gcd1 } else { fp_gcd(&gcd1, &fbar, p) };
    gcd.len() == 1
}

/// Factor αO = ∏ 𝔭ᵢ^{kᵢ} over the primes dividing d.
pub fn factor_x(field: &FieldDescriptor) -> Result<Vec<PrimeFactor>, IdealError> {
    let d = field.d();
    let m = field.min_poly();
    let primes: Vec<i64> = small_primes(d as i64 + 1)
        .into_iter()
        .filter(|p| d % *p as i128 == 0)
        .collect();
    let mut out = Vec::new();
    for p in primes {
        if !is_p_maximal(field, p) {
            return Err(IdealError::NotMaximalAtP(p));
        }
        for (g, e) in fp_factor(&fp_reduce(&m, p), p) {
            let gl = lift(&g);
            let ideal = ideal_from_generators(
                field,
                &[OrderElement::constant(field.degree(), p as i128), eval_at_alpha(field, &gl)],
            )?;
            let mut prime = PrimeFactor::new(p, gl, e, ideal);
            prime.k = prime.valuation_order(field, &field.alpha())?;
            if prime.k > 0 {
                out.push(prime);
            }
        }
    }
    let prod: i128 = out.iter().map(|pr| pr.norm().pow(pr.k)).product();
    if prod != d {
        return Err(IdealError::FactorizationMismatch { expected: d, got: prod });
    }
    Ok(out)
}

/// Representatives of L/L′ for full-rank lattices L′ ⊆ L given by HNF bases.
pub fn quotient_reps(outer: &IMat, inner: &IMat) -> Vec<Vec<i128>> {
    let n = outer.len();
    // inner = C·outer with C integral
    let oq = linalg::to_rational(outer);
    let inv = linalg::q_inverse(&oq).expect("full rank");
    let c = linalg::q_mat_mul(&linalg::to_rational(inner), &inv);
    let c = linalg::to_integer(&c).expect("inner lattice is contained in outer");
    let hc = hnf(&c);
    let mut reps = vec![vec![0i128; n]];
    for i in 0..n {
        let mut next = Vec::with_capacity(reps.len() * hc[i][i] as usize);
        for r in &reps {
            for t in 0..hc[i][i] {
                let mut y = r.clone();
                y[i] = t;
                next.push(y);
            }
        }
        reps = next;
    }
    reps.iter().map(|y| linalg::vec_mat(y, outer)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numberfield::define_field;

    #[test]
    fn alpha_ideal_has_norm_d() {
        let f = define_field(&[-6, 0]).unwrap();
        let i = ideal_from_generators(&f, &[f.alpha()]).unwrap();
        assert_eq!(i.norm(), 6);
        let unit = ideal_from_generators(&f, &[OrderElement::constant(2, 1)]).unwrap();
        assert_eq!(unit, IdealHNF::unit(2));
    }

    #[test]
    fn x2_minus_6_primes() {
        let f = define_field(&[-6, 0]).unwrap();
        let ps = factor_x(&f).unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!((ps[0].p, ps[0].k, ps[0].e, ps[0].f), (2, 1, 2, 1));
        assert_eq!((ps[1].p, ps[1].k, ps[1].e, ps[1].f), (3, 1, 2, 1));
        let prod = ideal_mul(&f, &ps[0].ideal, &ps[1].ideal);
        assert_eq!(prod, ideal_from_generators(&f, &[f.alpha()]).unwrap());
    }

    #[test]
    fn quotient_rep_count() {
        let outer = vec![vec![1, 0], vec![0, 1]];
        let inner = vec![vec![2, 1], vec![0, 3]];
        assert_eq!(quotient_reps(&outer, &inner).len(), 6);
    }
}
