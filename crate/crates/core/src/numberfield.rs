//! Arithmetic in K = ℚ[x]/m(x), the order ℤ[α], the ring ℤ[α][1/α] and the
//! affine group Γ = ℤ[α][1/α]⁺ ⋊ ℤ acting through multiplication by α.
//!
//! Coordinates are row vectors with respect to 1, α, …, α^{n−1}. Multiplication
//! by α sends a coordinate row `v` to `v · A` where `A` is the companion matrix.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    self, det, hnf, mat_mul, q_inverse, q_mat_mul, q_reduce_mod_hnf, q_vec_mat, to_integer,
    to_rational, IMat, QMat, Q,
};
use crate::poly::is_irreducible_over_q;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("polynomial with coefficients {0:?} is reducible over Q")]
    NotIrreducible(Vec<i128>),
    #[error("constant coefficient {0} has absolute value at most 1")]
    DeterminantTooSmall(i128),
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("element is not in canonical form (numerator divisible by alpha with positive exponent)")]
    NonCanonicalInput,
    #[error("coordinates {0:?} do not lie in Z[alpha][1/alpha]")]
    NotInRing(Vec<String>),
    #[error("source matrix must be square with |det| > 1")]
    BadSourceMatrix,
    #[error("conjugating matrix is singular")]
    SingularConjugator,
}

/// An element of the order ℤ[α] in the power basis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OrderElement {
    pub coords: Vec<i128>,
}

impl OrderElement {
    pub fn new(coords: Vec<i128>) -> Self {
        Self { coords }
    }

    pub fn zero(n: usize) -> Self {
        Self { coords: vec![0; n] }
    }

    pub fn constant(n: usize, c: i128) -> Self {
        let mut coords = vec![0; n];
        coords[0] = c;
        Self { coords }
    }

    pub fn basis(n: usize, i: usize) -> Self {
        let mut coords = vec![0; n];
        coords[i] = 1;
        Self { coords }
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| *c == 0)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(self.coords.iter().zip(&other.coords).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect())
    }

    pub fn neg(&self) -> Self {
        Self::new(self.coords.iter().map(|a| -a).collect())
    }

    pub fn scale(&self, c: i128) -> Self {
        Self::new(self.coords.iter().map(|a| a * c).collect())
    }
}

/// An element a/α^ℓ of ℤ[α][1/α]. Canonical when ℓ = 0 or α ∤ a; zero is
/// stored with ℓ = 0.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct XFraction {
    pub numer: OrderElement,
    pub denom_exp: u32,
}

/// A group element (b, k) acting by w ↦ w·A^k + b.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GammaElement {
    pub b: XFraction,
    pub k: i64,
}

pub struct FieldDescriptor {
    coeffs: Vec<i128>,
    n: usize,
    d: i128,
    companion: IMat,
    adjugate: IMat,
    det_a: i128,
    powers: RwLock<HashMap<i64, Arc<QMat>>>,
    coset_lattices: RwLock<HashMap<i64, Arc<QMat>>>,
}

impl fmt::Debug for FieldDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldDescriptor")
            .field("coeffs", &self.coeffs)
            .field("n", &self.n)
            .field("d", &self.d)
            .finish()
    }
}

impl Clone for FieldDescriptor {
    fn clone(&self) -> Self {
        define_field(&self.coeffs).expect("descriptor was already validated")
    }
}

/// Companion matrix in the row convention: row i holds the coordinates of α^{i+1}.
pub fn companion_matrix(coeffs: &[i128]) -> IMat {
    let n = coeffs.len();
    let mut a = vec![vec![0i128; n]; n];
    for i in 0..n - 1 {
        a[i][i + 1] = 1;
    }
    for j in 0..n {
        a[n - 1][j] = -coeffs[j];
    }
    a
}

/// Validate m(x) = x^n + a_{n−1}x^{n−1} + … + a_0 and build its descriptor.
pub fn define_field(coeffs: &[i128]) -> Result<FieldDescriptor, FieldError> {
    if coeffs.is_empty() {
        return Err(FieldError::DeterminantTooSmall(0));
    }
    let mut full = coeffs.to_vec();
    full.push(1);
    if coeffs[0].abs() <= 1 {
        // ±x, x itself is irreducible but has no interesting quotient; the unit
        // case is likewise rejected. Report the reducible case first.
        if coeffs[0] == 0 && coeffs.len() > 1 {
            return Err(FieldError::NotIrreducible(full));
        }
        return Err(FieldError::DeterminantTooSmall(coeffs[0]));
    }
    if !is_irreducible_over_q(&full) {
        return Err(FieldError::NotIrreducible(full));
    }
    let n = coeffs.len();
    let companion = companion_matrix(coeffs);
    let det_a = det(&companion);
    let adjugate = adjugate(&companion);
    Ok(FieldDescriptor {
        coeffs: coeffs.to_vec(),
        n,
        d: coeffs[0].abs(),
        companion,
        adjugate,
        det_a,
        powers: RwLock::new(HashMap::new()),
        coset_lattices: RwLock::new(HashMap::new()),
    })
}

fn adjugate(a: &IMat) -> IMat {
    let n = a.len();
    if n == 1 {
        return vec![vec![1]];
    }
    let mut adj = vec![vec![0i128; n]; n];
    for i in 0..n {
        for j in 0..n {
            let minor: IMat = (0..n)
                .filter(|&r| r != j)
                .map(|r| (0..n).filter(|&c| c != i).map(|c| a[r][c]).collect())
                .collect();
            let s = if (i + j) % 2 == 0 { 1 } else { -1 };
            adj[i][j] = s * det(&minor);
        }
    }
    adj
}

impl FieldDescriptor {
    pub fn coeffs(&self) -> &[i128] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> i128 {
        self.d
    }

    pub fn companion(&self) -> &IMat {
        &self.companion
    }

    /// m(x) with the leading 1, low degree first.
    pub fn min_poly(&self) -> Vec<i128> {
        let mut p = self.coeffs.clone();
        p.push(1);
        p
    }

    fn check_len(&self, len: usize) -> Result<(), FieldError> {
        if len == self.n {
            Ok(())
        } else {
            Err(FieldError::DimensionMismatch { expected: self.n, got: len })
        }
    }

    /// A^k over ℚ, cached.
    pub fn power(&self, k: i64) -> Arc<QMat> {
        if let Some(p) = self.powers.read().unwrap().get(&k) {
            return p.clone();
        }
        let base = if k >= 0 {
            to_rational(&self.companion)
        } else {
            q_inverse(&to_rational(&self.companion)).expect("companion is invertible")
        };
        let mut acc = linalg::q_identity(self.n);
        for _ in 0..k.unsigned_abs() {
            acc = q_mat_mul(&acc, &base);
        }
        let acc = Arc::new(acc);
        self.powers.write().unwrap().insert(k, acc.clone());
        acc
    }

    /// Integer A^k for k ≥ 0.
    pub fn int_power(&self, k: u32) -> IMat {
        linalg::mat_pow(&self.companion, k)
    }

    /// Coordinates of a·b.
    pub fn oe_mul(&self, a: &OrderElement, b: &OrderElement) -> Result<OrderElement, FieldError> {
        self.check_len(a.coords.len())?;
        self.check_len(b.coords.len())?;
        let n = self.n;
        let mut prod = vec![0i128; 2 * n - 1];
        for (i, x) in a.coords.iter().enumerate() {
            for (j, y) in b.coords.iter().enumerate() {
                prod[i + j] += x * y;
            }
        }
        // reduce with α^n = −Σ a_j α^j, top degree first
        for top in (n..2 * n - 1).rev() {
            let c = prod[top];
            if c != 0 {
                prod[top] = 0;
                for j in 0..n {
                    prod[top - n + j] -= c * self.coeffs[j];
                }
            }
        }
        prod.truncate(n);
        Ok(OrderElement::new(prod))
    }

    /// Matrix of multiplication by `b` acting on coordinate rows.
    pub fn mult_matrix(&self, b: &OrderElement) -> IMat {
        (0..self.n)
            .map(|i| {
                self.oe_mul(&OrderElement::basis(self.n, i), b)
                    .expect("dimensions agree")
                    .coords
            })
            .collect()
    }

    pub fn alpha(&self) -> OrderElement {
        if self.n == 1 {
            OrderElement::constant(1, -self.coeffs[0])
        } else {
            OrderElement::basis(self.n, 1)
        }
    }

    pub fn mul_alpha(&self, a: &OrderElement) -> OrderElement {
        OrderElement::new(linalg::vec_mat(&a.coords, &self.companion))
    }

    pub fn alpha_pow_elem(&self, e: u32) -> OrderElement {
        let mut out = OrderElement::constant(self.n, 1);
        for _ in 0..e {
            out = self.mul_alpha(&out);
        }
        out
    }

    /// c with c·α = a, if c is in the order.
    pub fn x_divide(&self, a: &OrderElement) -> Option<OrderElement> {
        let v = linalg::vec_mat(&a.coords, &self.adjugate);
        if v.iter().all(|x| x % self.det_a == 0) {
            Some(OrderElement::new(v.into_iter().map(|x| x / self.det_a).collect()))
        } else {
            None
        }
    }

    /// |N(a)| = |det of multiplication by a|.
    pub fn norm(&self, a: &OrderElement) -> i128 {
        det(&self.mult_matrix(a)).abs()
    }

    // ---------- ℤ[α][1/α] ----------

    pub fn xf_zero(&self) -> XFraction {
        XFraction { numer: OrderElement::zero(self.n), denom_exp: 0 }
    }

    pub fn xf_from_order(&self, a: OrderElement) -> XFraction {
        XFraction { numer: a, denom_exp: 0 }
    }

    pub fn xf_int(&self, c: i128) -> XFraction {
        self.xf_from_order(OrderElement::constant(self.n, c))
    }

    /// a/α^ℓ brought to canonical form.
    pub fn xf_new(&self, numer: OrderElement, denom_exp: u32) -> XFraction {
        let mut x = XFraction { numer, denom_exp };
        self.xf_canonicalize(&mut x);
        x
    }

    fn xf_canonicalize(&self, x: &mut XFraction) {
        if x.numer.is_zero() {
            x.denom_exp = 0;
            return;
        }
        while x.denom_exp > 0 {
            match self.x_divide(&x.numer) {
                Some(c) => {
                    x.numer = c;
                    x.denom_exp -= 1;
                }
                None => break,
            }
        }
    }

    pub fn xf_is_canonical(&self, x: &XFraction) -> bool {
        if x.numer.is_zero() {
            return x.denom_exp == 0;
        }
        x.denom_exp == 0 || self.x_divide(&x.numer).is_none()
    }

    pub fn xf_coords(&self, x: &XFraction) -> Vec<Q> {
        let v: Vec<Q> = x.numer.coords.iter().map(|c| Q::from_integer(*c)).collect();
        if x.denom_exp == 0 {
            v
        } else {
            q_vec_mat(&v, &self.power(-(x.denom_exp as i64)))
        }
    }

    /// Inverse of [`Self::xf_coords`]; fails when the coordinates have
    /// denominators that no power of α clears.
    pub fn xf_from_coords(&self, v: &[Q]) -> Result<XFraction, FieldError> {
        self.check_len(v.len())?;
        let mut cur = v.to_vec();
        // α^ℓ clears at most a factor d^ℓ; denominators must be supported on d
        let den = linalg::common_denominator(v);
        let mut rest = den;
        loop {
            let g = rest.gcd(&self.d);
            if g == 1 {
                break;
            }
            rest /= g;
        }
        if rest != 1 {
            return Err(FieldError::NotInRing(v.iter().map(|q| q.to_string()).collect()));
        }
        let a = to_rational(&self.companion);
        for ell in 0..=256u32 {
            if linalg::q_vec_is_integral(&cur) {
                let numer = OrderElement::new(cur.iter().map(|q| q.to_integer()).collect());
                return Ok(self.xf_new(numer, ell));
            }
            cur = q_vec_mat(&cur, &a);
        }
        Err(FieldError::NotInRing(v.iter().map(|q| q.to_string()).collect()))
    }

    pub fn xf_add(&self, x: &XFraction, y: &XFraction) -> XFraction {
        let l = x.denom_exp.max(y.denom_exp);
        let a = self.lift_numer(x, l);
        let b = self.lift_numer(y, l);
        self.xf_new(a.add(&b), l)
    }

    pub fn xf_sub(&self, x: &XFraction, y: &XFraction) -> XFraction {
        self.xf_add(x, &self.xf_neg(y))
    }

    pub fn xf_neg(&self, x: &XFraction) -> XFraction {
        XFraction { numer: x.numer.neg(), denom_exp: x.denom_exp }
    }

    pub fn xf_mul(&self, x: &XFraction, y: &XFraction) -> XFraction {
        let numer = self.oe_mul(&x.numer, &y.numer).expect("dimensions agree");
        self.xf_new(numer, x.denom_exp + y.denom_exp)
    }

    pub fn xf_scale(&self, x: &XFraction, c: i128) -> XFraction {
        self.xf_new(x.numer.scale(c), x.denom_exp)
    }

    /// x^k · b for any integer k.
    pub fn xf_mul_x_pow(&self, x: &XFraction, k: i64) -> XFraction {
        if k >= 0 {
            let k = k as u32;
            if k <= x.denom_exp {
                XFraction { numer: x.numer.clone(), denom_exp: x.denom_exp - k }
            } else {
                let mut a = x.numer.clone();
                for _ in 0..k - x.denom_exp {
                    a = self.mul_alpha(&a);
                }
                XFraction { numer: a, denom_exp: 0 }
            }
        } else {
            self.xf_new(x.numer.clone(), x.denom_exp + k.unsigned_abs() as u32)
        }
    }

    fn lift_numer(&self, x: &XFraction, l: u32) -> OrderElement {
        let mut a = x.numer.clone();
        for _ in x.denom_exp..l {
            a = self.mul_alpha(&a);
        }
        a
    }

    // ---------- cosets of x^n O ----------

    /// Rational HNF basis of the lattice x^n·O (rows of A^n).
    pub fn coset_lattice(&self, n: i64) -> Arc<QMat> {
        if let Some(h) = self.coset_lattices.read().unwrap().get(&n) {
            return h.clone();
        }
        let sigma = (-n).max(0) as u32;
        let scale = self.d.pow(sigma);
        let scaled: QMat = self
            .power(n)
            .iter()
            .map(|r| r.iter().map(|x| *x * Q::from_integer(scale)).collect())
            .collect();
        let int = to_integer(&scaled).expect("d^σ A^n is integral");
        let h = hnf(&int);
        let h: QMat = h
            .iter()
            .map(|r| r.iter().map(|x| Q::new(*x, scale)).collect())
            .collect();
        let h = Arc::new(h);
        self.coset_lattices.write().unwrap().insert(n, h.clone());
        h
    }

    /// Canonical representative of b mod x^n O as a coordinate vector.
    ///
    /// The box reduction is carried out on the lattice scaled by d^σ with
    /// σ = max(ℓ, max(0, −n)); since box reduction commutes with scaling the
    /// result is stored unscaled.
    pub fn coset_reduce(&self, b: &XFraction, n: i64) -> Result<Vec<Q>, FieldError> {
        self.check_len(b.numer.coords.len())?;
        if !self.xf_is_canonical(b) {
            return Err(FieldError::NonCanonicalInput);
        }
        Ok(self.coset_reduce_coords(&self.xf_coords(b), n))
    }

    pub fn coset_reduce_coords(&self, v: &[Q], n: i64) -> Vec<Q> {
        q_reduce_mod_hnf(v, &self.coset_lattice(n))
    }

    /// Is x^{−n}(b − b′) in the order?
    pub fn same_coset(&self, b: &XFraction, b2: &XFraction, n: i64) -> bool {
        let diff = self.xf_coords(&self.xf_sub(b, b2));
        let shifted = q_vec_mat(&diff, &self.power(-n));
        linalg::q_vec_is_integral(&shifted)
    }

    // ---------- Γ ----------

    pub fn gamma_identity(&self) -> GammaElement {
        GammaElement { b: self.xf_zero(), k: 0 }
    }

    pub fn gamma(&self, b: XFraction, k: i64) -> GammaElement {
        GammaElement { b, k }
    }

    pub fn gamma_mul(&self, g1: &GammaElement, g2: &GammaElement) -> GammaElement {
        let b = self.xf_add(&g1.b, &self.xf_mul_x_pow(&g2.b, g1.k));
        GammaElement { b, k: g1.k + g2.k }
    }

    pub fn gamma_inv(&self, g: &GammaElement) -> GammaElement {
        GammaElement { b: self.xf_neg(&self.xf_mul_x_pow(&g.b, -g.k)), k: -g.k }
    }

    /// w ↦ w·A^k + coords(b).
    pub fn affine_action(&self, g: &GammaElement, w: &[Q]) -> Result<Vec<Q>, FieldError> {
        self.check_len(w.len())?;
        let moved = q_vec_mat(w, &self.power(g.k));
        Ok(moved
            .iter()
            .zip(self.xf_coords(&g.b))
            .map(|(x, y)| *x + y)
            .collect())
    }

    /// The 2×2 matrix [[x^k, b], [0, 1]] with entries in K given as coordinates.
    pub fn gamma_matrix(&self, g: &GammaElement) -> [[Vec<Q>; 2]; 2] {
        let xk = self.xf_coords(&self.xf_mul_x_pow(&self.xf_int(1), g.k));
        let zero = vec![Q::zero(); self.n];
        let mut one = zero.clone();
        one[0] = Q::one();
        [[xk, self.xf_coords(&g.b)], [zero, one]]
    }

    /// Product of two elements of K given by coordinates.
    pub fn k_mul(&self, a: &[Q], b: &[Q]) -> Vec<Q> {
        // multiplication matrix of b over ℚ is Σ b_j A^j
        let mut m = vec![vec![Q::zero(); self.n]; self.n];
        for (j, bj) in b.iter().enumerate() {
            if bj.is_zero() {
                continue;
            }
            let p = self.power(j as i64);
            for r in 0..self.n {
                for c in 0..self.n {
                    m[r][c] += *bj * p[r][c];
                }
            }
        }
        q_vec_mat(a, &m)
    }
}

/// The monomorphism (ℤ[1/d])ⁿ ⋊_M ℤ → K⁺ ⋊ ℤ induced by a cyclic vector of M.
#[derive(Debug)]
pub struct Embedding {
    pub source_matrix: IMat,
    pub conjugator: QMat,
    pub conjugator_inv: QMat,
    pub target: FieldDescriptor,
}

/// A group element of either side: translation part as rational coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AffineElement {
    pub b: Vec<Q>,
    pub k: i64,
}

pub fn build_embedding(m: &IMat) -> Result<Embedding, FieldError> {
    let n = m.len();
    if n == 0 || m.iter().any(|r| r.len() != n) {
        return Err(FieldError::BadSourceMatrix);
    }
    if det(m).abs() <= 1 {
        return Err(FieldError::BadSourceMatrix);
    }
    let cp = linalg::char_poly(m);
    let target = define_field(&cp)?;
    // rows v, vM, …, vM^{n−1} with v = e_1
    let mut t: IMat = Vec::with_capacity(n);
    let mut v: Vec<i128> = (0..n).map(|j| i128::from(j == 0)).collect();
    for _ in 0..n {
        t.push(v.clone());
        v = linalg::vec_mat(&v, m);
    }
    let tq = to_rational(&t);
    let t_inv = q_inverse(&tq).ok_or(FieldError::SingularConjugator)?;
    let lhs = mat_mul(&t, m);
    let rhs = mat_mul(target.companion(), &t);
    if lhs != rhs {
        return Err(FieldError::SingularConjugator);
    }
    Ok(Embedding { source_matrix: m.clone(), conjugator: tq, conjugator_inv: t_inv, target })
}

impl Embedding {
    pub fn source_power(&self, k: i64) -> QMat {
        let base = to_rational(&self.source_matrix);
        let base = if k >= 0 { base } else { q_inverse(&base).expect("det ≠ 0") };
        let mut acc = linalg::q_identity(base.len());
        for _ in 0..k.unsigned_abs() {
            acc = q_mat_mul(&acc, &base);
        }
        acc
    }

    /// (b₁, k₁)(b₂, k₂) = (b₁ + b₂·M^{k₁}, k₁ + k₂) in the source group.
    pub fn source_mul(&self, g: &AffineElement, h: &AffineElement) -> AffineElement {
        let moved = q_vec_mat(&h.b, &self.source_power(g.k));
        AffineElement { b: g.b.iter().zip(moved).map(|(x, y)| *x + y).collect(), k: g.k + h.k }
    }

    /// Same law in K⁺ ⋊ ℤ with the multiplication-by-α matrix.
    pub fn target_mul(&self, g: &AffineElement, h: &AffineElement) -> AffineElement {
        let moved = q_vec_mat(&h.b, &self.target.power(g.k));
        AffineElement { b: g.b.iter().zip(moved).map(|(x, y)| *x + y).collect(), k: g.k + h.k }
    }

    /// F(b, k) = (b·T⁻¹, k).
    pub fn apply(&self, g: &AffineElement) -> AffineElement {
        AffineElement { b: q_vec_mat(&g.b, &self.conjugator_inv), k: g.k }
    }

    /// T·M·T⁻¹ computed exactly.
    pub fn conjugated_source(&self) -> QMat {
        q_mat_mul(
            &q_mat_mul(&self.conjugator, &to_rational(&self.source_matrix)),
            &self.conjugator_inv,
        )
    }
}

pub fn rational_vec(v: &[i128]) -> Vec<Q> {
    v.iter().map(|x| Q::from_integer(*x)).collect()
}
