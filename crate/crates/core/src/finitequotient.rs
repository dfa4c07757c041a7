//! Finite quotients (ℤ/s)ⁿ ⋊_{M_s} ℤ/r of Γ, subgroup classes by cyclic
//! extension, hyper-elementary detection, the trichotomy check, and the two
//! contraction probes.

use std::collections::{HashMap, HashSet, VecDeque};

use num_integer::Integer;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::flowspace::{flow, fs_distance, psi, QuadratureSpec};
use crate::geometry::{Metric, ModelPoint, TreePoint};
use crate::linalg::Q;
use crate::numberfield::{FieldDescriptor, GammaElement, OrderElement};
use crate::par::{self, Exec};
use crate::tree::TreeVertex;

pub const DEFAULT_GROUP_BOUND: usize = 50_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuotientError {
    #[error("modulus {s} is not coprime to d = {d}")]
    NotCoprime { s: i64, d: i64 },
    #[error("M_s^{r} is not the identity")]
    BadExponent { r: i64 },
    #[error("modulus must be at least 2, got {0}")]
    BadModulus(i64),
    #[error("group of order {order} exceeds the enumeration bound {bound}")]
    GroupTooLarge { order: usize, bound: usize },
    #[error("no admissible (s, r) with s <= {s_max} passes the check for N = {n}")]
    SearchExhausted { n: i64, s_max: i64 },
    #[error("{0} does not fit in 64 bits")]
    Overflow(&'static str),
}

/// A finite group on the element indices 0..order.
pub trait FiniteGroup: Sync {
    fn order(&self) -> usize;
    fn identity(&self) -> usize;
    fn mul(&self, a: usize, b: usize) -> usize;
    fn inv(&self, a: usize) -> usize;
    fn generators(&self) -> Vec<usize>;

    fn conj(&self, x: usize, a: usize) -> usize {
        self.mul(self.mul(x, a), self.inv(x))
    }

    fn element_order(&self, a: usize) -> usize {
        let e = self.identity();
        let mut x = a;
        let mut k = 1;
        while x != e {
            x = self.mul(x, a);
            k += 1;
        }
        k
    }
}

/// Elements of the subgroup generated by `gens`, sorted.
pub fn closure<G: FiniteGroup + ?Sized>(g: &G, gens: &[usize]) -> Vec<usize> {
    let mut seen = vec![false; g.order()];
    let e = g.identity();
    seen[e] = true;
    let mut out = vec![e];
    let mut queue = VecDeque::from([e]);
    while let Some(x) = queue.pop_front() {
        for &s in gens {
            let y = g.mul(x, s);
            if !seen[y] {
                seen[y] = true;
                out.push(y);
                queue.push_back(y);
            }
        }
    }
    out.sort_unstable();
    out
}

// ---------- (ℤ/s)ⁿ ⋊ ℤ/r ----------

/// An element (v, t) of (ℤ/s)ⁿ ⋊ ℤ/r.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct AffineResidue {
    pub v: Vec<i64>,
    pub t: i64,
}

/// (ℤ/s)ⁿ ⋊_{M_s} ℤ/r with (v₁,t₁)(v₂,t₂) = (v₁ + v₂·M_s^{t₁}, t₁ + t₂).
#[derive(Clone, Debug)]
pub struct FiniteAffineGroup {
    pub s: i64,
    pub r: i64,
    pub n: usize,
    pub m_s: Vec<Vec<i64>>,
    /// M_s^t for 0 ≤ t < r
    powers: Vec<Vec<Vec<i64>>>,
    block: usize,
}

fn mat_mul_mod(a: &[Vec<i64>], b: &[Vec<i64>], s: i64) -> Vec<Vec<i64>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum::<i64>().rem_euclid(s)).collect())
        .collect()
}

fn identity_mod(n: usize) -> Vec<Vec<i64>> {
    (0..n).map(|i| (0..n).map(|j| i64::from(i == j)).collect()).collect()
}

/// Order of M in GL_n(ℤ/s), or None if it exceeds `limit`.
pub fn matrix_order(m: &[Vec<i64>], s: i64, limit: u64) -> Option<u64> {
    let id = identity_mod(m.len());
    let mut p = m.to_vec();
    let mut k = 1;
    while p != id {
        if k >= limit {
            return None;
        }
        p = mat_mul_mod(&p, m, s);
        k += 1;
    }
    Some(k)
}

pub fn reduce_companion(field: &FieldDescriptor, s: i64) -> Vec<Vec<i64>> {
    field
        .companion()
        .iter()
        .map(|row| row.iter().map(|x| (*x % s as i128).rem_euclid(s as i128) as i64).collect())
        .collect()
}

impl FiniteAffineGroup {
    pub fn new(m_s: Vec<Vec<i64>>, s: i64, r: i64) -> Result<Self, QuotientError> {
        if s < 2 {
            return Err(QuotientError::BadModulus(s));
        }
        if r < 1 {
            return Err(QuotientError::BadExponent { r });
        }
        let n = m_s.len();
        let mut powers = vec![identity_mod(n)];
        for t in 1..=r as usize {
            powers.push(mat_mul_mod(&powers[t - 1], &m_s, s));
        }
        if powers.pop() != Some(identity_mod(n)) {
            return Err(QuotientError::BadExponent { r });
        }
        let block = (s as usize).checked_pow(n as u32).ok_or(QuotientError::Overflow("s^n"))?;
        block.checked_mul(r as usize).ok_or(QuotientError::Overflow("group order"))?;
        Ok(Self { s, r, n, m_s, powers, block })
    }

    pub fn encode(&self, x: &AffineResidue) -> usize {
        let mut idx = 0usize;
        for c in x.v.iter().rev() {
            idx = idx * self.s as usize + c.rem_euclid(self.s) as usize;
        }
        x.t.rem_euclid(self.r) as usize * self.block + idx
    }

    pub fn decode(&self, idx: usize) -> AffineResidue {
        let t = (idx / self.block) as i64;
        let mut rest = idx % self.block;
        let mut v = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            v.push((rest % self.s as usize) as i64);
            rest /= self.s as usize;
        }
        AffineResidue { v, t }
    }

    pub fn mul_res(&self, a: &AffineResidue, b: &AffineResidue) -> AffineResidue {
        let p = &self.powers[a.t.rem_euclid(self.r) as usize];
        let v = (0..self.n)
            .map(|j| (a.v[j] + (0..self.n).map(|i| b.v[i] * p[i][j]).sum::<i64>()).rem_euclid(self.s))
            .collect();
        AffineResidue { v, t: (a.t + b.t).rem_euclid(self.r) }
    }

    /// The projection to ℤ/r.
    pub fn pr(&self, idx: usize) -> i64 {
        (idx / self.block) as i64
    }

    /// Translation part (v, 0) ↦ v for elements with t = 0.
    pub fn translation(&self, idx: usize) -> Option<Vec<i64>> {
        let x = self.decode(idx);
        (x.t == 0).then_some(x.v)
    }
}

impl FiniteGroup for FiniteAffineGroup {
    fn order(&self) -> usize {
        self.block * self.r as usize
    }

    fn identity(&self) -> usize {
        0
    }

    fn mul(&self, a: usize, b: usize) -> usize {
        self.encode(&self.mul_res(&self.decode(a), &self.decode(b)))
    }

    fn inv(&self, a: usize) -> usize {
        // (v, t)⁻¹ = (−v·M^{−t}, −t)
        let x = self.decode(a);
        let back = (self.r - x.t).rem_euclid(self.r);
        let p = &self.powers[back as usize];
        let v = (0..self.n)
            .map(|j| (-(0..self.n).map(|i| x.v[i] * p[i][j]).sum::<i64>()).rem_euclid(self.s))
            .collect();
        self.encode(&AffineResidue { v, t: back })
    }

    fn generators(&self) -> Vec<usize> {
        let mut gens: Vec<usize> = (0..self.n)
            .map(|i| {
                let mut v = vec![0; self.n];
                v[i] = 1;
                self.encode(&AffineResidue { v, t: 0 })
            })
            .collect();
        gens.push(self.encode(&AffineResidue { v: vec![0; self.n], t: 1 }));
        gens
    }
}

/// α_m: Γ → (ℤ/s)ⁿ ⋊_{M_s} ℤ/r for a field.
#[derive(Clone, Debug)]
pub struct Quotient {
    pub group: FiniteAffineGroup,
    pub d: i64,
}

pub fn build_quotient(field: &FieldDescriptor, s: i64, r: i64) -> Result<Quotient, QuotientError> {
    let d = i64::try_from(field.d()).map_err(|_| QuotientError::Overflow("d"))?;
    if s < 2 {
        return Err(QuotientError::BadModulus(s));
    }
    if s.gcd(&d) != 1 {
        return Err(QuotientError::NotCoprime { s, d });
    }
    let group = FiniteAffineGroup::new(reduce_companion(field, s), s, r)?;
    Ok(Quotient { group, d })
}

impl Quotient {
    /// (a/x^ℓ, k) ↦ (coords(a)·M_s^{−ℓ} mod s, k mod r).
    pub fn reduce_element(&self, g: &GammaElement) -> AffineResidue {
        let grp = &self.group;
        let s = grp.s as i128;
        let a: Vec<i64> = g.b.numer.coords.iter().map(|c| c.rem_euclid(s) as i64).collect();
        let back = (-(g.b.denom_exp as i64)).rem_euclid(grp.r) as usize;
        let p = &grp.powers[back];
        let v = (0..grp.n)
            .map(|j| (0..grp.n).map(|i| a[i] * p[i][j]).sum::<i64>().rem_euclid(grp.s))
            .collect();
        AffineResidue { v, t: g.k.rem_euclid(grp.r) }
    }

    /// Order of the subgroup generated by the images of (eᵢ, 0) and (0, 1).
    pub fn image_of_generators(&self, field: &FieldDescriptor) -> usize {
        let n = field.degree();
        let mut gens: Vec<GammaElement> = (0..n)
            .map(|i| field.gamma(field.xf_from_order(OrderElement::basis(n, i)), 0))
            .collect();
        gens.push(field.gamma(field.xf_zero(), 1));
        let idx: Vec<usize> = gens.iter().map(|g| self.group.encode(&self.reduce_element(g))).collect();
        closure(&self.group, &idx).len()
    }
}

// ---------- |GL_n(ℤ/s)| ----------

pub fn factorize(mut s: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= s {
        let mut e = 0;
        while s % p == 0 {
            s /= p;
            e += 1;
        }
        if e > 0 {
            out.push((p, e));
        }
        p += 1;
    }
    if s > 1 {
        out.push((s, 1));
    }
    out
}

/// |GL_n(ℤ/s)|, multiplicative over prime powers:
/// |GL_n(ℤ/pᵉ)| = p^{(e−1)n²} Π_{i<n}(pⁿ − pⁱ).
pub fn gl_order(n: u32, s: u64) -> Option<u128> {
    let mut total: u128 = 1;
    for (p, e) in factorize(s) {
        let p = p as u128;
        let mut f = p.checked_pow((e - 1) * n * n)?;
        let pn = p.checked_pow(n)?;
        for i in 0..n {
            f = f.checked_mul(pn - p.pow(i))?;
        }
        total = total.checked_mul(f)?;
    }
    Some(total)
}

// ---------- permutation groups ----------

/// A permutation group given by generators, with a full multiplication table.
#[derive(Clone, Debug)]
pub struct PermutationGroup {
    pub elements: Vec<Vec<usize>>,
    table: Vec<Vec<usize>>,
    inverse: Vec<usize>,
    gens: Vec<usize>,
}

impl PermutationGroup {
    /// Product a·b acts as "first a, then b".
    pub fn generated(degree: usize, gens: &[Vec<usize>]) -> Self {
        let id: Vec<usize> = (0..degree).collect();
        let compose = |a: &[usize], b: &[usize]| -> Vec<usize> { a.iter().map(|&i| b[i]).collect() };
        let mut index: HashMap<Vec<usize>, usize> = HashMap::from([(id.clone(), 0)]);
        let mut elements = vec![id];
        let mut i = 0;
        while i < elements.len() {
            for g in gens {
                let y = compose(&elements[i], g);
                if !index.contains_key(&y) {
                    index.insert(y.clone(), elements.len());
                    elements.push(y);
                }
            }
            i += 1;
        }
        let table: Vec<Vec<usize>> = elements
            .iter()
            .map(|a| elements.iter().map(|b| index[&compose(a, b)]).collect())
            .collect();
        let inverse = (0..elements.len()).map(|a| table[a].iter().position(|x| *x == 0).unwrap()).collect();
        let gens = gens.iter().map(|g| index[g]).collect();
        Self { elements, table, inverse, gens }
    }

    pub fn symmetric3() -> Self {
        Self::generated(3, &[vec![1, 0, 2], vec![1, 2, 0]])
    }

    pub fn alternating4() -> Self {
        Self::generated(4, &[vec![1, 2, 0, 3], vec![1, 0, 3, 2]])
    }
}

impl FiniteGroup for PermutationGroup {
    fn order(&self) -> usize {
        self.elements.len()
    }
    fn identity(&self) -> usize {
        0
    }
    fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }
    fn inv(&self, a: usize) -> usize {
        self.inverse[a]
    }
    fn generators(&self) -> Vec<usize> {
        self.gens.clone()
    }
}

// ---------- subgroup classes ----------

#[derive(Clone, Debug, Serialize)]
pub struct HyperWitness {
    /// Generator of the cyclic normal subgroup C.
    pub cyclic_generator: usize,
    pub cyclic_order: usize,
    /// H/C is a p-group and gcd(|C|, p) = 1.
    pub p: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SubgroupRecord {
    pub class_id: usize,
    pub generators: Vec<usize>,
    pub elements: Vec<usize>,
    pub class_size: usize,
    pub witness: Option<HyperWitness>,
}

impl SubgroupRecord {
    pub fn order(&self) -> usize {
        self.elements.len()
    }
}

fn membership(order: usize, elements: &[usize]) -> Vec<bool> {
    let mut m = vec![false; order];
    for &x in elements {
        m[x] = true;
    }
    m
}

/// Smallest element list in the conjugacy orbit of `h`, and the orbit size.
fn canonical_conjugate<G: FiniteGroup + ?Sized>(g: &G, h: &[usize]) -> (Vec<usize>, usize) {
    let gens = g.generators();
    let mut seen: HashSet<Vec<usize>> = HashSet::from([h.to_vec()]);
    let mut queue = VecDeque::from([h.to_vec()]);
    let mut best = h.to_vec();
    while let Some(k) = queue.pop_front() {
        for &x in &gens {
            let mut c: Vec<usize> = k.iter().map(|a| g.conj(x, *a)).collect();
            c.sort_unstable();
            if seen.insert(c.clone()) {
                if c < best {
                    best = c.clone();
                }
                queue.push_back(c);
            }
        }
    }
    (best, seen.len())
}

struct Found {
    gens: Vec<usize>,
    elements: Vec<usize>,
}

/// Prime-index extensions ⟨K, g⟩ with g ∈ N(K) and g^p ∈ K.
fn prime_extensions<G: FiniteGroup + ?Sized>(g: &G, k: &Found) -> Vec<Found> {
    let order = g.order();
    let inside = membership(order, &k.elements);
    let kgens = if k.gens.is_empty() { vec![g.identity()] } else { k.gens.clone() };
    let mut covered = inside.clone();
    let mut out = Vec::new();
    for x in 0..order {
        if covered[x] {
            continue;
        }
        if !kgens.iter().all(|a| inside[g.conj(x, *a)]) {
            continue;
        }
        // order of xK in N(K)/K
        let mut e = 1;
        let mut y = x;
        while !inside[y] {
            y = g.mul(y, x);
            e += 1;
        }
        if factorize(e as u64).len() != 1 || factorize(e as u64)[0].1 != 1 {
            continue;
        }
        let mut gens = k.gens.clone();
        gens.push(x);
        let elements = closure(g, &gens);
        for &z in &elements {
            covered[z] = true;
        }
        out.push(Found { gens, elements });
    }
    out
}

/// One representative per conjugacy class of subgroups, by iterated
/// prime-index cyclic extension from the trivial group. Complete for
/// solvable groups, which covers every group built here.
pub fn subgroup_classes<G: FiniteGroup + ?Sized>(
    g: &G,
    bound: usize,
    exec: Exec,
) -> Result<Vec<SubgroupRecord>, QuotientError> {
    if g.order() > bound {
        return Err(QuotientError::GroupTooLarge { order: g.order(), bound });
    }
    let trivial = Found { gens: vec![], elements: vec![g.identity()] };
    let mut keys: HashSet<Vec<usize>> = HashSet::from([trivial.elements.clone()]);
    let mut classes = vec![(trivial.gens.clone(), trivial.elements.clone(), 1usize)];
    let mut layer = vec![trivial];
    while !layer.is_empty() {
        let candidates: Vec<Vec<(Found, Vec<usize>, usize)>> = par::map(exec, &layer, |k| {
            prime_extensions(g, k)
                .into_iter()
                .map(|h| {
                    let (key, size) = canonical_conjugate(g, &h.elements);
                    (h, key, size)
                })
                .collect()
        });
        let mut next = Vec::new();
        for (h, key, size) in candidates.into_iter().flatten() {
            if keys.insert(key) {
                classes.push((h.gens.clone(), h.elements.clone(), size));
                next.push(h);
            }
        }
        layer = next;
    }
    classes.sort_by(|a, b| a.1.len().cmp(&b.1.len()).then_with(|| a.1.cmp(&b.1)));
    let witnesses = par::map(exec, &classes, |(gens, elements, _)| is_hyperelementary(g, gens, elements));
    Ok(classes
        .into_iter()
        .zip(witnesses)
        .enumerate()
        .map(|(class_id, ((generators, elements, class_size), witness))| SubgroupRecord {
            class_id,
            generators,
            elements,
            class_size,
            witness,
        })
        .collect())
}

fn prime_power(q: usize) -> Option<u64> {
    match factorize(q as u64).as_slice() {
        [(p, _)] => Some(*p),
        _ => None,
    }
}

fn smallest_prime_not_dividing(h: usize) -> u64 {
    (2u64..).find(|p| factorize(*p).len() == 1 && factorize(*p)[0].1 == 1 && h as u64 % p != 0).unwrap()
}

/// A cyclic normal C ◁ H with H/C a p-group and gcd(|C|, p) = 1, preferring
/// the largest C. For cyclic H the witness is C = H with the smallest prime
/// not dividing |H|.
pub fn is_hyperelementary<G: FiniteGroup + ?Sized>(
    g: &G,
    generators: &[usize],
    elements: &[usize],
) -> Option<HyperWitness> {
    let h = elements.len();
    let mut orders: Vec<(usize, usize)> = elements.iter().map(|x| (g.element_order(*x), *x)).collect();
    orders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut tried: HashSet<Vec<usize>> = HashSet::new();
    for (o, c) in orders {
        let q = h / o;
        let p = if q == 1 {
            smallest_prime_not_dividing(h)
        } else {
            match prime_power(q) {
                Some(p) if o as u64 % p != 0 => p,
                _ => continue,
            }
        };
        let mut cyc = Vec::with_capacity(o);
        let mut y = g.identity();
        for _ in 0..o {
            cyc.push(y);
            y = g.mul(y, c);
        }
        cyc.sort_unstable();
        if !tried.insert(cyc.clone()) {
            continue;
        }
        let normal = generators.iter().all(|x| cyc.binary_search(&g.conj(*x, c)).is_ok());
        if normal {
            return Some(HyperWitness { cyclic_generator: c, cyclic_order: o, p });
        }
    }
    None
}

// ---------- trichotomy ----------

#[derive(Clone, Debug, Serialize)]
pub struct TrichotomyRow {
    pub class_id: usize,
    pub order: usize,
    pub pr_order: usize,
    /// [ℤ/r : pr(H)]
    pub index: usize,
    pub hyperelementary: bool,
    pub case_a: bool,
    /// Largest k | s with H ∩ ((ℤ/s)ⁿ ⋊ {0}) ⊆ k·(ℤ/s)ⁿ.
    pub k: i64,
    pub case_b: bool,
    pub case: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct HgpReport {
    pub s: i64,
    pub r: i64,
    pub n_bound: i64,
    pub group_order: usize,
    pub classes: usize,
    pub rows: Vec<TrichotomyRow>,
    pub failing: Vec<usize>,
}

impl HgpReport {
    pub fn pass(&self) -> bool {
        self.failing.is_empty()
    }
}

pub fn hgp_check(group: &FiniteAffineGroup, n_bound: i64, bound: usize, exec: Exec) -> Result<HgpReport, QuotientError> {
    let classes = subgroup_classes(group, bound, exec)?;
    Ok(trichotomy(group, &classes, n_bound))
}

pub fn trichotomy(group: &FiniteAffineGroup, classes: &[SubgroupRecord], n_bound: i64) -> HgpReport {
    let mut rows = Vec::with_capacity(classes.len());
    let mut failing = Vec::new();
    for c in classes {
        let prs: HashSet<i64> = c.elements.iter().map(|x| group.pr(*x)).collect();
        let index = group.r as usize / prs.len();
        let k = c
            .elements
            .iter()
            .filter_map(|x| group.translation(*x))
            .flatten()
            .fold(group.s, |acc, v| acc.gcd(&v));
        let hyper = c.witness.is_some();
        let case_a = index as i64 >= n_bound;
        let case_b = k >= n_bound;
        let case = match (hyper, case_a, case_b) {
            (false, _, _) => "-",
            (true, true, true) => "ab",
            (true, true, false) => "a",
            (true, false, true) => "b",
            (true, false, false) => "none",
        };
        if hyper && !case_a && !case_b {
            failing.push(c.class_id);
        }
        rows.push(TrichotomyRow {
            class_id: c.class_id,
            order: c.order(),
            pr_order: prs.len(),
            index,
            hyperelementary: hyper,
            case_a,
            k,
            case_b,
            case: case.to_string(),
        });
    }
    HgpReport {
        s: group.s,
        r: group.r,
        n_bound,
        group_order: group.order(),
        classes: classes.len(),
        rows,
        failing,
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SearchBounds {
    pub s_max: i64,
    pub group_bound: usize,
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self { s_max: 200, group_bound: DEFAULT_GROUP_BOUND }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SrChoice {
    pub s: i64,
    pub r: i64,
    /// r is the order of M_s rather than |GL_n(ℤ/s)|
    pub relaxed: bool,
    pub tried: Vec<i64>,
    pub report: HgpReport,
}

/// The first s ≡ 1 mod d (in increasing order) for which the trichotomy
/// holds with r = |GL_n(ℤ/s)|; when that group is too large to enumerate,
/// r falls back to the order of M_s and the choice is flagged.
pub fn find_sr(field: &FieldDescriptor, n_bound: i64, bounds: SearchBounds, exec: Exec) -> Result<SrChoice, QuotientError> {
    let d = i64::try_from(field.d()).map_err(|_| QuotientError::Overflow("d"))?;
    let n = field.degree() as u32;
    let mut tried = Vec::new();
    let mut s = 2;
    while s <= bounds.s_max {
        if s % d != 1 % d || s.gcd(&d) != 1 {
            s += 1;
            continue;
        }
        let block = (s as u128).pow(n);
        let full = gl_order(n, s as u64);
        let m_s = reduce_companion(field, s);
        let choice = match full {
            Some(r) if block * r <= bounds.group_bound as u128 => Some((r as i64, false)),
            _ => matrix_order(&m_s, s, bounds.group_bound as u64)
                .filter(|r| block * (*r as u128) <= bounds.group_bound as u128)
                .map(|r| (r as i64, true)),
        };
        if let Some((r, relaxed)) = choice {
            tried.push(s);
            let q = build_quotient(field, s, r)?;
            let report = hgp_check(&q.group, n_bound, bounds.group_bound, exec)?;
            if report.pass() {
                return Ok(SrChoice { s, r, relaxed, tried, report });
            }
        }
        s += 1;
    }
    Err(QuotientError::SearchExhausted { n: n_bound, s_max: bounds.s_max })
}

// ---------- contraction probes ----------

fn word_generators(field: &FieldDescriptor) -> Vec<GammaElement> {
    let n = field.degree();
    let mut gens = Vec::new();
    for i in 0..n {
        let e = field.xf_from_order(OrderElement::basis(n, i));
        gens.push(field.gamma(field.xf_neg(&e), 0));
        gens.push(field.gamma(e, 0));
    }
    gens.push(field.gamma(field.xf_zero(), 1));
    gens.push(field.gamma(field.xf_zero(), -1));
    gens
}

/// A word of the given length in {(±eᵢ, 0), (0, ±1)}, evaluated.
pub fn random_word<R: Rng>(field: &FieldDescriptor, rng: &mut R, length: usize) -> GammaElement {
    let gens = word_generators(field);
    (0..length).fold(field.gamma_identity(), |acc, _| field.gamma_mul(&acc, &gens[rng.gen_range(0..gens.len())]))
}

/// Pairs (g₀, g₀·w) with |w| < m.
pub fn sample_pairs<R: Rng>(
    field: &FieldDescriptor,
    rng: &mut R,
    m: usize,
    base_length: usize,
    samples: usize,
) -> Vec<(GammaElement, GammaElement)> {
    (0..samples)
        .map(|_| {
            let l0 = rng.gen_range(0..=base_length);
            let g0 = random_word(field, rng, l0);
            let lw = rng.gen_range(0..m.max(1));
            let w = random_word(field, rng, lw);
            let g1 = field.gamma_mul(&g0, &w);
            (g0, g1)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseAReport {
    pub m: usize,
    pub pairs: usize,
    pub max_shift_gap: i64,
    /// max |Δk| / m², exact
    pub max_displacement: String,
    pub bound: String,
    pub certified: bool,
}

/// f(g) = k(g)/m² on ℝ with cells of size 1/m². A word of length < m moves k
/// by less than m, so the displacement stays below 1/m.
pub fn case_a_certificate<R: Rng>(field: &FieldDescriptor, m: usize, samples: usize, rng: &mut R) -> CaseAReport {
    let pairs = sample_pairs(field, rng, m, 2 * m + 2, samples);
    let scale = Q::new(1, (m * m) as i128);
    let bound = Q::new(1, m as i128);
    let mut max_gap = 0i64;
    let mut certified = true;
    for (g0, g1) in &pairs {
        let gap = (g1.k - g0.k).abs();
        max_gap = max_gap.max(gap);
        let disp = Q::from_integer(gap as i128) * scale;
        certified &= gap < m as i64 && disp < bound;
    }
    CaseAReport {
        m,
        pairs: pairs.len(),
        max_shift_gap: max_gap,
        max_displacement: (Q::from_integer(max_gap as i128) * scale).to_string(),
        bound: bound.to_string(),
        certified,
    }
}

/// η(g) = g·(base vertex, 0).
pub fn orbit_point(metric: &Metric, g: &GammaElement) -> ModelPoint {
    let base = ModelPoint::new(TreePoint::at(metric.tree().base()), vec![Q::from_integer(0); metric.dim()]);
    metric.act(g, &base)
}

fn inverse_mod(k: i128, m: i128) -> Option<i128> {
    if m == 1 {
        return Some(0);
    }
    let e = k.extended_gcd(&m);
    (e.gcd == 1).then(|| e.x.rem_euclid(m))
}

/// F_k⁻¹: (n, [b]) ↦ (n, [k⁻¹b]) and w ↦ w/k, with k⁻¹ taken modulo
/// d^{n+ℓ} for b = a/x^ℓ.
pub fn scale_inverse(metric: &Metric, k: i64, p: &ModelPoint) -> Result<ModelPoint, QuotientError> {
    let field = metric.field();
    let d = field.d();
    if (k as i128).gcd(&d) != 1 {
        return Err(QuotientError::NotCoprime { s: k, d: d as i64 });
    }
    let v = &p.tree.vertex;
    let b = metric.tree().element(v);
    let depth = (v.height + b.denom_exp as i64).max(0) as u32;
    let modulus = d.abs().checked_pow(depth).ok_or(QuotientError::Overflow("d^(n+l)"))?;
    let kinv = inverse_mod(k as i128, modulus).expect("k is coprime to d");
    let vertex: TreeVertex = metric.tree().vertex(v.height, &field.xf_scale(&b, kinv));
    let fiber = p.fiber.iter().map(|x| *x / Q::from_integer(k as i128)).collect();
    Ok(ModelPoint::new(TreePoint { vertex, t: p.tree.t }, fiber))
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseBReport {
    pub m: usize,
    pub tau: f64,
    pub ks: Vec<i64>,
    pub samples: usize,
    /// max over pairs of the upper bound on the flow-space distance, per k
    pub max_upper: Vec<f64>,
    pub strictly_decreasing: bool,
    /// Pairs whose shift coordinates agree. F_k only shrinks the fiber, so a
    /// pair with Δk ≠ 0 keeps distance about |Δk| and can pin the overall max.
    pub same_shift_pairs: usize,
    pub max_upper_same_shift: Vec<f64>,
    pub same_shift_decreasing: bool,
}

pub fn case_b_contraction_probe<R: Rng>(
    metric: &Metric,
    m: usize,
    ks: &[i64],
    tau: f64,
    samples: usize,
    rng: &mut R,
    spec: &QuadratureSpec,
    exec: Exec,
) -> Result<CaseBReport, QuotientError> {
    let field = metric.field();
    let pairs = sample_pairs(field, rng, m, 2 * m + 2, samples);
    let same_shift: Vec<bool> = pairs.iter().map(|(g0, g1)| g0.k == g1.k).collect();
    let mut max_upper = Vec::with_capacity(ks.len());
    let mut max_upper_same_shift = Vec::with_capacity(ks.len());
    for &k in ks {
        let mapped: Vec<(ModelPoint, ModelPoint)> = pairs
            .iter()
            .map(|(g0, g1)| {
                Ok((
                    scale_inverse(metric, k, &orbit_point(metric, g0))?,
                    scale_inverse(metric, k, &orbit_point(metric, g1))?,
                ))
            })
            .collect::<Result<_, QuotientError>>()?;
        let uppers = par::map(exec, &mapped, |(p, q)| {
            let c1 = flow(&psi(p.tree.clone(), p.fiber.clone()), tau);
            let c2 = flow(&psi(q.tree.clone(), q.fiber.clone()), tau);
            fs_distance(metric, &c1, &c2, spec).upper
        });
        max_upper.push(uppers.iter().cloned().fold(0.0, f64::max));
        max_upper_same_shift
            .push(uppers.iter().zip(&same_shift).filter(|(_, s)| **s).map(|(u, _)| *u).fold(0.0, f64::max));
    }
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    Ok(CaseBReport {
        m,
        tau,
        ks: ks.to_vec(),
        samples,
        strictly_decreasing: decreasing(&max_upper),
        max_upper,
        same_shift_pairs: same_shift.iter().filter(|s| **s).count(),
        same_shift_decreasing: decreasing(&max_upper_same_shift),
        max_upper_same_shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numberfield::define_field;

    #[test]
    fn gl_orders() {
        assert_eq!(gl_order(1, 3), Some(2));
        assert_eq!(gl_order(1, 5), Some(4));
        assert_eq!(gl_order(2, 3), Some(48));
        assert_eq!(gl_order(1, 9), Some(6));
    }

    #[test]
    fn half_reduces_to_two_mod_three() {
        let f = define_field(&[-2]).unwrap();
        let q = build_quotient(&f, 3, 2).unwrap();
        let half = f.gamma(f.xf_new(OrderElement::constant(1, 1), 1), 0);
        assert_eq!(q.reduce_element(&half), AffineResidue { v: vec![2], t: 0 });
    }

    #[test]
    fn s3_has_four_classes() {
        let f = define_field(&[-2]).unwrap();
        let q = build_quotient(&f, 3, 2).unwrap();
        let classes = subgroup_classes(&q.group, DEFAULT_GROUP_BOUND, Exec::Sequential).unwrap();
        let orders: Vec<usize> = classes.iter().map(|c| c.order()).collect();
        assert_eq!(orders, vec![1, 2, 3, 6]);
        assert!(classes.iter().all(|c| c.witness.is_some()));
    }

    #[test]
    fn a4_is_not_hyperelementary() {
        let g = PermutationGroup::alternating4();
        assert_eq!(g.order(), 12);
        let all: Vec<usize> = (0..12).collect();
        assert!(is_hyperelementary(&g, &g.generators(), &all).is_none());
        let s3 = PermutationGroup::symmetric3();
        let w = is_hyperelementary(&s3, &s3.generators(), &(0..6).collect::<Vec<_>>()).unwrap();
        assert_eq!((w.cyclic_order, w.p), (3, 2));
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = define_field(&[-2]).unwrap();
        assert_eq!(build_quotient(&f, 4, 2).unwrap_err(), QuotientError::NotCoprime { s: 4, d: 2 });
        assert_eq!(build_quotient(&f, 5, 3).unwrap_err(), QuotientError::BadExponent { r: 3 });
    }
}
