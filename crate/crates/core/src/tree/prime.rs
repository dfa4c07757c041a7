//! Per-prime trees T_𝔭 and T_{𝔭^κ}, the folding map between them, and the
//! diagonal subtree of ∏ T_{𝔭ᵢ^{kᵢ}} compared against T_d.
//!
//! A vertex at level P is the class of b ∈ ℤ[α][1/α] modulo {c : v_𝔭(c) ≥ P}.
//! Its canonical key is (P, t, a) with a/α^t in the class, t the least
//! exponent for which such an a exists, and a reduced into the HNF box of
//! 𝔭^{P+t·k} where k = v_𝔭(α).

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use super::{DTree, TreeError, TreeVertex};
use crate::ideals::{factor_x, prime_valuation, quotient_reps, PrimeFactor};
use crate::linalg::solve_integer_combination;
use crate::numberfield::{FieldDescriptor, GammaElement, OrderElement, XFraction};
use crate::sampling;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PrimeTreeVertex {
    pub level: i64,
    pub t: u32,
    pub a: Vec<i128>,
}

/// An upper-triangular map c ↦ a·c + b with a ≠ 0.
#[derive(Clone, Debug)]
pub struct AffineMap {
    pub a: XFraction,
    pub b: XFraction,
}

/// T_{𝔭^step}: levels are multiples of `step` in 𝔭-exponent units.
#[derive(Clone, Debug)]
pub struct PrimeTree {
    pub field: Arc<FieldDescriptor>,
    pub prime: PrimeFactor,
    pub step: u32,
}

fn ceil_div(a: i64, b: i64) -> i64 {
    -((-a).div_euclid(b))
}

impl PrimeTree {
    pub fn new(field: Arc<FieldDescriptor>, prime: PrimeFactor, step: u32) -> Self {
        assert!(step >= 1);
        Self { field, prime, step }
    }

    fn k(&self) -> i64 {
        self.prime.k as i64
    }

    fn min_t(&self, m: i64) -> u32 {
        if m >= 0 {
            0
        } else {
            ceil_div(-m, self.k()) as u32
        }
    }

    pub fn valuation(&self, b: &XFraction) -> Option<i64> {
        if b.numer.is_zero() {
            None
        } else {
            Some(prime_valuation(&self.field, b, &self.prime).expect("nonzero"))
        }
    }

    /// Canonical key of the class of b at 𝔭-level `level`.
    pub fn canonical(&self, level: i64, b: &XFraction) -> PrimeTreeVertex {
        let n = self.field.degree();
        let v = self.valuation(b);
        let t = self.min_t(v.map_or(level, |v| v.min(level)));
        if v.map_or(true, |v| v >= level) {
            return PrimeTreeVertex { level, t, a: vec![0; n] };
        }
        let ell = b.denom_exp;
        let a = if ell <= t {
            let mut a = b.numer.clone();
            for _ in ell..t {
                a = self.field.mul_alpha(&a);
            }
            a.coords
        } else {
            // a·α^s + λ = numer with λ ∈ 𝔭^J, s = ℓ − t, J = level + ℓk
            let s = ell - t;
            let j = (level + ell as i64 * self.k()) as u32;
            let mut rows = self.field.int_power(s);
            rows.extend(self.prime.power(&self.field, j).basis);
            let coeffs = solve_integer_combination(&b.numer.coords, &rows)
                .expect("numerator lies in alpha^s O + p^J by the choice of t");
            coeffs[..n].to_vec()
        };
        let e = (level + t as i64 * self.k()) as u32;
        let a = self.prime.power(&self.field, e).reduce(&a);
        PrimeTreeVertex { level, t, a }
    }

    pub fn rep(&self, v: &PrimeTreeVertex) -> XFraction {
        self.field.xf_new(OrderElement::new(v.a.clone()), v.t)
    }

    pub fn base(&self) -> PrimeTreeVertex {
        self.canonical(0, &self.field.xf_zero())
    }

    /// Level in units of `step`.
    pub fn busemann(&self, v: &PrimeTreeVertex) -> i64 {
        v.level.div_euclid(self.step as i64)
    }

    pub fn parent(&self, v: &PrimeTreeVertex) -> PrimeTreeVertex {
        self.canonical(v.level - self.step as i64, &self.rep(v))
    }

    pub fn children(&self, v: &PrimeTreeVertex) -> Vec<PrimeTreeVertex> {
        let t = self.min_t(v.level);
        let e = (v.level + t as i64 * self.k()) as u32;
        let outer = self.prime.power(&self.field, e).basis;
        let inner = self.prime.power(&self.field, e + self.step).basis;
        let rep = self.rep(v);
        quotient_reps(&outer, &inner)
            .into_iter()
            .map(|c| {
                let c = self.field.xf_new(OrderElement::new(c), t);
                self.canonical(v.level + self.step as i64, &self.field.xf_add(&rep, &c))
            })
            .collect()
    }

    pub fn neighbors(&self, v: &PrimeTreeVertex) -> Vec<PrimeTreeVertex> {
        let mut out = vec![self.parent(v)];
        out.extend(self.children(v));
        out
    }

    pub fn act_gamma(&self, g: &GammaElement, v: &PrimeTreeVertex) -> PrimeTreeVertex {
        let moved = self.field.xf_add(&self.field.xf_mul_x_pow(&self.rep(v), g.k), &g.b);
        self.canonical(v.level + g.k * self.k(), &moved)
    }

    /// c ↦ a·c + b shifts the level by v_𝔭(a).
    pub fn act_affine(&self, g: &AffineMap, v: &PrimeTreeVertex) -> PrimeTreeVertex {
        let shift = self.valuation(&g.a).expect("multiplier is nonzero");
        let moved = self.field.xf_add(&self.field.xf_mul(&g.a, &self.rep(v)), &g.b);
        self.canonical(v.level + shift, &moved)
    }

    pub fn ball(&self, center: &PrimeTreeVertex, radius: u32) -> Vec<PrimeTreeVertex> {
        let mut seen = HashSet::new();
        let mut order = Vec::new();
        let mut queue = VecDeque::new();
        seen.insert(center.clone());
        queue.push_back((center.clone(), 0u32));
        while let Some((v, r)) = queue.pop_front() {
            order.push(v.clone());
            if r < radius {
                for w in self.neighbors(&v) {
                    if seen.insert(w.clone()) {
                        queue.push_back((w, r + 1));
                    }
                }
            }
        }
        order
    }

    /// Type I, II and III generators of the group acting on T_{𝔭^κ}:
    /// a power of α with valuation divisible by κ, integers prime to p, and
    /// translations by order elements.
    pub fn power_group_generators<R: Rng>(&self, kappa: u32, rng: &mut R, count: usize) -> Vec<AffineMap> {
        let f = &self.field;
        let n = f.degree();
        let mut j = 1u32;
        while (j as i64 * self.k()) % kappa as i64 != 0 {
            j += 1;
        }
        let type_one = f.xf_from_order(f.alpha_pow_elem(j));
        let units: Vec<i128> = (2..50)
            .filter(|c| c % self.prime.p as i128 != 0)
            .flat_map(|c| [c, -c])
            .take(8)
            .collect();
        (0..count)
            .map(|i| match i % 3 {
                0 => AffineMap { a: type_one.clone(), b: f.xf_zero() },
                1 => AffineMap { a: f.xf_int(units[rng.gen_range(0..units.len())]), b: f.xf_zero() },
                _ => {
                    let c: Vec<i128> = (0..n).map(|_| rng.gen_range(-9..=9)).collect();
                    AffineMap { a: f.xf_int(1), b: f.xf_from_order(OrderElement::new(c)) }
                }
            })
            .collect()
    }
}

/// The coarsening T_𝔭 → T_{𝔭^κ}: level P ↦ ⌊P/κ⌋, class reduced to level
/// ⌊P/κ⌋·κ. Slabs κm ≤ P < κ(m+1) collapse onto one vertex.
#[derive(Clone, Debug)]
pub struct FoldMap {
    pub kappa: u32,
    pub pairs: Vec<(PrimeTreeVertex, PrimeTreeVertex)>,
    /// parent→child edges of the source ball as indices into `pairs`
    pub edges: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FoldValenceReport {
    pub expected: usize,
    pub interior_vertices: usize,
    pub min_valence: usize,
    pub max_valence: usize,
    pub neighbours_match: bool,
}

impl FoldValenceReport {
    pub fn pass(&self) -> bool {
        self.interior_vertices > 0
            && self.neighbours_match
            && self.min_valence == self.expected
            && self.max_valence == self.expected
    }
}

pub fn fold_vertex(source: &PrimeTree, kappa: u32, v: &PrimeTreeVertex) -> PrimeTreeVertex {
    let level = v.level.div_euclid(kappa as i64) * kappa as i64;
    source.canonical(level, &source.rep(v))
}

pub fn fold_to_power(source: &PrimeTree, kappa: u32, radius: u32) -> FoldMap {
    assert_eq!(source.step, 1, "folding starts from T_p");
    let ball = source.ball(&source.base(), radius);
    let index: HashMap<PrimeTreeVertex, usize> =
        ball.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
    let edges = ball
        .iter()
        .enumerate()
        .filter_map(|(i, v)| index.get(&source.parent(v)).map(|&p| (p, i)))
        .collect();
    let pairs = ball
        .into_iter()
        .map(|v| {
            let w = fold_vertex(source, kappa, &v);
            (v, w)
        })
        .collect();
    FoldMap { kappa, pairs, edges }
}

impl FoldMap {
    /// Valence of image vertices whose full neighbourhood in T_{𝔭^κ} lies in
    /// the image; the image edges around them must be exactly those neighbours.
    pub fn valence_report(&self, target: &PrimeTree) -> FoldValenceReport {
        assert_eq!(target.step, self.kappa);
        let image: HashSet<&PrimeTreeVertex> = self.pairs.iter().map(|(_, w)| w).collect();
        let mut adj: HashMap<&PrimeTreeVertex, HashSet<&PrimeTreeVertex>> = HashMap::new();
        for &(p, c) in &self.edges {
            let (a, b) = (&self.pairs[p].1, &self.pairs[c].1);
            if a != b {
                adj.entry(a).or_default().insert(b);
                adj.entry(b).or_default().insert(a);
            }
        }
        let expected = target.prime.norm().pow(self.kappa) as usize + 1;
        let mut report = FoldValenceReport {
            expected,
            interior_vertices: 0,
            min_valence: usize::MAX,
            max_valence: 0,
            neighbours_match: true,
        };
        for w in &image {
            let true_nbrs = target.neighbors(w);
            if !true_nbrs.iter().all(|u| image.contains(u)) {
                continue;
            }
            let got = adj.get(*w).cloned().unwrap_or_default();
            let want: HashSet<&PrimeTreeVertex> = true_nbrs.iter().collect();
            report.neighbours_match &= got == want;
            report.interior_vertices += 1;
            report.min_valence = report.min_valence.min(got.len());
            report.max_valence = report.max_valence.max(got.len());
        }
        report
    }

    /// fold(g·v) = g·fold(v) for one group element and one source vertex.
    pub fn equivariant_at(
        &self,
        source: &PrimeTree,
        target: &PrimeTree,
        g: &AffineMap,
        v: &PrimeTreeVertex,
    ) -> bool {
        let lhs = fold_vertex(source, self.kappa, &source.act_affine(g, v));
        let rhs = target.act_affine(g, &fold_vertex(source, self.kappa, v));
        lhs == rhs
    }
}

/// Tuples of per-prime vertices at a common level n.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DiagonalVertex {
    pub level: i64,
    pub parts: Vec<PrimeTreeVertex>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagonalReport {
    pub radius: u32,
    pub primes: Vec<(i64, u32)>,
    pub direct_vertices: usize,
    pub diagonal_vertices: usize,
    pub edges: usize,
    pub valence: usize,
    pub isomorphic: bool,
    pub equivariance_checks: usize,
    pub equivariance_failures: usize,
    /// direct vertex label → per-prime keys
    pub table: Vec<(String, Vec<String>)>,
}

impl DiagonalReport {
    pub fn pass(&self) -> bool {
        self.isomorphic && self.equivariance_failures == 0
    }
}

struct Diagonal {
    trees: Vec<PrimeTree>,
}

impl Diagonal {
    fn of(&self, tree: &DTree, v: &TreeVertex) -> DiagonalVertex {
        let b = tree.element(v);
        DiagonalVertex {
            level: v.height,
            parts: self
                .trees
                .iter()
                .map(|t| t.canonical(v.height * t.step as i64, &b))
                .collect(),
        }
    }

    fn parent(&self, v: &DiagonalVertex) -> DiagonalVertex {
        DiagonalVertex {
            level: v.level - 1,
            parts: self.trees.iter().zip(&v.parts).map(|(t, p)| t.parent(p)).collect(),
        }
    }

    fn children(&self, v: &DiagonalVertex) -> Vec<DiagonalVertex> {
        let mut combos: Vec<Vec<PrimeTreeVertex>> = vec![Vec::new()];
        for (t, p) in self.trees.iter().zip(&v.parts) {
            let kids = t.children(p);
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    kids.iter().map(move |k| {
                        let mut c = c.clone();
                        c.push(k.clone());
                        c
                    })
                })
                .collect();
        }
        combos
            .into_iter()
            .map(|parts| DiagonalVertex { level: v.level + 1, parts })
            .collect()
    }

    fn act(&self, g: &GammaElement, v: &DiagonalVertex) -> DiagonalVertex {
        DiagonalVertex {
            level: v.level + g.k,
            parts: self.trees.iter().zip(&v.parts).map(|(t, p)| t.act_gamma(g, p)).collect(),
        }
    }
}

/// Compare the radius ball of T_d with the radius ball of the diagonal
/// subtree of ∏ T_{𝔭ᵢ^{kᵢ}} under b ↦ (b, …, b), and check Γ-equivariance
/// on `samples` random pairs.
pub fn diagonal_iso_check<R: Rng>(
    field: Arc<FieldDescriptor>,
    radius: u32,
    samples: usize,
    rng: &mut R,
) -> Result<DiagonalReport, TreeError> {
    let primes = factor_x(&field).map_err(|e| TreeError::FactorizationUnavailable(e.to_string()))?;
    let diag = Diagonal {
        trees: primes
            .iter()
            .map(|p| PrimeTree::new(field.clone(), p.clone(), p.k))
            .collect(),
    };
    let tree = DTree::new(field.clone());

    // direct ball and its image
    let direct = tree.ball(&tree.base(), radius);
    let images: Vec<DiagonalVertex> = direct.iter().map(|v| diag.of(&tree, v)).collect();
    let image_set: HashSet<&DiagonalVertex> = images.iter().collect();
    let injective = image_set.len() == direct.len();

    // independent BFS in the diagonal subtree
    let start = diag.of(&tree, &tree.base());
    let mut seen: HashSet<DiagonalVertex> = HashSet::new();
    let mut queue = VecDeque::new();
    let mut diag_edges: HashSet<(DiagonalVertex, DiagonalVertex)> = HashSet::new();
    let mut valence = usize::MAX;
    seen.insert(start.clone());
    queue.push_back((start, 0u32));
    while let Some((v, r)) = queue.pop_front() {
        if r == radius {
            continue;
        }
        let parent = diag.parent(&v);
        let kids = diag.children(&v);
        valence = valence.min(kids.len() + 1);
        diag_edges.insert((parent.clone(), v.clone()));
        for k in &kids {
            diag_edges.insert((v.clone(), k.clone()));
        }
        for w in std::iter::once(parent).chain(kids) {
            if seen.insert(w.clone()) {
                queue.push_back((w, r + 1));
            }
        }
    }
    let same_vertices = seen.len() == image_set.len() && seen.iter().all(|v| image_set.contains(v));

    let direct_edges = tree.edges_within(&direct);
    let mapped_edges: HashSet<(DiagonalVertex, DiagonalVertex)> = direct_edges
        .iter()
        .map(|(p, c)| (diag.of(&tree, p), diag.of(&tree, c)))
        .collect();
    let diag_edges_inside: HashSet<(DiagonalVertex, DiagonalVertex)> = diag_edges
        .into_iter()
        .filter(|(a, b)| seen.contains(a) && seen.contains(b))
        .collect();
    let same_edges = mapped_edges == diag_edges_inside;

    let mut failures = 0;
    for _ in 0..samples {
        let g = sampling::gamma_element(&field, rng, 4, 2, 3);
        let v = &direct[rng.gen_range(0..direct.len())];
        if diag.of(&tree, &tree.act_vertex(&g, v)) != diag.act(&g, &diag.of(&tree, v)) {
            failures += 1;
        }
    }

    let table = direct
        .iter()
        .zip(&images)
        .map(|(v, w)| {
            (
                v.to_string(),
                w.parts
                    .iter()
                    .map(|p| format!("({}|{}:{:?})", p.level, p.t, p.a))
                    .collect(),
            )
        })
        .collect();

    Ok(DiagonalReport {
        radius,
        primes: primes.iter().map(|p| (p.p, p.k)).collect(),
        direct_vertices: direct.len(),
        diagonal_vertices: seen.len(),
        edges: mapped_edges.len(),
        valence: if valence == usize::MAX { 0 } else { valence },
        isomorphic: injective && same_vertices && same_edges,
        equivariance_checks: samples,
        equivariance_failures: failures,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numberfield::define_field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prime_tree(coeffs: &[i128], step: u32) -> PrimeTree {
        let f = Arc::new(define_field(coeffs).unwrap());
        let p = factor_x(&f).unwrap().remove(0);
        PrimeTree::new(f, p, step)
    }

    #[test]
    fn valence_of_prime_tree() {
        let t = prime_tree(&[-2], 1);
        let b = t.base();
        assert_eq!(t.children(&b).len(), 2);
        for c in t.children(&b) {
            assert_eq!(t.parent(&c), b);
        }
        assert_eq!(t.neighbors(&t.parent(&b)).len(), 3);
    }

    #[test]
    fn canonical_ignores_representative() {
        let t = prime_tree(&[-2], 1);
        let f = &t.field;
        // 1/2 and 1/2 + 4 agree modulo 2^2
        let a = f.xf_new(OrderElement::new(vec![1]), 1);
        let b = f.xf_add(&a, &f.xf_int(4));
        assert_eq!(t.canonical(2, &a), t.canonical(2, &b));
        assert_ne!(t.canonical(3, &a), t.canonical(3, &b));
    }

    #[test]
    fn fold_square_has_valence_five() {
        let src = prime_tree(&[-2], 1);
        let dst = PrimeTree::new(src.field.clone(), src.prime.clone(), 2);
        let fold = fold_to_power(&src, 2, 6);
        let rep = fold.valence_report(&dst);
        assert!(rep.pass(), "{rep:?}");
        assert_eq!(rep.expected, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for g in src.power_group_generators(2, &mut rng, 9) {
            for (v, _) in fold.pairs.iter().take(20) {
                assert!(fold.equivariant_at(&src, &dst, &g, v));
            }
        }
    }

    #[test]
    fn diagonal_of_x2_minus_6() {
        let f = Arc::new(define_field(&[-6, 0]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rep = diagonal_iso_check(f, 3, 30, &mut rng).unwrap();
        assert!(rep.pass(), "{:?}", (rep.isomorphic, rep.equivariance_failures));
        assert_eq!(rep.valence, 7);
    }
}
