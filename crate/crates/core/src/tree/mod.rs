//! The regular (d+1)-valent tree T_d with vertices (n, b mod xⁿO), the end e_x
//! at n → −∞ and the action of Γ by (b₀, k)·(n, [b]) = (n + k, [x^k b + b₀]).

mod finite;
mod prime;

pub use finite::{binary_slab, star, FiniteTree};
pub use prime::{
    diagonal_iso_check, fold_to_power, AffineMap, DiagonalReport, FoldMap, FoldValenceReport,
    PrimeTree, PrimeTreeVertex,
};

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::{q_vec_mat, Q};
use crate::numberfield::{FieldDescriptor, GammaElement, OrderElement, XFraction};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("edges {0:?} and {1:?} do not share a vertex")]
    NotIncident((usize, usize), (usize, usize)),
    #[error("edge {0:?} is not in the tree")]
    NoSuchEdge((usize, usize)),
    #[error("quotient graph is not a tree")]
    NotATree,
    #[error("prime factorization of alpha is unavailable: {0}")]
    FactorizationUnavailable(String),
    #[error("radius {0} exceeds the budget {1}")]
    BudgetExceeded(u32, u32),
}

/// A vertex (n, [b]) with [b] the canonical representative of b mod xⁿO.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeVertex {
    pub height: i64,
    pub coset: Vec<Q>,
}

impl fmt::Display for TreeVertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coset.iter().map(|q| q.to_string()).collect();
        write!(f, "({}|{})", self.height, parts.join(","))
    }
}

/// T_d for a fixed field, with the residue representatives of O/xO cached.
#[derive(Clone, Debug)]
pub struct DTree {
    pub field: Arc<FieldDescriptor>,
    residues: Vec<Vec<Q>>,
}

impl DTree {
    pub fn new(field: Arc<FieldDescriptor>) -> Self {
        // coset representatives of O/xO from the HNF box of the lattice A·ℤⁿ
        let h = crate::linalg::hnf(field.companion());
        let n = field.degree();
        let mut reps: Vec<Vec<i128>> = vec![vec![0; n]];
        for i in 0..n {
            reps = reps
                .into_iter()
                .flat_map(|r| {
                    (0..h[i][i]).map(move |t| {
                        let mut y = r.clone();
                        y[i] = t;
                        y
                    })
                })
                .collect();
        }
        let residues = reps
            .iter()
            .map(|y| y.iter().map(|c| Q::from_integer(*c)).collect())
            .collect();
        Self { field, residues }
    }

    pub fn residues(&self) -> &[Vec<Q>] {
        &self.residues
    }

    pub fn vertex(&self, n: i64, b: &XFraction) -> TreeVertex {
        let c = self.field.xf_coords(b);
        TreeVertex { height: n, coset: self.field.coset_reduce_coords(&c, n) }
    }

    pub fn vertex_from_coords(&self, n: i64, c: &[Q]) -> TreeVertex {
        TreeVertex { height: n, coset: self.field.coset_reduce_coords(c, n) }
    }

    pub fn base(&self) -> TreeVertex {
        self.vertex(0, &self.field.xf_zero())
    }

    /// The canonical representative as a ring element.
    pub fn element(&self, v: &TreeVertex) -> XFraction {
        self.field.xf_from_coords(&v.coset).expect("coset representatives lie in the ring")
    }

    pub fn parent(&self, v: &TreeVertex) -> TreeVertex {
        self.vertex_from_coords(v.height - 1, &v.coset)
    }

    /// The ancestor at height `h ≤ v.height`.
    pub fn ancestor_at(&self, v: &TreeVertex, h: i64) -> TreeVertex {
        debug_assert!(h <= v.height);
        self.vertex_from_coords(h, &v.coset)
    }

    pub fn children(&self, v: &TreeVertex) -> Vec<TreeVertex> {
        let an = self.field.power(v.height);
        self.residues
            .iter()
            .map(|c| {
                let shifted = q_vec_mat(c, &an);
                let sum: Vec<Q> = v.coset.iter().zip(&shifted).map(|(a, b)| *a + b).collect();
                self.vertex_from_coords(v.height + 1, &sum)
            })
            .collect()
    }

    /// Child along the zero residue, (n+1, [b]).
    pub fn first_child(&self, v: &TreeVertex) -> TreeVertex {
        self.vertex_from_coords(v.height + 1, &v.coset)
    }

    pub fn neighbors(&self, v: &TreeVertex) -> Vec<TreeVertex> {
        let mut out = vec![self.parent(v)];
        out.extend(self.children(v));
        out
    }

    pub fn act_vertex(&self, g: &GammaElement, v: &TreeVertex) -> TreeVertex {
        let moved = self
            .field
            .affine_action(g, &v.coset)
            .expect("vertex coordinates have the field dimension");
        self.vertex_from_coords(v.height + g.k, &moved)
    }

    pub fn busemann(&self, v: &TreeVertex) -> i64 {
        v.height
    }

    /// Highest common ancestor of u and v.
    pub fn meet(&self, u: &TreeVertex, v: &TreeVertex) -> TreeVertex {
        let mut h = u.height.min(v.height);
        loop {
            let a = self.ancestor_at(u, h);
            let b = self.ancestor_at(v, h);
            if a == b {
                return a;
            }
            h -= 1;
        }
    }

    pub fn tree_distance(&self, u: &TreeVertex, v: &TreeVertex) -> i64 {
        let m = self.meet(u, v).height;
        (u.height - m) + (v.height - m)
    }

    /// The element h = (b, n) with h·base = v.
    pub fn translator(&self, v: &TreeVertex) -> GammaElement {
        self.field.gamma(self.element(v), v.height)
    }

    /// Basis (x^n eᵢ, 0) of the stabilizer of v = (n, [b]), i.e. the
    /// conjugate of the base stabilizer {(eᵢ, 0)} by h = (b, n).
    pub fn stabilizer_basis(&self, v: &TreeVertex) -> Vec<GammaElement> {
        let h = self.translator(v);
        let hinv = self.field.gamma_inv(&h);
        (0..self.field.degree())
            .map(|i| {
                let e = OrderElement::basis(self.field.degree(), i);
                let e = self.field.gamma(self.field.xf_from_order(e), 0);
                self.field.gamma_mul(&self.field.gamma_mul(&h, &e), &hinv)
            })
            .collect()
    }

    pub fn stabilizer_test(&self, g: &GammaElement, v: &TreeVertex) -> bool {
        self.act_vertex(g, v) == *v
    }

    /// g = h_v·h_u⁻¹ with g·u = v.
    pub fn transitive_witness(&self, u: &TreeVertex, v: &TreeVertex) -> GammaElement {
        let hu = self.translator(u);
        let hv = self.translator(v);
        self.field.gamma_mul(&hv, &self.field.gamma_inv(&hu))
    }

    /// All vertices within `radius` of `center`, in BFS order.
    pub fn ball(&self, center: &TreeVertex, radius: u32) -> Vec<TreeVertex> {
        let mut seen: HashSet<TreeVertex> = HashSet::new();
        let mut order = Vec::new();
        let mut queue = VecDeque::new();
        seen.insert(center.clone());
        queue.push_back((center.clone(), 0u32));
        while let Some((v, r)) = queue.pop_front() {
            order.push(v.clone());
            if r == radius {
                continue;
            }
            for w in self.neighbors(&v) {
                if seen.insert(w.clone()) {
                    queue.push_back((w, r + 1));
                }
            }
        }
        order
    }

    /// Parent→child edges among a vertex set.
    pub fn edges_within(&self, vertices: &[TreeVertex]) -> Vec<(TreeVertex, TreeVertex)> {
        let set: HashSet<&TreeVertex> = vertices.iter().collect();
        vertices
            .iter()
            .filter_map(|v| {
                let p = self.parent(v);
                set.contains(&p).then(|| (p, v.clone()))
            })
            .collect()
    }

    /// Descendants of the base to depth `radius` plus its ancestor chain, as a
    /// DOT digraph with edges oriented parent→child.
    pub fn export_dot(&self, radius: u32) -> String {
        let base = self.base();
        let mut vertices = vec![base.clone()];
        let mut layer = vec![base.clone()];
        for _ in 0..radius {
            layer = layer.iter().flat_map(|v| self.children(v)).collect();
            vertices.extend(layer.iter().cloned());
        }
        let mut cur = base;
        for _ in 0..radius {
            cur = self.parent(&cur);
            vertices.push(cur.clone());
        }
        vertices.sort();
        let edges = self.edges_within(&vertices);
        let labels: Vec<String> = vertices.iter().map(|v| v.to_string()).collect();
        let index = |v: &TreeVertex| vertices.binary_search(v).expect("edge endpoints are vertices");
        let edges: Vec<(usize, usize)> = edges.iter().map(|(p, c)| (index(p), index(c))).collect();
        finite::dot(&labels, &edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numberfield::define_field;

    fn t2() -> DTree {
        DTree::new(Arc::new(define_field(&[-2]).unwrap()))
    }

    #[test]
    fn children_of_base_linear() {
        let t = t2();
        let mut kids = t.children(&t.base());
        kids.sort();
        let f = &t.field;
        assert_eq!(kids, vec![t.vertex(1, &f.xf_int(0)), t.vertex(1, &f.xf_int(1))]);
        assert_eq!(t.parent(&t.vertex(1, &f.xf_int(1))), t.base());
    }

    #[test]
    fn distances_linear() {
        let t = t2();
        let f = &t.field;
        assert_eq!(t.tree_distance(&t.base(), &t.vertex(2, &f.xf_int(1))), 2);
        assert_eq!(t.tree_distance(&t.vertex(1, &f.xf_int(0)), &t.vertex(1, &f.xf_int(1))), 2);
    }

    #[test]
    fn horoball_element_moves_height_one() {
        let t = t2();
        let f = &t.field;
        let g = f.gamma(f.xf_int(1), 0);
        assert_eq!(t.act_vertex(&g, &t.base()), t.base());
        assert_eq!(t.act_vertex(&g, &t.vertex(1, &f.xf_int(0))), t.vertex(1, &f.xf_int(1)));
    }
}
