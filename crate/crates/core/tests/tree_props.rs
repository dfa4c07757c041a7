use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use fh_workbench::linalg::Q;
use fh_workbench::numberfield::{define_field, FieldDescriptor, GammaElement, OrderElement};
use fh_workbench::tree::{DTree, TreeVertex};
use proptest::prelude::*;

const FIELDS: [&[i128]; 4] = [&[-2], &[-2, 0], &[-6, 0], &[2, -4]];

fn field(i: usize) -> Arc<FieldDescriptor> {
    Arc::new(define_field(FIELDS[i]).unwrap())
}

fn gamma(f: &FieldDescriptor, coords: &[i128], ell: u32, k: i64) -> GammaElement {
    let n = f.degree();
    let numer = OrderElement::new(coords.iter().cycle().take(n).cloned().collect());
    f.gamma(f.xf_new(numer, ell), k)
}

fn arb_gamma() -> impl Strategy<Value = (Vec<i128>, u32, i64)> {
    (prop::collection::vec(-30i128..30, 2), 0u32..4, -3i64..4)
}

/// Count classes of ℤⁿ modulo the lattice x·ℤ[α] by brute force: u ~ v iff
/// (u − v)·adj(A) ≡ 0 mod det A, over a box that covers every class.
fn residue_classes_brute(f: &FieldDescriptor) -> usize {
    let a = f.companion();
    let n = f.degree();
    let (adj, det): (Vec<Vec<i128>>, i128) = match n {
        1 => (vec![vec![1]], a[0][0]),
        2 => (
            vec![vec![a[1][1], -a[0][1]], vec![-a[1][0], a[0][0]]],
            a[0][0] * a[1][1] - a[0][1] * a[1][0],
        ),
        _ => unimplemented!("oracle covers n ≤ 2"),
    };
    let d = det.abs();
    let mut reps: Vec<Vec<i128>> = Vec::new();
    let mut v = vec![0i128; n];
    loop {
        let same = |u: &Vec<i128>| {
            let diff: Vec<i128> = v.iter().zip(u).map(|(x, y)| x - y).collect();
            (0..n).all(|j| (0..n).map(|i| diff[i] * adj[i][j]).sum::<i128>() % d == 0)
        };
        if !reps.iter().any(same) {
            reps.push(v.clone());
        }
        let mut i = 0;
        loop {
            if i == n {
                return reps.len();
            }
            v[i] += 1;
            if v[i] < d {
                break;
            }
            v[i] = 0;
            i += 1;
        }
    }
}

fn bfs_distances(tree: &DTree, center: &TreeVertex, radius: u32) -> HashMap<TreeVertex, i64> {
    let mut dist = HashMap::from([(center.clone(), 0i64)]);
    let mut queue = VecDeque::from([center.clone()]);
    while let Some(v) = queue.pop_front() {
        let dv = dist[&v];
        if dv == radius as i64 {
            continue;
        }
        for w in tree.neighbors(&v) {
            dist.entry(w.clone()).or_insert_with(|| {
                queue.push_back(w.clone());
                dv + 1
            });
        }
    }
    dist
}

#[test]
fn children_match_brute_force_residue_classes() {
    for i in 0..FIELDS.len() {
        let f = field(i);
        let tree = DTree::new(f.clone());
        let expected = residue_classes_brute(&f);
        assert_eq!(expected as i128, f.d().abs());
        for v in tree.ball(&tree.base(), 2) {
            assert_eq!(tree.children(&v).len(), expected, "field {:?} at {v}", FIELDS[i]);
        }
    }
}

#[test]
fn tree_distance_matches_breadth_first_search() {
    for i in 0..FIELDS.len() {
        let tree = DTree::new(field(i));
        let base = tree.base();
        let dist = bfs_distances(&tree, &base, 4);
        for (v, d) in &dist {
            assert_eq!(tree.tree_distance(&base, v), *d, "field {:?} at {v}", FIELDS[i]);
        }
    }
}

#[test]
fn six_children_for_x2_minus_6() {
    let tree = DTree::new(field(2));
    assert_eq!(tree.children(&tree.base()).len(), 6);
    assert_eq!(tree.neighbors(&tree.base()).len(), 7);
}

#[test]
fn dot_export_shapes() {
    let t2 = DTree::new(field(0));
    let dot = t2.export_dot(2);
    assert_eq!(dot.matches("[label=").count(), 1 + 2 + 4 + 2);
    assert_eq!(dot.matches("->").count(), 8);
    assert!(dot.contains("[label=\"(0|0)\"]"));
    let single = t2.export_dot(0);
    assert_eq!(single.matches("[label=").count(), 1);
    assert_eq!(single.matches("->").count(), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn group_law_is_associative_with_inverses(
        fi in 0usize..4, a in arb_gamma(), b in arb_gamma(), c in arb_gamma()
    ) {
        let f = field(fi);
        let (g1, g2, g3) = (gamma(&f, &a.0, a.1, a.2), gamma(&f, &b.0, b.1, b.2), gamma(&f, &c.0, c.1, c.2));
        let left = f.gamma_mul(&f.gamma_mul(&g1, &g2), &g3);
        let right = f.gamma_mul(&g1, &f.gamma_mul(&g2, &g3));
        prop_assert_eq!(left, right);
        prop_assert_eq!(f.gamma_mul(&g1, &f.gamma_inv(&g1)), f.gamma_identity());
    }

    #[test]
    fn fiber_action_is_a_homomorphism(
        fi in 0usize..4, a in arb_gamma(), b in arb_gamma(), w in prop::collection::vec(-20i128..20, 2)
    ) {
        let f = field(fi);
        let (g1, g2) = (gamma(&f, &a.0, a.1, a.2), gamma(&f, &b.0, b.1, b.2));
        let w: Vec<Q> = w.iter().take(f.degree()).map(|x| Q::new(*x, 3)).collect();
        let lhs = f.affine_action(&f.gamma_mul(&g1, &g2), &w).unwrap();
        let rhs = f.affine_action(&g1, &f.affine_action(&g2, &w).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn vertex_action_is_a_height_shifting_isometry(
        fi in 0usize..4, a in arb_gamma(), b in arb_gamma(), pick in (0usize..1000, 0usize..1000)
    ) {
        let f = field(fi);
        let tree = DTree::new(f.clone());
        let ball = tree.ball(&tree.base(), 3);
        let (u, v) = (&ball[pick.0 % ball.len()], &ball[pick.1 % ball.len()]);
        let (g1, g2) = (gamma(&f, &a.0, a.1, a.2), gamma(&f, &b.0, b.1, b.2));
        prop_assert_eq!(
            tree.act_vertex(&f.gamma_mul(&g1, &g2), u),
            tree.act_vertex(&g1, &tree.act_vertex(&g2, u))
        );
        prop_assert_eq!(tree.busemann(&tree.act_vertex(&g1, u)), tree.busemann(u) + g1.k);
        prop_assert_eq!(
            tree.tree_distance(&tree.act_vertex(&g1, u), &tree.act_vertex(&g1, v)),
            tree.tree_distance(u, v)
        );
        prop_assert_eq!(tree.act_vertex(&tree.transitive_witness(u, v), u), v.clone());
        for s in tree.stabilizer_basis(v) {
            prop_assert!(tree.stabilizer_test(&s, v));
        }
    }

    #[test]
    fn base_stabilizer_is_integral_translations(fi in 0usize..4, a in arb_gamma()) {
        let f = field(fi);
        let tree = DTree::new(f.clone());
        let g = gamma(&f, &a.0, a.1, a.2);
        let integral = g.b.denom_exp == 0;
        prop_assert_eq!(tree.act_vertex(&g, &tree.base()) == tree.base(), integral && g.k == 0);
    }
}
