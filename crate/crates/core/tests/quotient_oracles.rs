use std::collections::{BTreeSet, HashSet};

use fh_workbench::finitequotient::{
    build_quotient, gl_order, hgp_check, is_hyperelementary, reduce_companion, subgroup_classes, FiniteAffineGroup,
    FiniteGroup, PermutationGroup, DEFAULT_GROUP_BOUND,
};
use fh_workbench::numberfield::{define_field, OrderElement};
use fh_workbench::par::Exec;
use proptest::prelude::*;

fn generated<G: FiniteGroup>(g: &G, gens: &[usize]) -> BTreeSet<usize> {
    let mut set = BTreeSet::from([g.identity()]);
    let mut frontier = vec![g.identity()];
    while let Some(x) = frontier.pop() {
        for &s in gens {
            let y = g.mul(x, s);
            if set.insert(y) {
                frontier.push(y);
            }
        }
    }
    set
}

/// Every subgroup, by closing {⟨H, x⟩} under adjoining one element at a time.
fn all_subgroups<G: FiniteGroup>(g: &G) -> HashSet<BTreeSet<usize>> {
    let mut found: HashSet<BTreeSet<usize>> = HashSet::new();
    let mut layer: Vec<BTreeSet<usize>> = vec![BTreeSet::from([g.identity()])];
    found.insert(layer[0].clone());
    while !layer.is_empty() {
        let mut next = Vec::new();
        for h in &layer {
            for x in 0..g.order() {
                if h.contains(&x) {
                    continue;
                }
                let mut gens: Vec<usize> = h.iter().cloned().collect();
                gens.push(x);
                let k = generated(g, &gens);
                if found.insert(k.clone()) {
                    next.push(k);
                }
            }
        }
        layer = next;
    }
    found
}

fn conjugates<G: FiniteGroup>(g: &G, h: &[usize]) -> HashSet<BTreeSet<usize>> {
    (0..g.order()).map(|x| h.iter().map(|a| g.conj(x, *a)).collect()).collect()
}

/// H has a normal cyclic C with H/C a p-group and p ∤ |C|, checked against
/// every element of H and every conjugator in H.
fn hyperelementary_brute<G: FiniteGroup>(g: &G, h: &[usize]) -> bool {
    let order = h.len();
    h.iter().any(|&c| {
        let cyc = generated(g, &[c]);
        if !h.iter().all(|&x| cyc.contains(&g.conj(x, c))) {
            return false;
        }
        let q = order / cyc.len();
        if q == 1 {
            return true;
        }
        let p = (2..=q).find(|p| q % p == 0).unwrap();
        let mut r = q;
        while r % p == 0 {
            r /= p;
        }
        r == 1 && cyc.len() % p != 0
    })
}

fn check_classes_partition<G: FiniteGroup>(g: &G) {
    let classes = subgroup_classes(g, DEFAULT_GROUP_BOUND, Exec::Sequential).unwrap();
    let oracle = all_subgroups(g);
    let mut covered: HashSet<BTreeSet<usize>> = HashSet::new();
    for c in &classes {
        assert_eq!(generated(g, &c.elements), c.elements.iter().cloned().collect(), "class {} is closed", c.class_id);
        let conj = conjugates(g, &c.elements);
        assert_eq!(conj.len(), c.class_size, "class {} size", c.class_id);
        for k in conj {
            assert!(covered.insert(k), "class {} overlaps another class", c.class_id);
        }
    }
    assert_eq!(covered, oracle);
}

fn check_hyperelementary<G: FiniteGroup>(g: &G) {
    for c in subgroup_classes(g, DEFAULT_GROUP_BOUND, Exec::Sequential).unwrap() {
        let fast = is_hyperelementary(g, &c.generators, &c.elements);
        assert_eq!(fast.is_some(), hyperelementary_brute(g, &c.elements), "class {} of order {}", c.class_id, c.order());
        if let Some(w) = fast {
            let cyc = generated(g, &[w.cyclic_generator]);
            assert_eq!(cyc.len(), w.cyclic_order);
            assert!(c.elements.iter().all(|&x| cyc.contains(&g.conj(x, w.cyclic_generator))));
            let mut q = c.order() / w.cyclic_order;
            while q % w.p as usize == 0 {
                q /= w.p as usize;
            }
            assert_eq!(q, 1);
            assert_ne!(w.cyclic_order % w.p as usize, 0);
        }
    }
}

fn affine(coeffs: &[i128], s: i64, r: i64) -> FiniteAffineGroup {
    let f = define_field(coeffs).unwrap();
    FiniteAffineGroup::new(reduce_companion(&f, s), s, r).unwrap()
}

#[test]
fn classes_partition_the_subgroup_lattice() {
    check_classes_partition(&PermutationGroup::symmetric3());
    check_classes_partition(&PermutationGroup::alternating4());
    check_classes_partition(&PermutationGroup::generated(4, &[vec![1, 0, 2, 3], vec![1, 2, 3, 0]]));
    check_classes_partition(&FiniteAffineGroup::new(vec![vec![2]], 5, 4).unwrap());
    check_classes_partition(&affine(&[-2], 9, 6));
    check_classes_partition(&affine(&[-2, 0], 3, 4));
    check_classes_partition(&affine(&[-2, 0], 3, 8));
    check_classes_partition(&affine(&[2, -4], 3, 8));
}

#[test]
fn five_by_four_affine_group_has_expected_lattice() {
    let g = FiniteAffineGroup::new(vec![vec![2]], 5, 4).unwrap();
    assert_eq!(g.order(), 20);
    let classes = subgroup_classes(&g, DEFAULT_GROUP_BOUND, Exec::Sequential).unwrap();
    let orders: Vec<usize> = classes.iter().map(|c| c.order()).collect();
    assert_eq!(orders, vec![1, 2, 4, 5, 10, 20]);
}

#[test]
fn hyperelementary_matches_definition() {
    check_hyperelementary(&PermutationGroup::symmetric3());
    check_hyperelementary(&PermutationGroup::alternating4());
    check_hyperelementary(&PermutationGroup::generated(4, &[vec![1, 0, 2, 3], vec![1, 2, 3, 0]]));
    check_hyperelementary(&FiniteAffineGroup::new(vec![vec![2]], 5, 4).unwrap());
    check_hyperelementary(&affine(&[-2], 9, 6));
    check_hyperelementary(&affine(&[-2, 0], 3, 8));
    check_hyperelementary(&affine(&[-2, 0], 3, 48));
}

#[test]
fn gl_order_matches_matrix_count() {
    for s in 2u64..=40 {
        let units = (1..s).filter(|a| num_integer::gcd(*a, s) == 1).count() as u128;
        assert_eq!(gl_order(1, s), Some(units), "n=1 s={s}");
    }
    for s in 2u64..=8 {
        let mut count = 0u128;
        for a in 0..s {
            for b in 0..s {
                for c in 0..s {
                    for d in 0..s {
                        let det = ((a * d) as i64 - (b * c) as i64).rem_euclid(s as i64) as u64;
                        count += u128::from(num_integer::gcd(det, s) == 1);
                    }
                }
            }
        }
        assert_eq!(gl_order(2, s), Some(count), "n=2 s={s}");
    }
    assert_eq!(gl_order(2, 3), Some(48));
}

#[test]
fn trivial_bound_always_passes() {
    for s in [3i64, 5, 7, 9, 11] {
        let f = define_field(&[-2]).unwrap();
        let r = gl_order(1, s as u64).unwrap() as i64;
        let q = build_quotient(&f, s, r).unwrap();
        assert!(hgp_check(&q.group, 1, DEFAULT_GROUP_BOUND, Exec::Sequential).unwrap().pass(), "s={s}");
    }
    let f = define_field(&[-2, 0]).unwrap();
    let q = build_quotient(&f, 3, 48).unwrap();
    assert!(hgp_check(&q.group, 1, DEFAULT_GROUP_BOUND, Exec::Sequential).unwrap().pass());
}

#[test]
fn sequential_and_parallel_enumeration_agree() {
    let g = affine(&[-2, 0], 3, 8);
    let a = subgroup_classes(&g, DEFAULT_GROUP_BOUND, Exec::Sequential).unwrap();
    let b = subgroup_classes(&g, DEFAULT_GROUP_BOUND, Exec::Parallel).unwrap();
    let key = |v: &[fh_workbench::finitequotient::SubgroupRecord]| {
        v.iter().map(|c| (c.elements.clone(), c.class_size)).collect::<Vec<_>>()
    };
    assert_eq!(key(&a), key(&b));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn reduction_is_a_homomorphism(
        fi in 0usize..3,
        a in (prop::collection::vec(-50i128..50, 2), 0u32..4, -9i64..9),
        b in (prop::collection::vec(-50i128..50, 2), 0u32..4, -9i64..9),
    ) {
        let (coeffs, s, r): (&[i128], i64, i64) = [(&[-2i128][..], 3, 2), (&[-2, 0][..], 3, 48), (&[2, -4][..], 5, 24)][fi];
        let f = define_field(coeffs).unwrap();
        let q = build_quotient(&f, s, r).unwrap();
        let n = f.degree();
        let mk = |(c, l, k): &(Vec<i128>, u32, i64)| f.gamma(f.xf_new(OrderElement::new(c[..n].to_vec()), *l), *k);
        let (g1, g2) = (mk(&a), mk(&b));
        let lhs = q.reduce_element(&f.gamma_mul(&g1, &g2));
        let rhs = q.group.mul_res(&q.reduce_element(&g1), &q.reduce_element(&g2));
        prop_assert_eq!(lhs, rhs);
    }
}

#[test]
fn reduction_is_surjective() {
    for (coeffs, s, r) in [(&[-2i128][..], 3i64, 2i64), (&[-2, 0][..], 3, 48), (&[-6, 0][..], 7, 4), (&[2, -4][..], 5, 24)] {
        let f = define_field(coeffs).unwrap();
        let q = build_quotient(&f, s, r).unwrap();
        assert_eq!(q.image_of_generators(&f), q.group.order(), "{coeffs:?} s={s} r={r}");
    }
}
