//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use fh_workbench::finitequotient::{
    build_quotient, case_a_certificate, case_b_contraction_probe, find_sr, gl_order, hgp_check, FiniteGroup,
    SearchBounds, DEFAULT_GROUP_BOUND,
};
use fh_workbench::flowspace::{self as fs, QuadratureSpec};
use fh_workbench::geometry::{probe_half_factor, probe_vl, Metric, ModelPoint, TreePoint};
use fh_workbench::linalg::{q_identity, q_mat_mul, to_rational, Q};
use fh_workbench::numberfield::{build_embedding, define_field, AffineElement, FieldDescriptor};
use fh_workbench::par::Exec;
use fh_workbench::sampling;
use fh_workbench::tree::{diagonal_iso_check, fold_to_power, DTree, PrimeTree, TreeVertex};
use fh_workbench::ideals::factor_x;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIELDS: [&[i128]; 4] = [&[-2], &[-2, 0], &[-6, 0], &[2, -4]];
const SAME_FIBER_TOL: f64 = 1e-6;
const HALF_FACTOR_TOL: f64 = 1e-9;
const VL_EPS: f64 = 0.1;
const VL_MAX_THRESHOLD: u32 = 20;
const LPAR_EPS: f64 = 0.2;
const N_MAX: u32 = 64;

type Outcome = Result<String, String>;

fn field(coeffs: &[i128]) -> Arc<FieldDescriptor> {
    Arc::new(define_field(coeffs).expect("shipped field"))
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Classes of ℤⁿ modulo x·ℤ[α] by pairwise comparison over a covering box.
fn residue_classes_brute(f: &FieldDescriptor) -> usize {
    let a = f.companion();
    let n = f.degree();
    let (adj, det): (Vec<Vec<i128>>, i128) = match n {
        1 => (vec![vec![1]], a[0][0]),
        _ => (vec![vec![a[1][1], -a[0][1]], vec![-a[1][0], a[0][0]]], a[0][0] * a[1][1] - a[0][1] * a[1][0]),
    };
    let d = det.abs();
    let box_points: Vec<Vec<i128>> = match n {
        1 => (0..d).map(|i| vec![i]).collect(),
        _ => (0..d).flat_map(|i| (0..d).map(move |j| vec![i, j])).collect(),
    };
    let mut reps: Vec<Vec<i128>> = Vec::new();
    for v in box_points {
        let same = |u: &Vec<i128>| (0..n).all(|j| (0..n).map(|i| (v[i] - u[i]) * adj[i][j]).sum::<i128>() % d == 0);
        if !reps.iter().any(same) {
            reps.push(v);
        }
    }
    reps.len()
}

fn residue_count() -> Outcome {
    let mut seen = Vec::new();
    for coeffs in FIELDS {
        let f = field(coeffs);
        let tree = DTree::new(f.clone());
        let brute = residue_classes_brute(&f);
        for v in tree.ball(&tree.base(), 2) {
            ensure(tree.children(&v).len() == brute, format!("{coeffs:?}: {} children at {v}", tree.children(&v).len()))?;
        }
        ensure(tree.residues().len() == brute, format!("{coeffs:?}: {} residues", tree.residues().len()))?;
        seen.push(brute);
    }
    ensure(seen == [2, 2, 6, 2], format!("counts {seen:?}"))?;
    Ok(format!("children per vertex {seen:?}"))
}

fn action_on_tree() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for coeffs in FIELDS {
        let started = Instant::now();
        let f = field(coeffs);
        let tree = DTree::new(f.clone());
        let base = tree.base();
        let ball: Vec<TreeVertex> = tree.ball(&base, 6);
        for _ in 0..500 {
            let u = &ball[rng.gen_range(0..ball.len())];
            let v = &ball[rng.gen_range(0..ball.len())];
            ensure(tree.act_vertex(&tree.transitive_witness(u, v), u) == *v, format!("{coeffs:?}: witness {u} → {v}"))?;
        }
        for _ in 0..500 {
            let b = sampling::order_element(&f, &mut rng, 50);
            let g = f.gamma(f.xf_from_order(b), 0);
            ensure(tree.act_vertex(&g, &base) == base, format!("{coeffs:?}: integral translation moved the base"))?;
        }
        for i in 0..500 {
            let g = sampling::gamma_element(&f, &mut rng, 50, 3, if i % 2 == 0 { 0 } else { 2 });
            let integral = g.k == 0 && g.b.denom_exp == 0;
            ensure((tree.act_vertex(&g, &base) == base) == integral, format!("{coeffs:?}: {g:?} on the base"))?;
        }
        ensure(started.elapsed() < Duration::from_secs(10), format!("{coeffs:?} took {:?}", started.elapsed()))?;
    }
    Ok("500 witnesses and 2×500 stabilizer samples per field".into())
}

fn folding() -> Outcome {
    let f = field(&[-2]);
    let prime = factor_x(&f).map_err(|e| e.to_string())?.remove(0);
    let src = PrimeTree::new(f.clone(), prime.clone(), 1);
    let dst = PrimeTree::new(f, prime, 2);
    let fold = fold_to_power(&src, 2, 4);
    let report = fold.valence_report(&dst);
    ensure(report.expected == 5 && report.pass() && report.interior_vertices > 0, format!("{report:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let gens = src.power_group_generators(2, &mut rng, 50);
    for g in &gens {
        let v = &fold.pairs[rng.gen_range(0..fold.pairs.len())].0;
        ensure(fold.equivariant_at(&src, &dst, g, v), "fold is not equivariant")?;
    }
    Ok(format!("valence 5 on {} interior vertices, {} equivariance checks", report.interior_vertices, gens.len()))
}

fn diagonal() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let r = diagonal_iso_check(field(&[-6, 0]), 3, 50, &mut rng).map_err(|e| e.to_string())?;
    ensure(r.pass() && r.valence == 7, format!("isomorphic={} valence={} failures={}", r.isomorphic, r.valence, r.equivariance_failures))?;
    Ok(format!("{} vertices, valence {}, {} equivariance checks", r.direct_vertices, r.valence, r.equivariance_checks))
}

fn vertex_distance(tree: &DTree, u: &TreeVertex, v: &TreeVertex) -> i64 {
    let chain = |x: &TreeVertex| {
        let mut out = vec![x.clone()];
        for _ in 0..16 {
            out.push(tree.parent(out.last().unwrap()));
        }
        out
    };
    let (cu, cv) = (chain(u), chain(v));
    cu.iter()
        .enumerate()
        .find_map(|(i, a)| cv.iter().position(|b| b == a).map(|j| (i + j) as i64))
        .expect("common ancestor")
}

fn point_distance(tree: &DTree, p: &TreePoint, q: &TreePoint) -> f64 {
    if p.vertex == q.vertex {
        return (p.t - q.t).abs();
    }
    let ends = |z: &TreePoint| [(z.vertex.clone(), z.t), (tree.parent(&z.vertex), 1.0 - z.t)];
    let mut best = f64::INFINITY;
    for (a, oa) in ends(p) {
        for (b, ob) in ends(q) {
            best = best.min(oa + vertex_distance(tree, &a, &b) as f64 + ob);
        }
    }
    best
}

fn metric_sandwich() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst = 0.0f64;
    let mut margin = f64::INFINITY;
    for coeffs in FIELDS {
        let m = Metric::new(field(coeffs));
        let ball = m.tree().ball(&m.tree().base(), 3);
        for _ in 0..200 {
            let pt = |rng: &mut ChaCha8Rng| TreePoint {
                vertex: ball[rng.gen_range(0..ball.len())].clone(),
                t: rng.gen_range(0..4) as f64 / 4.0,
            };
            let (p, q) = (pt(&mut rng), pt(&mut rng));
            let w = sampling::rational_vector(m.dim(), &mut rng, 8, 4);
            let oracle = point_distance(m.tree(), &p, &q);
            let b = m.distance_bounds(&ModelPoint::new(p, w.clone()), &ModelPoint::new(q, w));
            worst = worst.max((b.lower - oracle).abs()).max((b.upper - oracle).abs());
        }
        let half = probe_half_factor(&m, 200, 3, &mut rng);
        margin = margin.min(half.worst_margin);
    }
    ensure(worst <= SAME_FIBER_TOL, format!("same-fiber deviation {worst:e}"))?;
    ensure(margin >= -HALF_FACTOR_TOL, format!("half-factor margin {margin:e}"))?;
    Ok(format!("same-fiber deviation {worst:.1e}, half-factor margin {margin:.3}"))
}

fn vanishing_and_convergence() -> Outcome {
    let spec = QuadratureSpec::default();
    let mut notes = Vec::new();
    for coeffs in [&[-2i128][..], &[-2, 0][..]] {
        let m = Metric::new(field(coeffs));
        let n = m.dim();
        let z0 = TreePoint::at(m.tree().base());
        let zero = vec![Q::from_integer(0); n];
        let e0: Vec<Q> = (0..n).map(|j| Q::from_integer(i128::from(j == 0))).collect();
        let vl = probe_vl(&m, &z0, &zero, &e0, VL_EPS, N_MAX).map_err(|e| format!("{coeffs:?}: {e}"))?;
        ensure(vl.threshold <= VL_MAX_THRESHOLD && vl.halving_monotone, format!("{coeffs:?}: vl {vl:?}"))?;
        let lp = fs::lpar_probe(&m, &z0, &zero, &e0, LPAR_EPS, N_MAX, &spec, Exec::Parallel)
            .map_err(|e| format!("{coeffs:?}: {e}"))?;
        ensure(lp.halving_monotone, format!("{coeffs:?}: lpar not monotone {:?}", lp.values))?;
        notes.push(format!("{coeffs:?}: N={} N̄={}", vl.threshold, lp.threshold));
    }
    Ok(notes.join("; "))
}

fn flow_lipschitz() -> Outcome {
    let spec = QuadratureSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    for coeffs in FIELDS {
        let m = Metric::new(field(coeffs));
        let cases: Vec<_> = (0..200)
            .map(|_| {
                let a = fs::random_geodesic(&m, &mut rng);
                let b = fs::random_geodesic(&m, &mut rng);
                (a, b, rng.gen_range(-8..=8) as f64 / 4.0)
            })
            .collect();
        let results = fh_workbench::par::map(Exec::Parallel, &cases, |(a, b, tau)| fs::lipschitz_check(&m, a, b, *tau, &spec));
        for r in results {
            let r = r.map_err(|e| format!("{coeffs:?}: {e}"))?;
            ensure(r.pass(), format!("{coeffs:?}: violation at tau={} {r:?}", r.tau))?;
        }
    }
    Ok("800 pairs, zero violations".into())
}

fn periodic() -> Outcome {
    for coeffs in FIELDS {
        let f = field(coeffs);
        for m in 1..=4 {
            let pc = fs::periodic_count(&f, m).map_err(|e| e.to_string())?;
            let brute = fs::grid_fixed_points(&f, m, pc.lattice_solutions);
            ensure(brute as i128 == pc.lattice_solutions, format!("{coeffs:?} m={m}: {} vs {brute}", pc.lattice_solutions))?;
        }
    }
    let two = fs::periodic_count(&field(&[-2]), 2).map_err(|e| e.to_string())?.lattice_solutions;
    let root = fs::periodic_count(&field(&[-2, 0]), 2).map_err(|e| e.to_string())?.lattice_solutions;
    ensure(two == 3 && root == 1, format!("x-2 m=2 → {two}, x^2-2 m=2 → {root}"))?;
    Ok("m ≤ 4 on all fields match the grid count".into())
}

fn trichotomy() -> Outcome {
    let f = field(&[-2]);
    let choice = find_sr(&f, 3, SearchBounds::default(), Exec::Parallel).map_err(|e| e.to_string())?;
    ensure(choice.s % 2 == 1 && !choice.relaxed, format!("s={} relaxed={}", choice.s, choice.relaxed))?;
    ensure(Some(choice.r as u128) == gl_order(1, choice.s as u64), "r is not |GL_1(Z/s)|")?;
    ensure(choice.report.pass(), format!("failing classes {:?}", choice.report.failing))?;
    let mut notes = vec![format!("x-2: s={} r={}", choice.s, choice.r)];
    for coeffs in [&[-2i128, 0][..], &[2, -4][..]] {
        let q = build_quotient(&field(coeffs), 3, 48).map_err(|e| e.to_string())?;
        ensure(q.group.order() == 432, format!("order {}", q.group.order()))?;
        let report = hgp_check(&q.group, 3, DEFAULT_GROUP_BOUND, Exec::Parallel).map_err(|e| e.to_string())?;
        ensure(report.rows.len() == report.classes, "incomplete table")?;
        for row in report.rows.iter().filter(|r| r.hyperelementary) {
            ensure(row.case_a || row.case_b, format!("{coeffs:?}: class {} in neither case", row.class_id))?;
        }
        let hyper = report.rows.iter().filter(|r| r.hyperelementary).count();
        notes.push(format!("{coeffs:?}: {} classes, {hyper} hyperelementary", report.classes));
    }
    Ok(notes.join("; "))
}

fn homomorphisms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    for (coeffs, s, r) in [(&[-2i128][..], 3i64, 2i64), (&[-2, 0][..], 3, 48)] {
        let f = field(coeffs);
        let q = build_quotient(&f, s, r).map_err(|e| e.to_string())?;
        ensure(q.image_of_generators(&f) == q.group.order(), format!("{coeffs:?}: not surjective"))?;
        for _ in 0..200 {
            let g1 = sampling::gamma_element(&f, &mut rng, 50, 3, 9);
            let g2 = sampling::gamma_element(&f, &mut rng, 50, 3, 9);
            let lhs = q.reduce_element(&f.gamma_mul(&g1, &g2));
            let rhs = q.group.mul_res(&q.reduce_element(&g1), &q.reduce_element(&g2));
            ensure(lhs == rhs, format!("{coeffs:?}: {g1:?} · {g2:?}"))?;
        }
    }
    let m = vec![vec![3i128, 1], vec![1, 1]];
    let emb = build_embedding(&m).map_err(|e| e.to_string())?;
    ensure(emb.conjugated_source() == to_rational(emb.target.companion()), "T·M·T⁻¹ is not the companion matrix")?;
    ensure(q_mat_mul(&emb.conjugator, &emb.conjugator_inv) == q_identity(2), "T is not invertible")?;
    let d = 2i128;
    let random_source = |rng: &mut ChaCha8Rng| AffineElement {
        b: (0..2).map(|_| Q::new(rng.gen_range(-40..=40), d.pow(rng.gen_range(0..4)))).collect(),
        k: rng.gen_range(-3..=3),
    };
    let identity = AffineElement { b: vec![Q::from_integer(0); 2], k: 0 };
    for _ in 0..200 {
        let (g, h) = (random_source(&mut rng), random_source(&mut rng));
        ensure(
            emb.apply(&emb.source_mul(&g, &h)) == emb.target_mul(&emb.apply(&g), &emb.apply(&h)),
            format!("F is not multiplicative at {g:?}, {h:?}"),
        )?;
        ensure((emb.apply(&g) == identity) == (g == identity), "F has a kernel")?;
    }
    Ok("reduction: 2×200 products; embedding: conjugation exact, 200 products".into())
}

fn case_probes() -> Outcome {
    let f = field(&[-2]);
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    for m in 1..=8 {
        let r = case_a_certificate(&f, m, 50, &mut rng);
        ensure(r.certified, format!("case (a) fails at m={m}: {r:?}"))?;
    }
    let metric = Metric::new(f);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let r = case_b_contraction_probe(&metric, 3, &[3, 9, 27], 2.0, 20, &mut rng, &QuadratureSpec::default(), Exec::Parallel)
        .map_err(|e| e.to_string())?;
    ensure(r.strictly_decreasing, format!("case (b) maxima {:?}", r.max_upper))?;
    Ok(format!("case (a) m ≤ 8 certified; case (b) maxima {:?}", r.max_upper.iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 11] = [
        ("residue count", residue_count, 1),
        ("transitive action and base stabilizer", action_on_tree, 40),
        ("fold to the square of (2)", folding, 5),
        ("diagonal tree for x^2-6", diagonal, 30),
        ("same-fiber sandwich and half factor", metric_sandwich, 300),
        ("vanishing and ray convergence", vanishing_and_convergence, 600),
        ("flow bilipschitz bounds", flow_lipschitz, 600),
        ("periodic orbits", periodic, 30),
        ("hyperelementary trichotomy", trichotomy, 600),
        ("reduction and embedding homomorphisms", homomorphisms, 5),
        ("case (a) and case (b) probes", case_probes, 600),
    ];
    let mut failures = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = run();
        let elapsed = started.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > Duration::from_secs(*limit) => Err(format!("{msg} (over the {limit}s limit)")),
            other => other,
        };
        let (tag, msg) = match &outcome {
            Ok(m) => ("PASS", m),
            Err(m) => ("FAIL", m),
        };
        failures += usize::from(outcome.is_err());
        println!("criterion {:>2} {tag} [{:.2}s] {name}: {msg}", i + 1, elapsed.as_secs_f64());
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
