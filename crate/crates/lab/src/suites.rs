use std::sync::Arc;

use fh_workbench::finitequotient::{
    self as fq, build_quotient, case_a_certificate, case_b_contraction_probe, find_sr, FiniteGroup, SearchBounds,
};
use fh_workbench::flowspace::{self as fs, HorizontalGeodesic};
use fh_workbench::geometry::{self, Metric, ModelPoint, TreePoint};
use fh_workbench::ideals::factor_x;
use fh_workbench::linalg::Q;
use fh_workbench::numberfield::{FieldDescriptor, OrderElement};
use fh_workbench::par::Exec;
use fh_workbench::sampling;
use fh_workbench::tree::{diagonal_iso_check, fold_to_power, DTree, PrimeTree, TreeVertex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::{Check, Suite, SuiteConfig};

type Field = Arc<FieldDescriptor>;

pub(crate) fn run(suite: Suite, field: &Field, cfg: &SuiteConfig, rng: &mut ChaCha8Rng, exec: Exec) -> Vec<Check> {
    match suite {
        Suite::Tree => tree(field, cfg, rng),
        Suite::Folding => folding(field, cfg, rng),
        Suite::Diagonal => diagonal(field, cfg, rng),
        Suite::Metric => metric(field, cfg, rng),
        Suite::Flow => flow(field, cfg, rng, exec),
        Suite::Periodic => periodic(field),
        Suite::Quotient => quotient(field, cfg, rng, exec),
    }
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    &xs[rng.gen_range(0..xs.len())]
}

fn count_check(lemma: &str, samples: usize, failures: usize) -> Check {
    Check::new(lemma, samples, failures as f64, 0.0, failures == 0)
}

/// How far apart two intervals are; zero when they overlap.
fn interval_gap(a: (f64, f64), b: (f64, f64)) -> f64 {
    if !(a.0.is_finite() && a.1.is_finite() && b.0.is_finite() && b.1.is_finite()) {
        return f64::INFINITY;
    }
    (a.0 - b.1).max(b.0 - a.1).max(0.0)
}

fn tree(field: &Field, cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Vec<Check> {
    let tree = DTree::new(field.clone());
    let d = field.d().unsigned_abs() as usize;
    let base = tree.base();
    let mut out = Vec::new();

    let near = tree.ball(&base, 2);
    let worst = near.iter().map(|v| tree.children(v).len().abs_diff(d)).max().unwrap_or(0);
    out.push(
        Check::new("children per vertex equal |a0|", near.len(), worst as f64, 0.0, worst == 0 && tree.residues().len() == d)
            .with_detail(&json!({ "d": d, "residues": tree.residues().len() })),
    );

    let n = cfg.samples.tree;
    let ball = tree.ball(&base, cfg.budgets.ball_radius);
    let mut fails = 0;
    for _ in 0..n {
        let (u, v) = (pick(rng, &ball).clone(), pick(rng, &ball).clone());
        if tree.act_vertex(&tree.transitive_witness(&u, &v), &u) != v {
            fails += 1;
        }
    }
    out.push(count_check("transitive action on vertices", n, fails));

    // (b, 0) with b integral fixes the base; anything else with a pole or a shift moves it
    let mut fails = 0;
    for i in 0..n {
        let g = if i % 2 == 0 {
            field.gamma(field.xf_from_order(sampling::order_element(field, rng, 20)), 0)
        } else {
            sampling::gamma_element(field, rng, 20, 3, 1)
        };
        let expected = g.k == 0 && g.b.denom_exp == 0;
        if (tree.act_vertex(&g, &base) == base) != expected || tree.stabilizer_test(&g, &base) != expected {
            fails += 1;
        }
    }
    out.push(count_check("base stabilizer is the integral translations", n, fails));

    let mut fails = 0;
    for _ in 0..n {
        let g = sampling::gamma_element(field, rng, 9, 3, 4);
        let v = pick(rng, &ball);
        if tree.busemann(&tree.act_vertex(&g, v)) != tree.busemann(v) + g.k {
            fails += 1;
        }
    }
    out.push(count_check("height shifts by the exponent", n, fails));
    out
}

fn folding(field: &Field, cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Vec<Check> {
    let primes = match factor_x(field) {
        Ok(p) => p,
        Err(e) => return vec![Check::failed("fold to the square of each prime", e)],
    };
    let kappa = 2;
    let mut out = Vec::new();
    for p in primes {
        let label = format!("fold to the square of the prime over {}", p.p);
        let src = PrimeTree::new(field.clone(), p.clone(), 1);
        let dst = PrimeTree::new(field.clone(), p, kappa);
        let fold = fold_to_power(&src, kappa, cfg.budgets.fold_radius);
        let valence = fold.valence_report(&dst);
        out.push(
            Check::new(
                &label,
                valence.interior_vertices,
                valence.max_valence.abs_diff(valence.expected).max(valence.min_valence.abs_diff(valence.expected)) as f64,
                0.0,
                valence.pass(),
            )
            .with_detail(&valence),
        );
        let gens = src.power_group_generators(kappa, rng, cfg.samples.folding);
        let fails = gens
            .iter()
            .filter(|g| !fold.equivariant_at(&src, &dst, g, &pick(rng, &fold.pairs).0))
            .count();
        out.push(count_check(&format!("{label}: equivariance"), gens.len(), fails));
    }
    out
}

fn diagonal(field: &Field, cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Vec<Check> {
    match diagonal_iso_check(field.clone(), cfg.budgets.diagonal_radius, cfg.samples.diagonal, rng) {
        Ok(r) => vec![Check::new(
            "diagonal product tree is isomorphic to the direct tree",
            r.equivariance_checks,
            r.equivariance_failures as f64,
            0.0,
            r.pass(),
        )
        .with_detail(&json!({
            "radius": r.radius,
            "primes": r.primes,
            "direct_vertices": r.direct_vertices,
            "diagonal_vertices": r.diagonal_vertices,
            "edges": r.edges,
            "valence": r.valence,
            "isomorphic": r.isomorphic,
        }))],
        Err(e) => vec![Check::failed("diagonal product tree is isomorphic to the direct tree", e)],
    }
}

fn random_point(rng: &mut ChaCha8Rng, ball: &[TreeVertex]) -> TreePoint {
    TreePoint { vertex: pick(rng, ball).clone(), t: rng.gen_range(0..4) as f64 / 4.0 }
}

fn metric(field: &Field, cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Vec<Check> {
    let metric = Metric::new(field.clone());
    let tree = metric.tree();
    let n = field.degree();
    let tol = &cfg.tolerances;
    let samples = cfg.samples.metric;
    let ball = tree.ball(&tree.base(), 3);
    let mut out = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..samples {
        let (z1, z2) = (random_point(rng, &ball), random_point(rng, &ball));
        let w = sampling::rational_vector(n, rng, 8, 4);
        let b = metric.distance_bounds(&ModelPoint::new(z1, w.clone()), &ModelPoint::new(z2, w));
        worst = worst.max((b.lower - b.tree_distance).abs()).max((b.upper - b.tree_distance).abs());
    }
    out.push(Check::new("same fiber distance is the tree distance", samples, worst, tol.same_fiber, worst <= tol.same_fiber));

    let half = geometry::probe_half_factor(&metric, samples, 3, rng);
    out.push(Check::new("vertical distance at most twice the distance", samples, -half.worst_margin, tol.interval, half.pass).with_detail(&half));

    let mut worst = 0.0f64;
    let iso = samples / 4;
    for _ in 0..iso {
        let p = ModelPoint::new(random_point(rng, &ball), sampling::rational_vector(n, rng, 8, 4));
        let q = ModelPoint::new(random_point(rng, &ball), sampling::rational_vector(n, rng, 8, 4));
        let g = sampling::gamma_element(field, rng, 5, 2, 2);
        let a = metric.distance_bounds(&p, &q);
        let b = metric.distance_bounds(&metric.act(&g, &p), &metric.act(&g, &q));
        worst = worst.max(interval_gap((a.lower, a.upper), (b.lower, b.upper)));
    }
    out.push(Check::new("group acts by isometries", iso, worst, tol.interval, worst <= tol.interval));

    let z0 = TreePoint::at(tree.base());
    let e0: Vec<Q> = OrderElement::basis(n, 0).coords.iter().map(|c| Q::from_integer(*c)).collect();
    let zero = vec![Q::from_integer(0); n];
    let label = "vertical distances vanish under fiber scaling";
    out.push(match geometry::probe_vl(&metric, &z0, &e0, &zero, tol.vanishing_eps, cfg.budgets.n_max) {
        Ok(r) => Check::new(
            label,
            r.values.len(),
            r.threshold as f64,
            tol.vanishing_threshold as f64,
            r.threshold <= tol.vanishing_threshold && r.halving_monotone,
        )
        .with_detail(&json!({ "eps": tol.vanishing_eps, "halving_monotone": r.halving_monotone })),
        Err(e) => Check::failed(label, e),
    });

    let label = "vertical distance controlled below the base edge";
    out.push(match geometry::probe_control(&metric, 3, samples / 10, rng) {
        Ok(r) => Check::new(label, r.samples_used, r.beta_doubled, 1.05, r.beta.is_finite() && r.stable).with_detail(&r),
        Err(e) => Check::failed(label, e),
    });

    let sep = geometry::probe_rads(&metric, 0.5, samples / 10, rng);
    out.push(
        Check::new("separated fibers stay apart", 2 * (samples / 10), sep.min_lower_doubled, 0.0, sep.min_lower_doubled > 0.0 && sep.stable)
            .with_detail(&sep),
    );
    out
}

fn flow(field: &Field, cfg: &SuiteConfig, rng: &mut ChaCha8Rng, exec: Exec) -> Vec<Check> {
    let metric = Metric::new(field.clone());
    let spec = &cfg.budgets.quadrature;
    let tol = &cfg.tolerances;
    let n = cfg.samples.flow;
    let mut out = Vec::new();

    let mut violations = 0;
    let mut inconclusive = 0;
    let mut worst_error = 0.0f64;
    for _ in 0..n {
        let (a, b) = (fs::random_geodesic(&metric, rng), fs::random_geodesic(&metric, rng));
        let tau = rng.gen_range(-8..=8) as f64 / 4.0;
        match fs::lipschitz_check(&metric, &a, &b, tau, spec) {
            Ok(r) => {
                violations += usize::from(!r.pass());
                worst_error = worst_error.max(r.base.error).max(r.flowed.error);
            }
            Err(_) => inconclusive += 1,
        }
    }
    out.push(
        count_check("flow is exp(|tau|)-bilipschitz", n, violations + inconclusive)
            .with_detail(&json!({ "violations": violations, "inconclusive": inconclusive, "worst_error": worst_error })),
    );

    let pair = |rng: &mut ChaCha8Rng| -> (HorizontalGeodesic, HorizontalGeodesic) {
        (fs::random_geodesic(&metric, rng), fs::random_geodesic(&metric, rng))
    };
    let k = (n / 10).max(1);
    let mut sym = 0.0f64;
    let mut inv = 0.0f64;
    for _ in 0..k {
        let (a, b) = pair(rng);
        let ab = fs::fs_distance(&metric, &a, &b, spec);
        let ba = fs::fs_distance(&metric, &b, &a, spec);
        sym = sym.max(interval_gap((ab.lower, ab.upper), (ba.lower, ba.upper)));
        let g = sampling::gamma_element(field, rng, 5, 2, 2);
        let moved = fs::fs_distance(&metric, &fs::act(&metric, &g, &a), &fs::act(&metric, &g, &b), spec);
        inv = inv.max(interval_gap((ab.lower, ab.upper), (moved.lower, moved.upper)));
    }
    out.push(Check::new("flow-space distance is symmetric", k, sym, tol.interval, sym <= tol.interval));
    out.push(Check::new("flow-space distance is group invariant", k, inv, tol.interval, inv <= tol.interval));

    let n_dim = field.degree();
    let z0 = TreePoint::at(metric.tree().base());
    let e0: Vec<Q> = (0..n_dim).map(|i| Q::from_integer(i128::from(i == 0))).collect();
    let zero = vec![Q::from_integer(0); n_dim];
    let label = "rays from nearby points converge in flow space";
    out.push(
        match fs::lpar_probe(&metric, &z0, &e0, &zero, tol.contraction_eps, cfg.budgets.n_max, spec, exec) {
            Ok(r) => Check::new(label, r.sampled.len(), *r.values.last().unwrap_or(&f64::NAN), tol.contraction_eps, r.halving_monotone)
                .with_detail(&json!({
                    "threshold": r.threshold,
                    "model_threshold": r.model_threshold,
                    "flow_time": r.flow_time,
                    "halving_monotone": r.halving_monotone,
                })),
            Err(e) => Check::failed(label, e),
        },
    );
    out
}

/// Brute force over the 1/q grid is only attempted up to this many points.
const GRID_LIMIT: i128 = 5_000_000;

fn periodic(field: &Field) -> Vec<Check> {
    let mut worst = 0u64;
    let mut compared = 0;
    let mut rows = Vec::new();
    for m in 1..=4 {
        let pc = match fs::periodic_count(field, m) {
            Ok(pc) => pc,
            Err(e) => return vec![Check::failed("periodic points counted by a determinant", e)],
        };
        let q = pc.lattice_solutions;
        let grid = q.checked_pow(field.degree() as u32).filter(|g| *g <= GRID_LIMIT);
        if grid.is_some() {
            let brute = fs::grid_fixed_points(field, m, q);
            worst = worst.max(brute.abs_diff(q as u64));
            compared += 1;
        }
        rows.push(pc);
    }
    vec![Check::new("periodic points counted by a determinant", compared, worst as f64, 0.0, worst == 0).with_detail(&rows)]
}

fn quotient(field: &Field, cfg: &SuiteConfig, rng: &mut ChaCha8Rng, exec: Exec) -> Vec<Check> {
    let b = &cfg.budgets;
    let mut out = Vec::new();
    let bounds = SearchBounds { s_max: b.s_max, group_bound: b.subgroup_bound };
    let label = "hyperelementary subgroups fall into the trichotomy";
    let choice = match find_sr(field, b.trichotomy_n, bounds, exec) {
        Ok(c) => c,
        Err(e) => return vec![Check::failed(label, e)],
    };
    out.push(
        Check::new(label, choice.report.classes, choice.report.failing.len() as f64, 0.0, choice.report.pass()).with_detail(&json!({
            "s": choice.s,
            "r": choice.r,
            "relaxed": choice.relaxed,
            "tried": choice.tried,
            "n_bound": b.trichotomy_n,
            "group_order": choice.report.group_order,
            "failing": choice.report.failing,
        })),
    );

    let label = "reduction is a surjective homomorphism";
    match build_quotient(field, choice.s, choice.r) {
        Ok(q) => {
            let n = cfg.samples.quotient;
            let mut fails = 0;
            for _ in 0..n {
                let g1 = sampling::gamma_element(field, rng, 20, 3, 6);
                let g2 = sampling::gamma_element(field, rng, 20, 3, 6);
                let lhs = q.reduce_element(&field.gamma_mul(&g1, &g2));
                let rhs = q.group.mul_res(&q.reduce_element(&g1), &q.reduce_element(&g2));
                fails += usize::from(lhs != rhs);
            }
            let image = q.image_of_generators(field);
            out.push(
                count_check(label, n, fails + usize::from(image != q.group.order()))
                    .with_detail(&json!({ "image": image, "order": q.group.order() })),
            );
        }
        Err(e) => out.push(Check::failed(label, e)),
    }

    let per_m = (cfg.samples.quotient / b.case_a_max_m.max(1)).max(1);
    let reports: Vec<fq::CaseAReport> =
        (1..=b.case_a_max_m).map(|m| case_a_certificate(field, m, per_m, rng)).collect();
    let fails = reports.iter().filter(|r| !r.certified).count();
    out.push(count_check("small words move the shift coordinate little", per_m * reports.len(), fails));

    let label = "scaling shrinks orbit pairs in the fiber direction";
    let metric = Metric::new(field.clone());
    let p = smallest_prime_coprime(field.d().unsigned_abs() as i64);
    let ks = [p, p * p, p * p * p];
    out.push(
        match case_b_contraction_probe(&metric, 3, &ks, 2.0, cfg.samples.contraction, rng, &b.quadrature, exec) {
            Ok(r) => Check::new(
                label,
                r.same_shift_pairs,
                *r.max_upper_same_shift.last().unwrap_or(&f64::NAN),
                0.0,
                r.same_shift_pairs > 0 && r.same_shift_decreasing,
            )
            .with_detail(&r),
            Err(e) => Check::failed(label, e),
        },
    );
    out
}

fn smallest_prime_coprime(d: i64) -> i64 {
    (2..)
        .find(|p: &i64| (2..*p).all(|q| p % q != 0) && d % p != 0)
        .expect("infinitely many primes")
}
