use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fh_workbench::finitequotient::{build_quotient, case_b_contraction_probe, subgroup_classes, DEFAULT_GROUP_BOUND};
use fh_workbench::flowspace::{lpar_probe, QuadratureSpec};
use fh_workbench::geometry::{Metric, TreePoint};
use fh_workbench::linalg::Q;
use fh_workbench::numberfield::define_field;
use fh_workbench::par::Exec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EXECS: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];

fn subgroups(c: &mut Criterion) {
    let f = define_field(&[-2, 0]).unwrap();
    let q = build_quotient(&f, 3, 48).unwrap();
    let mut group = c.benchmark_group("subgroup_classes_432");
    group.sample_size(10);
    for (name, exec) in EXECS {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| subgroup_classes(&q.group, DEFAULT_GROUP_BOUND, exec).unwrap())
        });
    }
    group.finish();
}

fn convergence(c: &mut Criterion) {
    let m = Metric::new(Arc::new(define_field(&[-2, 0]).unwrap()));
    let z0 = TreePoint::at(m.tree().base());
    let e0 = vec![Q::from_integer(1), Q::from_integer(0)];
    let zero = vec![Q::from_integer(0); 2];
    let spec = QuadratureSpec::default();
    let mut group = c.benchmark_group("lpar_probe");
    group.sample_size(10);
    for (name, exec) in EXECS {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| lpar_probe(&m, &z0, &e0, &zero, 0.2, 64, &spec, exec).unwrap())
        });
    }
    group.finish();
}

fn contraction(c: &mut Criterion) {
    let m = Metric::new(Arc::new(define_field(&[-2]).unwrap()));
    let spec = QuadratureSpec::default();
    let mut group = c.benchmark_group("case_b_probe");
    group.sample_size(10);
    for (name, exec) in EXECS {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(11);
                case_b_contraction_probe(&m, 3, &[3, 9, 27], 2.0, 20, &mut rng, &spec, exec).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, subgroups, convergence, contraction);
criterion_main!(benches);
