//! Dense versus implicit T3-SVD and the retraction path.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;
use t4s_bench::fixture_t3;
use t4s_core::linalg::Truncation;
use t4s_core::manifold::{attach_and_retract, prepare_point, project_gauge};
use t4s_core::t3::{t3_svd_dense, t3_svd_implicit};

fn bench_t3_svd(c: &mut Criterion) {
    let dims = [18usize, 18, 18, 14];
    let t3 = fixture_t3(&dims, &[4, 5, 5, 4], &[1, 4, 6, 4, 1], 1);
    let dense = t3.contract_full().unwrap();
    let trunc = Truncation::none();

    let mut group = c.benchmark_group("t3_svd");
    group.sample_size(20);
    group.bench_function("dense", |b| {
        b.iter(|| t3_svd_dense(black_box(&dense), black_box(&trunc)).unwrap())
    });
    group.bench_function("implicit", |b| {
        b.iter(|| t3_svd_implicit(black_box(&t3), black_box(&trunc)).unwrap())
    });
    group.finish();
}

fn bench_retraction(c: &mut Criterion) {
    let dims = [30usize, 30, 30, 25];
    let t3 = fixture_t3(&dims, &[4, 5, 5, 5], &[1, 4, 6, 5, 1], 2);
    let p = prepare_point(&t3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v = project_gauge(&p, &p.random_variation(&mut rng)).unwrap();

    c.bench_function("retract", |b| {
        b.iter(|| attach_and_retract(black_box(&p), black_box(&v)).unwrap())
    });
}

criterion_group!(benches, bench_t3_svd, bench_retraction);
criterion_main!(benches);
