//! Per-point stages on one thread versus the default rayon pool.
//!
//! Build with `--no-default-features` to time the sequential fallback
//! instead of rayon; the group names carry the active mode.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use glle::glle_direct::direct_params;
use glle::glle_em::{fit_em, EmConfig};
use glle::lle::{lle_pipeline, reconstruct_all};
use glle::manifold_data::swiss_roll;
use glle::neighborhood::build_knn;

const MODE: &str = if cfg!(feature = "parallel") { "rayon" } else { "sequential" };

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let default = rayon::ThreadPoolBuilder::new().build().unwrap();
    let label = format!("default-pool-{}", default.current_num_threads());
    vec![
        ("1-thread".to_string(), rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        (label, default),
    ]
}

fn stages(c: &mut Criterion) {
    let ds = swiss_roll(1000, false, 0).unwrap();
    let graph = build_knn(&ds, 10).unwrap();
    let lle = lle_pipeline(&ds, 10, 2, 1e-3).unwrap();
    let em_cfg = EmConfig {
        max_iter: 5,
        ..EmConfig::default()
    };

    let mut group = c.benchmark_group(format!("stages-{MODE}"));
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_with_input(BenchmarkId::new("knn", &label), &pool, |b, pool| {
            b.iter(|| pool.install(|| build_knn(&ds, 10).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("weights", &label), &pool, |b, pool| {
            b.iter(|| pool.install(|| reconstruct_all(&ds, &graph, 1e-3).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("em-5-iterations", &label), &pool, |b, pool| {
            b.iter(|| pool.install(|| fit_em(&ds, &graph, &em_cfg).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("direct-covariances", &label), &pool, |b, pool| {
            b.iter(|| pool.install(|| direct_params(&ds, &lle, 1e-6).unwrap()))
        });
    }
    group.finish();
}

fn full_pipeline(c: &mut Criterion) {
    let ds = swiss_roll(1000, false, 0).unwrap();
    let mut group = c.benchmark_group(format!("lle-pipeline-{MODE}"));
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_with_input(BenchmarkId::from_parameter(&label), &pool, |b, pool| {
            b.iter(|| pool.install(|| lle_pipeline(&ds, 10, 2, 1e-3).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, stages, full_pipeline);
criterion_main!(benches);
