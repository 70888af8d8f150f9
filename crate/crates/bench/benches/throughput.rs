use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hass_core::geometry::{bev_iou, iou_3d, points_in_box, Box3D};
use hass_core::synthesis::{synthesize, SynthesisConfig};
use hass_core::teacher_sim::GeneratorConfig;
use hass_core::{CategorySet, PseudoDatabase};

fn bench_iou(c: &mut Criterion) {
    let a = Box3D::new([0.0, 0.0, 0.0], [4.0, 1.7, 1.5], 0.3).unwrap();
    let b = Box3D::new([1.0, 0.4, 0.2], [4.2, 1.8, 1.6], -0.4).unwrap();
    c.bench_function("bev_iou/overlapping", |bench| bench.iter(|| bev_iou(black_box(&a), black_box(&b))));
    c.bench_function("iou_3d/overlapping", |bench| bench.iter(|| iou_3d(black_box(&a), black_box(&b))));
}

fn bench_points_in_box(c: &mut Criterion) {
    let scene = GeneratorConfig {
        clutter_points: 120_000,
        ..GeneratorConfig::default()
    }
    .generate("bench", 1);
    let b = Box3D::new([5.0, -3.0, -1.0], [4.0, 1.7, 1.5], 0.7).unwrap();
    let mut group = c.benchmark_group("points_in_box");
    group.throughput(Throughput::Elements(scene.cloud.len() as u64));
    group.bench_function("sweep", |bench| bench.iter(|| points_in_box(black_box(&scene.cloud), &b)));
    group.finish();
}

fn bench_synthesize(c: &mut Criterion) {
    let g = GeneratorConfig::default();
    let sources = g.generate_many("src", 50, 2);
    let db = PseudoDatabase::from_ground_truth(&sources, &CategorySet::kitti()).unwrap();
    let snapshot = db.snapshot();
    let background = g.generate("bg", 3);
    let cfg = SynthesisConfig::default();
    let mut group = c.benchmark_group("synthesize");
    for k in [5usize, 15, 30] {
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |bench, &k| {
            bench.iter(|| synthesize(&background, &snapshot, k, &cfg, 11).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_iou, bench_points_in_box, bench_synthesize);
criterion_main!(benches);
