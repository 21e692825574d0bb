use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use spectrasep::cube::disk_mask;
use spectrasep::cube::l1_normalize;
use spectrasep::eval::{auroc, bootstrap_ci};
use spectrasep::forest::{fit, ForestParams};
use spectrasep::index::{compute_index, default_index_config};
use spectrasep_bench::{centred_roi, classification, reflectance_cube, scored_labels};

fn cube_ops(c: &mut Criterion) {
    let cube = reflectance_cube(128, 128, 1);
    c.bench_function("l1_normalize 128x128x100", |b| {
        b.iter(|| l1_normalize(black_box(&cube)).unwrap())
    });

    let roi = centred_roi(&cube, 40);
    let mask = disk_mask(cube.width(), cube.height(), &roi);
    let sto2 = default_index_config().into_iter().next().unwrap();
    c.bench_function("index map 128x128", |b| {
        b.iter(|| compute_index(black_box(&cube), &sto2, &mask).unwrap())
    });
}

fn forest(c: &mut Criterion) {
    let (x, y) = classification(160, 20, 2);
    let params = ForestParams::default();
    let mut group = c.benchmark_group("forest");
    group.sample_size(10);
    group.bench_function("fit 100 trees, 160x20", |b| {
        b.iter(|| fit(black_box(&x), &y, &params, 3).unwrap())
    });
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let (values, labels) = scored_labels(160, 4);
    c.bench_function("auroc n=160", |b| {
        b.iter(|| auroc(black_box(&values), &labels).unwrap())
    });
    let mut group = c.benchmark_group("bootstrap");
    group.sample_size(10);
    group.bench_function("1000 resamples n=160", |b| {
        b.iter(|| bootstrap_ci(black_box(&values), &labels, 1000, 5).unwrap())
    });
    group.finish();
}

criterion_group!(benches, cube_ops, forest, evaluation);
criterion_main!(benches);
