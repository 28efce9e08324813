use criterion::{criterion_group, criterion_main, Criterion};
use lottery_bench::fixture;
use lottery_core::agreement::spearman;
use lottery_core::attribution::{kernel_shap, tree_shap, BackgroundSet, KernelOptions};
use lottery_core::models::{train_gbt, GbtConfig};
use std::hint::black_box;

fn bench_tree_shap(c: &mut Criterion) {
    let ds = fixture(1000);
    let model = train_gbt(&ds, &GbtConfig::default(), 0).unwrap();
    c.bench_function("tree_shap/gbt_default", |b| b.iter(|| tree_shap(&model, black_box(ds.row(3))).unwrap()));
}

fn bench_kernel_shap(c: &mut Criterion) {
    let ds = fixture(1000);
    let model = train_gbt(&ds, &GbtConfig::default(), 0).unwrap();
    let bg = BackgroundSet::sample(&ds, 100, 0).unwrap();
    let opts = KernelOptions::default();
    let mut group = c.benchmark_group("kernel_shap");
    group.sample_size(10);
    group.bench_function("gbt_default", |b| {
        b.iter(|| kernel_shap(|z| model.margin(z), black_box(ds.row(3)), &bg, &opts).unwrap())
    });
    group.finish();
}

fn bench_spearman(c: &mut Criterion) {
    let a: Vec<f64> = (0..64).map(|i| ((i * 37) % 64) as f64).collect();
    let b: Vec<f64> = (0..64).map(|i| ((i * 11) % 64) as f64).collect();
    c.bench_function("spearman/d64", |bch| bch.iter(|| spearman(black_box(&a), black_box(&b)).unwrap()));
}

fn bench_train_gbt(c: &mut Criterion) {
    let ds = fixture(1000);
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("gbt_default_1000", |b| b.iter(|| train_gbt(black_box(&ds), &GbtConfig::default(), 0).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_tree_shap, bench_kernel_shap, bench_spearman, bench_train_gbt);
criterion_main!(benches);
