use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fairforge::metrics::{compute_metric, FairnessStructure};
use fairforge::model::{forward, gradient};
use fairforge::{match_pairs, MetricSpec, ModelParams, PreparedData, TrainConfig, Weights};
use fairforge_bench::synthetic;

fn model(c: &mut Criterion) {
    let mut g = c.benchmark_group("model");
    for &(n, d) in &[(2_000usize, 20usize), (20_000, 100)] {
        let data = PreparedData::new(&synthetic(n, d, 1)).unwrap();
        let params = ModelParams::glorot(d, 64, 0);
        let x = data.train.features.view();
        g.bench_with_input(BenchmarkId::new("forward", format!("{n}x{d}")), &(), |b, _| {
            b.iter(|| forward(black_box(&params), x).unwrap())
        });
        let mut w = Weights::zeros();
        w.0 = [0.125; 8];
        let config = TrainConfig::new(1.0, w, 0);
        g.bench_with_input(BenchmarkId::new("gradient_all_metrics", format!("{n}x{d}")), &(), |b, _| {
            b.iter(|| gradient(black_box(&params), x, &data.train.structure, &config).unwrap())
        });
    }
    g.finish();
}

fn fairness(c: &mut Criterion) {
    let mut g = c.benchmark_group("fairness");
    for &n in &[2_000usize, 20_000] {
        let ds = synthetic(n, 4, 2);
        let scores: Vec<f64> = ds.fair_features.column(0).to_vec();
        let eligible = vec![true; n];
        g.bench_with_input(BenchmarkId::new("match_pairs", n), &(), |b, _| {
            b.iter(|| match_pairs(black_box(&scores), &ds.group, &eligible).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("structure", n), &(), |b, _| {
            b.iter(|| FairnessStructure::new(ds.labels.clone(), ds.group.clone(), scores.clone()).unwrap())
        });
        let structure = FairnessStructure::new(ds.labels.clone(), ds.group.clone(), scores.clone()).unwrap();
        let preds = fairforge::Predictions::new((0..n).map(|i| (i % 97) as f64 / 97.0).collect()).unwrap();
        g.bench_with_input(BenchmarkId::new("all_metrics", n), &(), |b, _| {
            b.iter(|| {
                for spec in MetricSpec::ALL {
                    black_box(compute_metric(spec, &preds, &structure).unwrap());
                }
            })
        });
    }
    g.finish();
}

criterion_group!(benches, model, fairness);
criterion_main!(benches);
