use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use waveqn::{InterpMatrix, QnState, Subsolver, TimeGrid};
use waveqn_bench::{heat_pair, smooth_waveform};

fn qn_update(c: &mut Criterion) {
    let mut group = c.benchmark_group("qn_update");
    for n in [100usize, 1000, 10_000] {
        // Affine contraction x -> 0.5 x + 1 with a slight coupling between
        // neighbours, iterated until the history holds 8 columns.
        let h = |x: &[f64]| -> Vec<f64> {
            (0..x.len())
                .map(|i| 0.4 * x[i] + 0.1 * x[(i + 1) % x.len()] + 1.0 + (i as f64).sin())
                .collect()
        };
        let mut warm = QnState::new(n, 0.5);
        let mut x = vec![0.0; n];
        for _ in 0..8 {
            x = warm.step(&h(&x), &x).unwrap();
        }
        let x_hat = h(&x);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter_batched(
                || warm.clone(),
                |mut qn| black_box(qn.step(&x_hat, &x).unwrap()),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn interpolation(c: &mut Criterion) {
    let mut group = c.benchmark_group("interpolation");
    let dim = 31;
    for nodes in [100usize, 1000] {
        let w = smooth_waveform(nodes, dim);
        let target = TimeGrid::new((0..=3 * nodes).map(|i| (i as f64 / (3 * nodes) as f64).powi(2)).collect()).unwrap();
        group.bench_with_input(BenchmarkId::new("matrix", nodes), &nodes, |b, _| {
            b.iter(|| black_box(InterpMatrix::new(w.grid(), &target).unwrap()))
        });
        let m = InterpMatrix::new(w.grid(), &target).unwrap();
        group.bench_with_input(BenchmarkId::new("apply", nodes), &nodes, |b, _| {
            b.iter(|| black_box(m.apply(w.values(), dim).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("sample", nodes), &nodes, |b, _| {
            b.iter(|| black_box(w.sample(&target).unwrap()))
        });
    }
    group.finish();
}

fn heat_window(c: &mut Criterion) {
    let mut group = c.benchmark_group("heat_window");
    group.sample_size(10);
    for cells in [16usize, 32] {
        let (mut dir, mut neu, g) = heat_pair(cells, 10, 1e4);
        let q = dir.solve(&g).unwrap().waveform;
        group.bench_with_input(BenchmarkId::new("dirichlet", cells), &cells, |b, _| {
            b.iter(|| black_box(dir.solve(&g).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("neumann", cells), &cells, |b, _| {
            b.iter(|| black_box(neu.solve(&q).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, qn_update, interpolation, heat_window);
criterion_main!(benches);
