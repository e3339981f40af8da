//! Parallel against sequential execution of the two Monte Carlo loops:
//! limit draws behind a confidence band, and replications of a fit.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use lcpmf::experiments::DistSpec;
use lcpmf::limit::{limit_from_draw, sample_gaussian};
use lcpmf::parallel::{map_indexed, map_indexed_sequential};
use lcpmf::{fit_mle, rng, SolverOptions};

fn limit_draws(c: &mut Criterion) {
    let pmf = DistSpec::triangular(11).unwrap().pmf().clone();
    let interval = (1, 6);
    let allowed: Vec<i64> = (1..=6).collect();
    let one = |b: usize| {
        let draw = sample_gaussian(&pmf, &mut rng::stream(1, b as u64));
        limit_from_draw(&pmf, interval, &allowed, &draw).unwrap().delta_h[2]
    };
    let mut g = c.benchmark_group("limit_draws");
    for draws in [1000usize, 10_000] {
        g.bench_with_input(BenchmarkId::new("parallel", draws), &draws, |b, &n| {
            b.iter(|| black_box(map_indexed(n, one)))
        });
        g.bench_with_input(BenchmarkId::new("sequential", draws), &draws, |b, &n| {
            b.iter(|| black_box(map_indexed_sequential(n, one)))
        });
    }
    g.finish();
}

fn replications(c: &mut Criterion) {
    let dist = DistSpec::negbinomial(6.0, 0.3).unwrap();
    let opts = SolverOptions::default();
    let one = |rep: usize| {
        let counts = dist.sample(100, &mut rng::stream(2, rep as u64));
        fit_mle(&counts, &opts).unwrap().objective
    };
    let mut g = c.benchmark_group("fit_replications");
    g.sample_size(20);
    let reps = 500;
    g.bench_function(BenchmarkId::new("parallel", reps), |b| b.iter(|| black_box(map_indexed(reps, one))));
    g.bench_function(BenchmarkId::new("sequential", reps), |b| b.iter(|| black_box(map_indexed_sequential(reps, one))));
    g.finish();
}

criterion_group!(benches, limit_draws, replications);
criterion_main!(benches);
