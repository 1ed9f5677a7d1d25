use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use semiflex::generate::{generate, Kind, Params};
use semiflex::{canonical_flexion, chi, flex_2ribbon, nribbon_infinitesimal_report};

fn surface(kind: Kind, ribbons: usize, nodes: usize) -> semiflex::SampledSurface {
    generate(kind, &Params::default().with_ribbons(ribbons).with_nodes(nodes).with_seed(7)).unwrap()
}

fn infinitesimal(c: &mut Criterion) {
    let mut group = c.benchmark_group("canonical_flexion");
    for nodes in [101, 201, 401] {
        let s = surface(Kind::Dev, 2, nodes);
        group.bench_with_input(BenchmarkId::from_parameter(nodes), &s, |b, s| {
            b.iter(|| canonical_flexion(black_box(s)).unwrap())
        });
    }
    group.finish();
}

fn flexibility(c: &mut Criterion) {
    let rev = surface(Kind::Rev, 3, 201);
    c.bench_function("chi/rev3/201", |b| b.iter(|| chi(black_box(&rev)).unwrap()));
    let rand = surface(Kind::Rand, 6, 201);
    c.bench_function("nribbon_report/rand6/201", |b| {
        b.iter(|| nribbon_infinitesimal_report(black_box(&rand), 1e-6).unwrap())
    });
}

fn finite(c: &mut Criterion) {
    let dev = surface(Kind::Dev, 2, 201);
    let mut group = c.benchmark_group("flex_2ribbon");
    group.sample_size(10);
    for steps in [10, 40] {
        group.bench_with_input(BenchmarkId::new("dev/201", steps), &steps, |b, &steps| {
            b.iter(|| flex_2ribbon(black_box(&dev), 0.2, steps).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, infinitesimal, flexibility, finite);
criterion_main!(benches);
