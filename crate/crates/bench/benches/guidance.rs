use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use pilotwave::ensemble::{evolve_ensemble, sample, wigner};
use pilotwave::guidance::{integrate_trajectory, velocity};
use pilotwave::propagate::evolve_splitstep;
use pilotwave::qstate::{density, synthesize, JetOrder};
use pilotwave::{Config, ModeExpansion, PotentialSpec, C64};
use pilotwave_bench::{packet_field, planar_box, two_mode_box};

fn fields(c: &mut Criterion) {
    let f = packet_field(1024);
    let harmonic = PotentialSpec::Harmonic {
        omega: 0.5,
        center: vec![0.0],
    };
    c.bench_function("splitstep 1024 points x 100 steps", |b| {
        b.iter(|| evolve_splitstep(black_box(&f), &harmonic, 1e-3, 100).unwrap())
    });
    let small = packet_field(256);
    c.bench_function("wigner 256 points", |b| b.iter(|| wigner(black_box(&small)).unwrap()));
}

fn trajectories(c: &mut Criterion) {
    let planar = planar_box(7);
    c.bench_function("velocity 16 planar modes", |b| {
        b.iter(|| velocity(&planar, black_box(&[1.1, 2.2]), black_box(0.7)).unwrap())
    });
    c.bench_function("jet with third derivatives", |b| {
        b.iter(|| planar.jet(black_box(&[1.1, 2.2]), 0.7, JetOrder::Third).unwrap())
    });
    let ev = two_mode_box();
    c.bench_function("two-mode trajectory to t = 5, tol 1e-10", |b| {
        b.iter(|| integrate_trajectory(&ev, &Config::from(black_box(0.9)), 0.0, 5.0, 1e-10).unwrap())
    });
}

fn ensembles(c: &mut Criterion) {
    let ev = planar_box(7);
    let grid = ev.grid().clone();
    let ground = ModeExpansion::box_sine(grid.clone(), vec![1.0, 1.0], vec![vec![1, 1]], vec![C64::new(1.0, 0.0)]).unwrap();
    let p0 = density(&synthesize(&ground, 0.0).unwrap());
    let mut g = c.benchmark_group("ensemble");
    g.sample_size(10);
    g.bench_function("sample 10^4 members", |b| b.iter(|| sample(black_box(&p0), &grid, 10_000, 3).unwrap()));
    g.bench_function("evolve 200 relaxation members to t = 1", |b| {
        b.iter_batched(
            || sample(&p0, &grid, 200, 3).unwrap(),
            |ens| evolve_ensemble(&ens, &ev, 1.0, 1e-5).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

criterion_group!(benches, fields, trajectories, ensembles);
criterion_main!(benches);
