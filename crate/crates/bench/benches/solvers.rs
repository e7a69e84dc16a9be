use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;
use std::sync::Arc;

use vortexlab::glfield::GlEnergy;
use vortexlab::{assemble_kernel, solve_poisson, BoundaryValues, GreenProvider, SolverParams};
use vortexlab_bench::{circle, example_annulus, smooth_rhs, trial_and_coupling, unit_disc};

fn poisson(c: &mut Criterion) {
    let mut g = c.benchmark_group("poisson");
    for h in [0.02, 0.01] {
        let grid = unit_disc(h);
        let rhs = smooth_rhs(&grid);
        let p = SolverParams::default();
        g.bench_function(format!("disc_h{h}"), |b| {
            b.iter(|| solve_poisson(&grid, black_box(&rhs), &BoundaryValues::Zero, &p).unwrap())
        });
    }
    g.finish();
}

fn kernel(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernel");
    let curve = circle(0.5f64.sqrt(), 256);
    let disc = GreenProvider::disc(1.0).unwrap();
    g.bench_function("disc_closed_form_m256", |b| b.iter(|| assemble_kernel(black_box(&curve), &disc).unwrap()));
    let grid = Arc::new(example_annulus(0.04));
    let ring = circle(0.58, 64);
    g.sample_size(10);
    g.bench_function("annulus_numeric_m64_h0.04", |b| {
        b.iter_batched(
            || GreenProvider::numeric(grid.clone(), SolverParams::default()).unwrap(),
            |p| assemble_kernel(&ring, &p).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn energy(c: &mut Criterion) {
    let mut g = c.benchmark_group("energy");
    let eps = 0.04;
    let grid = unit_disc(eps / 4.0);
    let (u, a) = trial_and_coupling(&grid, eps, 10.0);
    let e = GlEnergy::new(&grid, eps, Some(&a)).unwrap();
    g.bench_function("terms_h0.01", |b| b.iter(|| e.terms(black_box(&u)).unwrap()));
    g.bench_function("gradient_h0.01", |b| b.iter(|| e.gradient(black_box(&u)).unwrap()));
    g.finish();
}

criterion_group!(benches, poisson, kernel, energy);
criterion_main!(benches);
