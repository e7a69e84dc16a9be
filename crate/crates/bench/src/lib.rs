//! Shared fixtures for the benchmarks.

use std::f64::consts::PI;
use std::sync::Arc;

use vortexlab::glfield::perp_grad_interior;
use vortexlab::{
    build_curve, build_trial, rasterize_domain, ComplexField, Curve, CurveKind, DomainSpec, Grid2D, ScalarField,
    SolverParams, VectorField,
};

pub fn unit_disc(h: f64) -> Grid2D {
    rasterize_domain(&DomainSpec::disc(1.0), h).expect("unit disc rasterizes")
}

pub fn example_annulus(h: f64) -> Grid2D {
    rasterize_domain(&DomainSpec::annulus(1.0, 0.25), h).expect("annulus rasterizes")
}

/// Smooth right-hand side supported on the interior.
pub fn smooth_rhs(grid: &Grid2D) -> ScalarField {
    grid.sample_interior(|x, y| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin() + 1.0)
}

pub fn circle(radius: f64, m: usize) -> Arc<Curve> {
    Arc::new(build_curve(&CurveKind::Circle { center: [0.0, 0.0], radius }, m, true, None).expect("circle builds"))
}

/// Four-vortex trial state on the disc and the rotation coupling of `ζ = 4r²(1−r²)`.
pub fn trial_and_coupling(grid: &Grid2D, eps: f64, big_omega: f64) -> (ComplexField, VectorField) {
    let r = 0.5f64.sqrt();
    let points: Vec<[f64; 2]> = (0..4)
        .map(|k| {
            let t = PI / 2.0 * k as f64 + 0.1;
            [r * t.cos(), r * t.sin()]
        })
        .collect();
    let st = build_trial(grid, &points, 2.0, eps, &SolverParams::default()).expect("trial builds");
    let zeta = grid.sample_interior(|x, y| {
        let r2 = x * x + y * y;
        4.0 * r2 * (1.0 - r2)
    });
    let a = perp_grad_interior(grid, &zeta).expect("coupling").scaled(big_omega);
    (st.u, a)
}
