use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use proptest::prelude::*;
use vortexlab::annulus::rigid_rotation;
use vortexlab::curve::cumulative_mass;
use vortexlab::equilibrium::{equilibrium_from_kernel, project_simplex};
use vortexlab::glfield::{pre_jacobian, GlEnergy};
use vortexlab::grid::{div, grad, plaquette_curl};
use vortexlab::recovery::profile;
use vortexlab::*;

fn disc_grid() -> &'static Grid2D {
    static G: OnceLock<Grid2D> = OnceLock::new();
    G.get_or_init(|| rasterize_domain(&DomainSpec::disc(1.0), 0.1).unwrap())
}

fn annulus_ctx() -> &'static AnnulusContext {
    static C: OnceLock<AnnulusContext> = OnceLock::new();
    C.get_or_init(|| {
        let g = Arc::new(rasterize_domain(&DomainSpec::annulus(1.0, 0.25), 0.04).unwrap());
        AnnulusContext::build(g, &rigid_rotation(), &SolverParams::default()).unwrap()
    })
}

fn circle(r: f64, m: usize) -> Arc<Curve> {
    Arc::new(build_curve(&CurveKind::Circle { center: [0.0, 0.0], radius: r }, m, true, None).unwrap())
}

fn field_from(g: &Grid2D, coef: &[f64]) -> ScalarField {
    g.sample(|x, y| coef[0] * (coef[1] * x).sin() + coef[2] * (coef[3] * y).cos() + coef[4] * x * y)
}

fn coefs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn curl_of_grad_vanishes(c in coefs()) {
        let g = disc_grid();
        let f = field_from(g, &c);
        let curl = plaquette_curl(g.nodes(), &grad(g.nodes(), &f).unwrap()).unwrap();
        let scale = f.max_abs().max(1.0) / (g.h * g.h);
        prop_assert!(curl.values.iter().all(|v| v.abs() <= 1e-12 * scale));
    }

    #[test]
    fn div_is_negative_adjoint_of_grad(c in coefs(), d in coefs()) {
        let g = disc_grid();
        let mut f = field_from(g, &c);
        for k in 0..f.values.len() {
            if !g.is_interior(k) {
                f.values[k] = 0.0;
            }
        }
        let w = grad(g.nodes(), &field_from(g, &d)).unwrap();
        let lhs = grad(g.nodes(), &f).unwrap().dot(&w, g.h);
        let dv = div(g.nodes(), &w).unwrap();
        let rhs: f64 = f.values.iter().zip(&dv.values).map(|(a, b)| a * b).sum::<f64>() * g.h * g.h;
        prop_assert!((lhs + rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn poisson_is_linear_and_monotone(c in coefs(), d in coefs(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let g = disc_grid();
        let p = SolverParams::default();
        let f1 = field_from(g, &c);
        let f2 = field_from(g, &d);
        let mut comb = f1.scaled(a);
        comb.axpy(b, &f2);
        let u = solve_poisson(g, &comb, &BoundaryValues::Zero, &p).unwrap();
        let mut v = solve_poisson(g, &f1, &BoundaryValues::Zero, &p).unwrap().scaled(a);
        v.axpy(b, &solve_poisson(g, &f2, &BoundaryValues::Zero, &p).unwrap());
        let diff = u.values.iter().zip(&v.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-7 * (1.0 + u.max_abs()));

        let pos = ScalarField { dims: f1.dims, values: f1.values.iter().map(|x| x.abs()).collect() };
        let s = solve_poisson(g, &pos, &BoundaryValues::Zero, &p).unwrap();
        prop_assert!(s.values.iter().all(|&x| x >= -1e-12));
    }

    #[test]
    fn disc_green_symmetric_and_nonnegative(r1 in 0.0f64..0.95, t1 in 0.0f64..std::f64::consts::TAU, r2 in 0.0f64..0.95, t2 in 0.0f64..std::f64::consts::TAU) {
        let x = [r1 * t1.cos(), r1 * t1.sin()];
        let y = [r2 * t2.cos(), r2 * t2.sin()];
        prop_assume!((x[0] - y[0]).hypot(x[1] - y[1]) > 1e-6);
        let p = GreenProvider::disc(1.0).unwrap();
        let a = p.green(x, y).unwrap();
        let b = p.green(y, x).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn simplex_projection_is_feasible_and_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let w = project_simplex(&v);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let again = project_simplex(&w);
        prop_assert!(w.iter().zip(&again).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn mollify_keeps_sign_and_mass(w in prop::collection::vec(0.0f64..3.0, 64), k in 1.0f64..4.0) {
        prop_assume!(w.iter().sum::<f64>() > 0.0);
        let mu = CurveMeasure::new(circle(0.5, 64), w).unwrap();
        let m = mollify(&mu, k).unwrap();
        prop_assert!(m.weights.iter().all(|&x| x >= 0.0));
        prop_assert!((m.total_mass() - mu.total_mass()).abs() <= 1e-12 * mu.total_mass());
    }

    #[test]
    fn placement_partitions_mass(w in prop::collection::vec(0.1f64..3.0, 64), omega in 1.0f64..20.0) {
        let mu = CurveMeasure::new(circle(0.5, 64), w).unwrap();
        let p = place_vortices(&mu, omega).unwrap();
        let mass = mu.total_mass();
        prop_assert_eq!(p.d, (omega * mass / (2.0 * PI) * (1.0 + 1e-12)).floor() as usize);
        let cm = cumulative_mass(&mu).unwrap();
        for (k, &t) in p.t.iter().enumerate() {
            prop_assert!((cm.eval(t) - 2.0 * PI * (k + 1) as f64 / omega).abs() <= 1e-9 * (1.0 + mass));
        }
    }

    #[test]
    fn gauge_invariance_and_conjugation(alpha in 0.0f64..std::f64::consts::TAU, ax in -0.5f64..0.5, ay in -0.5f64..0.5) {
        let g = disc_grid();
        let u = ComplexField::from_fn(g.corners(), |x, y| {
            let z = Complex64::new(x - ax, y - ay);
            z / z.norm() * profile(z.norm(), 0.1)
        });
        let v = u.rotated(alpha);
        let zeta = g.sample_interior(|x, y| 1.0 - x * x - y * y);
        let a = vortexlab::glfield::perp_grad_interior(g, &zeta).unwrap();
        let e = GlEnergy::new(g, 0.2, Some(&a)).unwrap();
        let (tu, tv) = (e.terms(&u).unwrap(), e.terms(&v).unwrap());
        prop_assert!((tu.total() - tv.total()).abs() <= 1e-9 * (1.0 + tu.total().abs()));
        let (ju, jv) = (pre_jacobian(g, &u).unwrap(), pre_jacobian(g, &v).unwrap());
        prop_assert!(ju.x.iter().zip(&jv.x).chain(ju.y.iter().zip(&jv.y)).all(|(p, q)| (p - q).abs() <= 1e-9));
        let (wu, wv) = (vorticity(g, &u, 0.3).unwrap(), vorticity(g, &v, 0.3).unwrap());
        prop_assert_eq!(&wu.winding, &wv.winding);
        let wc = vorticity(g, &u.conj(), 0.3).unwrap();
        prop_assert_eq!(wc.winding, wu.conj().winding);
        prop_assert_eq!(wu.total_winding(), 1);
    }

    #[test]
    fn optimal_degree_is_the_argmin(gamma in 0.01f64..5.0, big_omega in 0.0f64..100.0, s in 0.2f64..5.0) {
        let (d, tie) = optimal_degree(gamma, big_omega);
        let cost = |k: i64| (gamma * big_omega - 2.0 * PI * k as f64).abs();
        let best = (d - 10..=d + 10).min_by(|a, b| cost(*a).partial_cmp(&cost(*b)).unwrap().then(a.cmp(b))).unwrap();
        prop_assert_eq!(d, best);
        if !tie {
            prop_assert_eq!(optimal_degree(gamma * s, big_omega / s).0, d);
        }
    }

    #[test]
    fn hole_energy_is_a_parabola(big_omega in 0.0f64..60.0, d in -5i64..30) {
        let c = annulus_ctx();
        let second = c.g(d + 1, big_omega) + c.g(d - 1, big_omega) - 2.0 * c.g(d, big_omega);
        let expect = 4.0 * PI * PI / c.cap;
        prop_assert!((second - expect).abs() <= 1e-9 * expect);
        let best = c.g(optimal_degree(c.gamma_v, big_omega).0, big_omega);
        prop_assert!(c.g(d, big_omega) >= best - 1e-9 * (1.0 + best.abs()));
    }

    #[test]
    fn kernel_scaling_leaves_argmin(scale in 0.1f64..10.0) {
        let curve = circle(0.5, 48);
        let p = GreenProvider::disc(1.0).unwrap();
        let k = assemble_kernel(&curve, &p).unwrap();
        let q = QpParams::default();
        let a = equilibrium_from_kernel(curve.clone(), &k, &q).unwrap();
        let b = equilibrium_from_kernel(curve, &k.scaled(scale), &q).unwrap();
        prop_assert!((b.energy - scale * a.energy).abs() <= 1e-6 * scale * a.energy);
        let dw = a.measure.weights.iter().zip(&b.measure.weights).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(dw <= 1e-6);
    }

    #[test]
    fn schedules_stay_in_regime(e0 in 0.001f64..0.05, ratio in 0.2f64..0.8) {
        let eps = [e0, e0 * ratio, e0 * ratio * ratio];
        for choice in [OmegaChoice::SqrtLog, OmegaChoice::LogLog, OmegaChoice::Power { p: 0.5 }] {
            let s = RotationSchedule::new(1.0, choice).unwrap();
            prop_assert!(s.check_regime(&eps).is_ok());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn trial_state_invariants(t0 in 0.0f64..std::f64::consts::TAU, n in 1usize..4) {
        let grid = rasterize_domain(&DomainSpec::disc(1.0), 0.02).unwrap();
        let eps = 0.05;
        let points: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let t = t0 + 2.0 * PI * k as f64 / n as f64;
                [0.6 * t.cos(), 0.6 * t.sin()]
            })
            .collect();
        let omega = 3.0;
        let st = build_trial(&grid, &points, omega, eps, &SolverParams::default()).unwrap();
        let mask = grid.corners();
        for k in 0..st.u.values.len() {
            if !mask.node[k] {
                continue;
            }
            let (i, j) = mask.dims.coords(k);
            let p = mask.pos(i, j);
            let far = st.cores.iter().all(|c| (p[0] - c.center[0]).hypot(p[1] - c.center[1]) > 2.0 * st.r_core + 1e-12);
            if far {
                prop_assert!((st.u.values[k].norm() - 1.0).abs() <= 1e-12);
            }
        }
        let v = vorticity(&grid, &st.u, 0.3).unwrap();
        prop_assert_eq!(v.total_winding(), n as i64);
        prop_assert!(v.winding.iter().all(|&w| w >= 0));
    }
}

#[test]
fn capacity_function_range_and_monotone_capacity() {
    let mut caps = Vec::new();
    for rho in [0.15, 0.25, 0.4] {
        let g = Arc::new(rasterize_domain(&DomainSpec::annulus(1.0, rho), 0.02).unwrap());
        let c = AnnulusContext::build(g, &rigid_rotation(), &SolverParams::default()).unwrap();
        assert!(c.xi.values.iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
        assert!(c.cap > 0.0);
        caps.push(c.cap);
    }
    assert!(caps[0] < caps[1] && caps[1] < caps[2], "{caps:?}");
}
