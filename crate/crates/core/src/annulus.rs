//! Annulus theory: capacity function, rotation potential, hole modes,
//! the optimal hole degree, the energy decomposition and the concentric oracle.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::elliptic::{dirichlet_energy, solve_harmonic_two_values, solve_poisson, BoundaryValues, SolverParams};
use crate::error::{Error, Result};
use crate::glfield::{GlEnergy, RotationSchedule};
use crate::grid::{
    perp_grad, plaquette_curl, BoundaryChains, ComplexField, DomainSpec, Grid2D, ScalarField, VectorField,
};
use crate::recovery::phase_from_increments;

pub type VelocityFn = Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>;

/// Rigid rotation `V = x⊥ = (−y, x)`.
pub fn rigid_rotation() -> VelocityFn {
    Arc::new(|x, y| [-y, x])
}

#[derive(Clone)]
pub struct AnnulusContext {
    pub grid: Arc<Grid2D>,
    pub xi: ScalarField,
    /// `∫|∇ξ|²`.
    pub cap: f64,
    pub zeta: ScalarField,
    pub zeta_max: f64,
    /// Whether `max ζ = max |ζ|`.
    pub zeta_sign_ok: bool,
    /// Hole-side route: discrete flux of `ζ` plus circulation of `V` around the hole.
    pub gamma_v: f64,
    /// Outer-boundary route (quadrature on circular boundaries, chain sum otherwise).
    pub gamma_v_outer: f64,
    /// `V` on corner edges.
    pub v: VectorField,
    /// `∫|V|²`.
    pub v_norm_sq: f64,
    /// `∫|∇ζ|²`.
    pub grad_zeta_sq: f64,
    pub params: SolverParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContextSummary {
    pub cap: f64,
    pub gamma_v: f64,
    pub gamma_v_outer: f64,
    pub zeta_max: f64,
    pub r_star_observed: f64,
}

impl AnnulusContext {
    pub fn build(grid: Arc<Grid2D>, v: &VelocityFn, params: &SolverParams) -> Result<Self> {
        if !grid.has_inner_boundary() {
            return Err(Error::InvalidInput("annulus context needs a grid with a hole".into()));
        }
        let (xi, zeta_and_v) = rayon::join(
            || solve_harmonic_two_values(&grid, 1.0, 0.0, params),
            || -> Result<(ScalarField, VectorField)> {
                let ve = VectorField::sample(grid.corners(), |x, y| v(x, y));
                let curl = plaquette_curl(grid.corners(), &ve)?.into_node_field();
                let mut rhs = ScalarField::zeros(grid.dims);
                for k in grid.interior_nodes() {
                    rhs.values[k] = curl.values[k];
                }
                Ok((solve_poisson(&grid, &rhs, &BoundaryValues::Zero, params)?, ve))
            },
        );
        let xi = xi?;
        let (zeta, ve) = zeta_and_v?;
        let cap = dirichlet_energy(&grid, &xi)?;
        if !(cap > 0.0) {
            return Err(Error::Degenerate("capacity is not positive".into()));
        }
        let h = grid.h;
        let chains = grid.boundary_chains();
        let flow = perp_grad(&grid, &zeta)?.add(&ve);
        let gamma_v = BoundaryChains::circulation(&chains.inner, &flow, h);
        let gamma_v_outer = match grid.spec {
            DomainSpec::Annulus { outer, .. } => outer_quadrature(&grid, &zeta, v, outer),
            _ => BoundaryChains::circulation(&chains.outer, &flow, h),
        };
        let scale = gamma_v.abs().max(gamma_v_outer.abs());
        if scale > 1e-12 && (gamma_v - gamma_v_outer).abs() > 0.1 * scale {
            return Err(Error::RouteDisagreement { kernel: gamma_v_outer, pde: gamma_v });
        }
        let (mut zmax, mut zmin) = (0.0f64, 0.0f64);
        for k in grid.interior_nodes() {
            zmax = zmax.max(zeta.values[k]);
            zmin = zmin.min(zeta.values[k]);
        }
        Ok(Self {
            v_norm_sq: ve.norm_sq(h),
            grad_zeta_sq: dirichlet_energy(&grid, &zeta)?,
            grid,
            xi,
            cap,
            zeta,
            zeta_max: zmax,
            zeta_sign_ok: zmax >= -zmin,
            gamma_v,
            gamma_v_outer,
            v: ve,
            params: *params,
        })
    }

    /// `V = x⊥` on the annulus.
    pub fn rigid(grid: Arc<Grid2D>, params: &SolverParams) -> Result<Self> {
        Self::build(grid, &rigid_rotation(), params)
    }

    /// Relative disagreement of the two `γ_V` routes.
    pub fn gamma_gap(&self) -> f64 {
        let s = self.gamma_v.abs().max(self.gamma_v_outer.abs());
        if s == 0.0 {
            0.0
        } else {
            (self.gamma_v - self.gamma_v_outer).abs() / s
        }
    }

    /// `∫(|V|² − |∇ζ|²)`.
    pub fn rotation_defect(&self) -> f64 {
        self.v_norm_sq - self.grad_zeta_sq
    }

    /// Radius of the interior node maximizing `ζ`.
    pub fn r_star_observed(&self) -> f64 {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in self.grid.interior_nodes() {
            if self.zeta.values[k] > best.0 {
                let p = self.grid.pos_of(k);
                best = (self.zeta.values[k], p[0].hypot(p[1]));
            }
        }
        best.1
    }

    pub fn summary(&self) -> ContextSummary {
        ContextSummary {
            cap: self.cap,
            gamma_v: self.gamma_v,
            gamma_v_outer: self.gamma_v_outer,
            zeta_max: self.zeta_max,
            r_star_observed: self.r_star_observed(),
        }
    }

    /// `g(d, Ω) = |γ_V Ω − 2πd|²/(2 cap) − (Ω²/2)∫(|V|² − |∇ζ|²)`.
    pub fn g(&self, d: i64, big_omega: f64) -> f64 {
        let gap = self.gamma_v * big_omega - 2.0 * PI * d as f64;
        gap * gap / (2.0 * self.cap) - 0.5 * big_omega * big_omega * self.rotation_defect()
    }

    /// Coupling field `−ΩV` of `H_Ω`.
    pub fn rotation_coupling(&self, big_omega: f64) -> VectorField {
        self.v.scaled(-big_omega)
    }

    /// `H_Ω(u) = ½∫|∇u|² − Ω∫V·j(u)`, plus the potential term when `eps` is given.
    pub fn h_omega(&self, u: &ComplexField, big_omega: f64, eps: Option<f64>) -> Result<f64> {
        let a = self.rotation_coupling(big_omega);
        let e = GlEnergy::new(&self.grid, eps.unwrap_or(1.0), Some(&a))?;
        let t = e.terms(u)?;
        Ok(t.kinetic + t.coupling + if eps.is_some() { t.potential } else { 0.0 })
    }
}

/// `∫_{∂D} (∂ζ/∂ν + V·τ)` on the circle of radius `r`; the normal derivative
/// is extrapolated from three interior samples of the interpolated `ζ`.
fn outer_quadrature(grid: &Grid2D, zeta: &ScalarField, v: &VelocityFn, r: f64) -> f64 {
    let n = ((2.0 * PI * r / grid.h).ceil() as usize).max(64);
    let delta = 2.0 * grid.h;
    let mask = grid.nodes();
    let mut sum = 0.0;
    for k in 0..n {
        let t = 2.0 * PI * (k as f64 + 0.5) / n as f64;
        let (c, s) = (t.cos(), t.sin());
        let z = |m: f64| zeta.interpolate(mask, [(r - m * delta) * c, (r - m * delta) * s]);
        let dn = (2.5 * z(1.0) - 4.0 * z(2.0) + 1.5 * z(3.0)) / delta;
        let vv = v(r * c, r * s);
        let vt = -vv[0] * s + vv[1] * c;
        sum += dn + vt;
    }
    sum * 2.0 * PI * r / n as f64
}

#[derive(Clone, Debug)]
pub struct HoleModeResult {
    pub d: i64,
    pub alpha: f64,
    pub phi: ScalarField,
    /// `½∫|∇Φ_d|² − (Ω²/2)∫|V|²`.
    pub g_integral: f64,
    /// Closed-form expression in `d`.
    pub g_formula: f64,
    pub u: ComplexField,
    pub hole_circulation: f64,
}

/// `Φ_d = α ξ + Ω ζ` and the unimodular `u_d` with `j(u_d) = ∇⊥Φ_d + ΩV`.
pub fn hole_mode(ctx: &AnnulusContext, d: i64, big_omega: f64) -> Result<HoleModeResult> {
    let grid = &*ctx.grid;
    let alpha = (ctx.gamma_v * big_omega - 2.0 * PI * d as f64) / ctx.cap;
    let mut phi = ctx.xi.scaled(alpha);
    phi.axpy(big_omega, &ctx.zeta);
    let g_integral = 0.5 * dirichlet_energy(grid, &phi)? - 0.5 * big_omega * big_omega * ctx.v_norm_sq;
    let theta = perp_grad(grid, &phi)?.add(&ctx.v.scaled(big_omega)).scaled(grid.h);
    let ph = phase_from_increments(grid, theta, &[])?;
    let hole_circulation = ph.hole_circulation.unwrap_or(0.0);
    let defect = (hole_circulation - 2.0 * PI * d as f64).abs();
    if defect > 1e-6 * (1.0 + (2.0 * PI * d as f64).abs()) {
        return Err(Error::ClosureDefect { defect });
    }
    let mask = grid.corners();
    let mut u = ComplexField::constant(mask.dims, Complex64::new(0.0, 0.0));
    for (k, z) in u.values.iter_mut().enumerate() {
        if mask.node[k] {
            *z = Complex64::from_polar(1.0, ph.phase.values[k]);
        }
    }
    Ok(HoleModeResult { d, alpha, phi, g_integral, g_formula: ctx.g(d, big_omega), u, hole_circulation })
}

/// Minimizer of `|γ_V Ω − 2πd|` over integers; the tie flag marks `γ_V Ω/π` odd.
/// At a tie the smaller degree is returned.
pub fn optimal_degree(gamma_v: f64, big_omega: f64) -> (i64, bool) {
    let x = gamma_v * big_omega / PI;
    let n = x.round();
    let tie = (x - n).abs() < 1e-9 && (n as i64).rem_euclid(2) == 1;
    if tie {
        (((n - 1.0) / 2.0) as i64, true)
    } else {
        ((x / 2.0).round() as i64, false)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MinH {
    pub d: i64,
    pub tie: bool,
    pub value: f64,
    /// `−(Ω²/2)∫(|V|² − |∇ζ|²)`.
    pub leading: f64,
    /// `|γ_V Ω − 2πd|²/(2 cap)`.
    pub remainder: f64,
}

pub fn min_h(ctx: &AnnulusContext, big_omega: f64) -> MinH {
    let (d, tie) = optimal_degree(ctx.gamma_v, big_omega);
    let gap = ctx.gamma_v * big_omega - 2.0 * PI * d as f64;
    MinH {
        d,
        tie,
        value: ctx.g(d, big_omega),
        leading: -0.5 * big_omega * big_omega * ctx.rotation_defect(),
        remainder: gap * gap / (2.0 * ctx.cap),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub eps: f64,
    pub omega: f64,
    pub big_omega: f64,
    pub d: i64,
    /// `J_ε(u)`.
    pub j_eps: f64,
    /// `H_Ω(u*)` on the grid.
    pub min_h: f64,
    /// Closed-form `g(d_Ω, Ω)`.
    pub min_h_formula: f64,
    /// `ω² F̄_ε(v)`.
    pub fbar_scaled: f64,
    pub residual: f64,
    /// `∫(|u|² − 1){|∇u*|²/2 − ΩV·j(u*)}`.
    pub residual_integral: f64,
    /// `ε Ω² √E_ε(u)`.
    pub bound: f64,
}

/// `J_ε(u) = min H_Ω + ω² F̄_ε(v) + residual`, `v = ū* u`.
pub fn energy_decomposition_audit(
    u: &ComplexField,
    ctx: &AnnulusContext,
    eps: f64,
    schedule: &RotationSchedule,
) -> Result<DecompositionReport> {
    let grid = &*ctx.grid;
    let mask = grid.corners();
    if u.dims != mask.dims {
        return Err(Error::GridMismatch);
    }
    let omega = schedule.omega(eps);
    let big_omega = schedule.big_omega(eps);
    let (d, _) = optimal_degree(ctx.gamma_v, big_omega);
    let hm = hole_mode(ctx, d, big_omega)?;
    let v = hm.u.conj().mul(u);

    let a = ctx.rotation_coupling(big_omega);
    let tj = GlEnergy::new(grid, eps, Some(&a))?.terms(u)?;
    let j_eps = tj.total();
    let min_h = ctx.h_omega(&hm.u, big_omega, None)?;
    let flow = perp_grad(grid, &hm.phi)?;
    let fbar_scaled = GlEnergy::new(grid, eps, Some(&flow))?.terms(&v)?.total();

    let d_ = mask.dims;
    let h = grid.h;
    let mut residual_integral = 0.0;
    let mut edge = |ka: usize, kb: usize, ve: f64| {
        let (za, zb) = (hm.u.values[ka], hm.u.values[kb]);
        let z = za.conj() * zb;
        let dens = (1.0 - z.re) - big_omega * ve * z.im * h;
        let m = 0.5 * (u.values[ka].norm_sqr() + u.values[kb].norm_sqr()) - 1.0;
        residual_integral += m * dens;
    };
    for j in 0..d_.ny {
        for i in 0..d_.nx {
            let k = d_.node(i, j);
            if i + 1 < d_.nx && mask.xedge[d_.xedge(i, j)] {
                edge(k, d_.node(i + 1, j), ctx.v.x[d_.xedge(i, j)]);
            }
            if j + 1 < d_.ny && mask.yedge[d_.yedge(i, j)] {
                edge(k, d_.node(i, j + 1), ctx.v.y[d_.yedge(i, j)]);
            }
        }
    }
    Ok(DecompositionReport {
        eps,
        omega,
        big_omega,
        d,
        j_eps,
        min_h,
        min_h_formula: ctx.g(d, big_omega),
        fbar_scaled,
        residual: j_eps - min_h - fbar_scaled,
        residual_integral,
        bound: eps * big_omega * big_omega * (tj.kinetic + tj.potential).sqrt(),
    })
}

/// Closed forms for the concentric annulus `ρ < |x| < R` with `V = x⊥`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ExampleOracle {
    pub outer: f64,
    pub inner: f64,
    pub r_star: f64,
    pub zeta_max: f64,
    pub i_star: f64,
}

impl ExampleOracle {
    pub fn new(outer: f64, inner: f64) -> Result<Self> {
        if !(inner > 0.0 && inner < outer && outer.is_finite()) {
            return Err(Error::InvalidInput(format!("need 0 < rho < R, got rho={inner}, R={outer}")));
        }
        let r_star = ((outer * outer - inner * inner) / (2.0 * (outer / inner).ln())).sqrt();
        let mut o = Self { outer, inner, r_star, zeta_max: 0.0, i_star: 0.0 };
        o.zeta_max = o.zeta(r_star);
        o.i_star = 0.5 * o.h_star(r_star);
        Ok(o)
    }

    pub fn zeta(&self, r: f64) -> f64 {
        let (big_r, rho) = (self.outer, self.inner);
        let l = (big_r / rho).ln();
        -r * r / 2.0
            + (big_r * big_r - rho * rho) / (2.0 * l) * r.ln()
            + (rho * rho * big_r.ln() - big_r * big_r * rho.ln()) / (2.0 * l)
    }

    /// Potential of the uniform probability measure on the `r*` circle, zero on both loops.
    pub fn h_star(&self, r: f64) -> f64 {
        let a = (self.outer / self.r_star).ln();
        let b = (self.r_star / self.inner).ln();
        if r <= self.r_star {
            a / (2.0 * PI * (a + b)) * (r / self.inner).ln()
        } else {
            b / (2.0 * PI * (a + b)) * (self.outer / r).ln()
        }
    }

    pub fn capacity(&self) -> f64 {
        2.0 * PI / (self.outer / self.inner).ln()
    }

    /// `γ_V = 2π r*²`.
    pub fn gamma_v(&self) -> f64 {
        2.0 * PI * self.r_star * self.r_star
    }
}
