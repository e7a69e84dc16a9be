//! Ginzburg-Landau energies, the pre-Jacobian, quantized vorticity, the
//! vorticity distance, the Hodge check and a descent minimizer.
//!
//! Order parameters live on the corner lattice of a [`Grid2D`]; currents live on
//! its edges; the plaquette around a potential node carries that node's charge.

use std::collections::VecDeque;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::curve::deposit;
use crate::elliptic::{dirichlet_energy, solve_poisson, BoundaryValues, SolverParams};
use crate::error::{Error, Result};
use crate::grid::{perp_grad, plaquette_curl, ComplexField, Grid2D, LatticeMask, ScalarField, VectorField};

/// Choice of the excess rotation `ω(ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OmegaChoice {
    /// `|ln ε|^{1/2}`
    SqrtLog,
    /// `ln |ln ε|`
    LogLog,
    /// `|ln ε|^p`, `0 < p < 1`
    Power { p: f64 },
    /// Constant offset; not an admissible regime, used for sub-critical checks.
    Fixed { value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationSchedule {
    pub zeta_max: f64,
    pub omega: OmegaChoice,
}

impl RotationSchedule {
    pub fn new(zeta_max: f64, omega: OmegaChoice) -> Result<Self> {
        if !(zeta_max > 0.0 && zeta_max.is_finite()) {
            return Err(Error::InvalidInput(format!("zeta_max must be positive, got {zeta_max}")));
        }
        if let OmegaChoice::Power { p } = omega {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidInput(format!("omega exponent must lie in (0, 1), got {p}")));
            }
        }
        Ok(Self { zeta_max, omega })
    }

    /// `ω(ε)`.
    pub fn omega(&self, eps: f64) -> f64 {
        let l = eps.ln().abs();
        match self.omega {
            OmegaChoice::SqrtLog => l.sqrt(),
            OmegaChoice::LogLog => l.ln(),
            OmegaChoice::Power { p } => l.powf(p),
            OmegaChoice::Fixed { value } => value,
        }
    }

    /// `Ω(ε) = |ln ε| / (2ζ_max) + ω(ε)`.
    pub fn big_omega(&self, eps: f64) -> f64 {
        eps.ln().abs() / (2.0 * self.zeta_max) + self.omega(eps)
    }

    /// Whether the choice satisfies `ω → ∞` and `ω / |ln ε| → 0` as `ε → 0`.
    pub fn is_admissible(&self) -> bool {
        !matches!(self.omega, OmegaChoice::Fixed { .. })
    }

    /// Along a strictly decreasing ε list: `ω` increases and `ω / |ln ε|` decreases.
    pub fn check_regime(&self, eps: &[f64]) -> Result<()> {
        if !self.is_admissible() {
            return Err(Error::InvalidInput("fixed omega is not an admissible rotation regime".into()));
        }
        for w in eps.windows(2) {
            let (a, b) = (w[0], w[1]);
            if !(b < a) {
                return Err(Error::InvalidInput("epsilon list must be strictly decreasing".into()));
            }
            if !(self.omega(b) > self.omega(a)) || !(self.omega(b) / b.ln().abs() < self.omega(a) / a.ln().abs()) {
                return Err(Error::InvalidInput(format!(
                    "omega schedule leaves its regime between eps={a} and eps={b}"
                )));
            }
        }
        if let Some(&e) = eps.first() {
            if !(self.omega(e) > 0.0) {
                return Err(Error::InvalidInput(format!("omega({e}) is not positive")));
            }
        }
        Ok(())
    }
}

/// `j_e = Im(ū_a u_b) / h` on active corner edges.
pub fn pre_jacobian(grid: &Grid2D, u: &ComplexField) -> Result<VectorField> {
    let mask = grid.corners();
    if u.dims != mask.dims {
        return Err(Error::GridMismatch);
    }
    let d = mask.dims;
    let inv_h = 1.0 / mask.h;
    let mut out = VectorField::zeros(d);
    for j in 0..d.ny {
        for i in 0..d.nx {
            let a = u.values[d.node(i, j)];
            if i + 1 < d.nx && mask.xedge[d.xedge(i, j)] {
                out.x[d.xedge(i, j)] = (a.conj() * u.values[d.node(i + 1, j)]).im * inv_h;
            }
            if j + 1 < d.ny && mask.yedge[d.yedge(i, j)] {
                out.y[d.yedge(i, j)] = (a.conj() * u.values[d.node(i, j + 1)]).im * inv_h;
            }
        }
    }
    Ok(out)
}

/// Quantized plaquette charges of an order parameter.
#[derive(Clone, Debug)]
pub struct VorticityMeasure {
    /// Winding number per corner cell (same indexing as potential-lattice nodes).
    pub winding: Vec<i32>,
    /// Cells with a corner below the modulus floor.
    pub flagged: Vec<bool>,
    /// Multiplies `2π · winding` when the measure is used as a density.
    pub normalization: f64,
    /// Largest distance of a raw plaquette sum from its nearest multiple of 2π.
    pub max_rounding: f64,
}

impl VorticityMeasure {
    pub fn charge(&self, cell: usize) -> f64 {
        2.0 * PI * self.winding[cell] as f64
    }

    pub fn total_winding(&self) -> i64 {
        self.winding.iter().map(|&w| w as i64).sum()
    }

    pub fn total_charge(&self) -> f64 {
        2.0 * PI * self.total_winding() as f64
    }

    pub fn normalized(&self, factor: f64) -> Self {
        Self { normalization: factor, ..self.clone() }
    }

    pub fn conj(&self) -> Self {
        Self { winding: self.winding.iter().map(|w| -w).collect(), ..self.clone() }
    }

    /// Connected clusters (8-neighbour) of charged cells, as (centroid, degree).
    pub fn vortices(&self, grid: &Grid2D) -> Vec<Vortex> {
        let d = grid.dims;
        let mut seen = vec![false; self.winding.len()];
        let mut out = Vec::new();
        for start in 0..self.winding.len() {
            if self.winding[start] == 0 || seen[start] {
                continue;
            }
            seen[start] = true;
            let mut q = VecDeque::from([start]);
            let (mut sx, mut sy, mut sw, mut deg) = (0.0, 0.0, 0.0, 0i64);
            while let Some(c) = q.pop_front() {
                let w = self.winding[c];
                let p = grid.pos_of(c);
                sx += p[0] * w.abs() as f64;
                sy += p[1] * w.abs() as f64;
                sw += w.abs() as f64;
                deg += w as i64;
                let (i, j) = d.coords(c);
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if a < 0 || b < 0 || a >= d.nx as i64 || b >= d.ny as i64 {
                            continue;
                        }
                        let n = d.node(a as usize, b as usize);
                        if !seen[n] && self.winding[n] != 0 {
                            seen[n] = true;
                            q.push_back(n);
                        }
                    }
                }
            }
            out.push(Vortex { position: [sx / sw, sy / sw], degree: deg });
        }
        out
    }

    /// Density of `normalization · 2π · winding` deposited on a (possibly different) grid.
    pub fn density_on(&self, source: &Grid2D, target: &Grid2D) -> ScalarField {
        let mut out = ScalarField::zeros(target.dims);
        let inv_h2 = 1.0 / (target.h * target.h);
        for (c, &w) in self.winding.iter().enumerate() {
            if w != 0 {
                deposit(target, &mut out, source.pos_of(c), self.normalization * 2.0 * PI * w as f64 * inv_h2);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vortex {
    pub position: [f64; 2],
    pub degree: i64,
}

/// Plaquette winding from branch-normalized phase differences in (−π, π].
pub fn vorticity(grid: &Grid2D, u: &ComplexField, delta0: f64) -> Result<VorticityMeasure> {
    let mask = grid.corners();
    if u.dims != mask.dims {
        return Err(Error::GridMismatch);
    }
    let d = mask.dims;
    let n = d.cell_count();
    // principal phase increment along each edge, antisymmetric by construction
    let darg = |a: Complex64, b: Complex64| -> f64 {
        let z = b * a.conj();
        z.im.atan2(z.re)
    };
    let mut ex = vec![0.0; d.xedge_count()];
    let mut ey = vec![0.0; d.yedge_count()];
    for j in 0..d.ny {
        for i in 0..d.nx {
            let a = u.values[d.node(i, j)];
            if i + 1 < d.nx && mask.xedge[d.xedge(i, j)] {
                ex[d.xedge(i, j)] = darg(a, u.values[d.node(i + 1, j)]);
            }
            if j + 1 < d.ny && mask.yedge[d.yedge(i, j)] {
                ey[d.yedge(i, j)] = darg(a, u.values[d.node(i, j + 1)]);
            }
        }
    }
    let mut raw = vec![0.0; n];
    let mut flagged = vec![false; n];
    for j in 0..d.ny - 1 {
        for i in 0..d.nx - 1 {
            let c = d.cell(i, j);
            if !mask.cell[c] {
                continue;
            }
            let ring = [d.node(i, j), d.node(i + 1, j), d.node(i + 1, j + 1), d.node(i, j + 1)];
            flagged[c] = ring.iter().any(|&k| u.values[k].norm() < delta0);
            raw[c] = ex[d.xedge(i, j)] + ey[d.yedge(i + 1, j)] - ex[d.xedge(i, j + 1)] - ey[d.yedge(i, j)];
        }
    }
    let mut winding = vec![0; n];
    let mut max_rounding: f64 = 0.0;
    for c in 0..n {
        if mask.cell[c] && !flagged[c] {
            let w = (raw[c] / (2.0 * PI)).round();
            max_rounding = max_rounding.max((raw[c] - 2.0 * PI * w).abs());
            winding[c] = w as i32;
        }
    }
    // a flagged cluster carries the circulation of its outline, lumped on its central cell
    let pd = grid.dims;
    let mut seen = vec![false; n];
    for start in 0..n {
        if !flagged[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut q = VecDeque::from([start]);
        let mut members = Vec::new();
        while let Some(c) = q.pop_front() {
            members.push(c);
            let (i, j) = pd.coords(c);
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if a < 0 || b < 0 || a >= pd.nx as i64 || b >= pd.ny as i64 {
                        continue;
                    }
                    let m = pd.node(a as usize, b as usize);
                    if flagged[m] && !seen[m] {
                        seen[m] = true;
                        q.push_back(m);
                    }
                }
            }
        }
        let total: f64 = members.iter().map(|&c| raw[c]).sum();
        let w = (total / (2.0 * PI)).round();
        if w != 0.0 {
            let k = members.len() as f64;
            let cx = members.iter().map(|&c| grid.pos_of(c)[0]).sum::<f64>() / k;
            let cy = members.iter().map(|&c| grid.pos_of(c)[1]).sum::<f64>() / k;
            let centre = *members
                .iter()
                .min_by(|&&a, &&b| {
                    let (pa, pb) = (grid.pos_of(a), grid.pos_of(b));
                    let da = (pa[0] - cx).hypot(pa[1] - cy);
                    let db = (pb[0] - cx).hypot(pb[1] - cy);
                    da.total_cmp(&db)
                })
                .unwrap();
            winding[centre] = w as i32;
        }
    }
    Ok(VorticityMeasure { winding, flagged, normalization: 1.0, max_rounding })
}

/// Corner-lattice edge field `∇⊥ζ`, with ζ taken as zero off the interior.
pub fn perp_grad_interior(grid: &Grid2D, zeta: &ScalarField) -> Result<VectorField> {
    if zeta.dims != grid.dims {
        return Err(Error::GridMismatch);
    }
    let mut z = ScalarField::zeros(grid.dims);
    for k in grid.interior_nodes() {
        z.values[k] = zeta.values[k];
    }
    perp_grad(grid, &z)
}

/// Raw discrete terms: kinetic, potential and `Σ_e A_e Im(ū_a u_b) h`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub kinetic: f64,
    pub potential: f64,
    pub coupling: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential + self.coupling
    }
}

/// Corner weights: a quarter cell per adjacent active cell.
pub fn corner_weights(mask: &LatticeMask) -> Vec<f64> {
    mask.node_area_weights()
}

/// Discrete GL energy with an optional edge coupling field `A` (pairs with `j`).
pub struct GlEnergy<'a> {
    pub grid: &'a Grid2D,
    pub eps: f64,
    pub coupling: Option<&'a VectorField>,
    weights: Vec<f64>,
}

impl<'a> GlEnergy<'a> {
    pub fn new(grid: &'a Grid2D, eps: f64, coupling: Option<&'a VectorField>) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {eps}")));
        }
        if let Some(a) = coupling {
            if a.dims != grid.corners().dims {
                return Err(Error::GridMismatch);
            }
        }
        Ok(Self { grid, eps, coupling, weights: corner_weights(grid.corners()) })
    }

    pub fn terms(&self, u: &ComplexField) -> Result<EnergyTerms> {
        let mask = self.grid.corners();
        if u.dims != mask.dims {
            return Err(Error::GridMismatch);
        }
        let d = mask.dims;
        let h = mask.h;
        let mut t = EnergyTerms::default();
        let c = 1.0 / (4.0 * self.eps * self.eps);
        for (k, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                let m = 1.0 - u.values[k].norm_sqr();
                t.potential += w * c * m * m;
            }
        }
        for j in 0..d.ny {
            for i in 0..d.nx {
                let a = u.values[d.node(i, j)];
                if i + 1 < d.nx && mask.xedge[d.xedge(i, j)] {
                    let b = u.values[d.node(i + 1, j)];
                    t.kinetic += 0.5 * (b - a).norm_sqr();
                    if let Some(f) = self.coupling {
                        t.coupling += f.x[d.xedge(i, j)] * (a.conj() * b).im * h;
                    }
                }
                if j + 1 < d.ny && mask.yedge[d.yedge(i, j)] {
                    let b = u.values[d.node(i, j + 1)];
                    t.kinetic += 0.5 * (b - a).norm_sqr();
                    if let Some(f) = self.coupling {
                        t.coupling += f.y[d.yedge(i, j)] * (a.conj() * b).im * h;
                    }
                }
            }
        }
        Ok(t)
    }

    /// Gradient with respect to `(Re u, Im u)` packed as complex numbers.
    pub fn gradient(&self, u: &ComplexField) -> Result<ComplexField> {
        let mask = self.grid.corners();
        if u.dims != mask.dims {
            return Err(Error::GridMismatch);
        }
        let d = mask.dims;
        let h = mask.h;
        let inv_e2 = 1.0 / (self.eps * self.eps);
        let mut g = ComplexField::constant(d, Complex64::new(0.0, 0.0));
        for (k, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                let z = u.values[k];
                g.values[k] -= z * (w * (1.0 - z.norm_sqr()) * inv_e2);
            }
        }
        let i_unit = Complex64::new(0.0, 1.0);
        let edge = |ka: usize, kb: usize, a_e: Option<f64>, g: &mut ComplexField| {
            let (a, b) = (u.values[ka], u.values[kb]);
            g.values[ka] += a - b;
            g.values[kb] += b - a;
            if let Some(ae) = a_e {
                g.values[ka] -= i_unit * b * (ae * h);
                g.values[kb] += i_unit * a * (ae * h);
            }
        };
        for j in 0..d.ny {
            for i in 0..d.nx {
                let ka = d.node(i, j);
                if i + 1 < d.nx && mask.xedge[d.xedge(i, j)] {
                    edge(ka, d.node(i + 1, j), self.coupling.map(|f| f.x[d.xedge(i, j)]), &mut g);
                }
                if j + 1 < d.ny && mask.yedge[d.yedge(i, j)] {
                    edge(ka, d.node(i, j + 1), self.coupling.map(|f| f.y[d.yedge(i, j)]), &mut g);
                }
            }
        }
        for (k, active) in mask.node.iter().enumerate() {
            if !active {
                g.values[k] = Complex64::new(0.0, 0.0);
            }
        }
        Ok(g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub potential: f64,
    pub rotation: f64,
    /// `kinetic + potential`.
    pub e_eps: f64,
    /// `(e_eps + rotation) / ω²`.
    pub f_eps: f64,
    pub eps: f64,
    pub omega: f64,
    pub big_omega: f64,
}

impl EnergyBreakdown {
    /// `π D |ln ε|`.
    pub fn core_budget(&self, d: usize) -> f64 {
        PI * d as f64 * self.eps.ln().abs()
    }
}

/// `F_ε` with rotation term `Ω ∫ ∇⊥ζ · j(u)`.
pub fn energy(
    grid: &Grid2D,
    u: &ComplexField,
    eps: f64,
    schedule: &RotationSchedule,
    zeta: &ScalarField,
) -> Result<EnergyBreakdown> {
    let big_omega = schedule.big_omega(eps);
    let a = perp_grad_interior(grid, zeta)?.scaled(big_omega);
    let e = GlEnergy::new(grid, eps, Some(&a))?;
    let t = e.terms(u)?;
    let omega = schedule.omega(eps);
    Ok(breakdown(t, eps, omega, big_omega))
}

pub fn breakdown(t: EnergyTerms, eps: f64, omega: f64, big_omega: f64) -> EnergyBreakdown {
    let e_eps = t.kinetic + t.potential;
    EnergyBreakdown {
        kinetic: t.kinetic,
        potential: t.potential,
        rotation: t.coupling,
        e_eps,
        f_eps: (e_eps + t.coupling) / (omega * omega),
        eps,
        omega,
        big_omega,
    }
}

/// Point masses deposited as a density on the grid.
pub fn point_density(grid: &Grid2D, points: &[[f64; 2]], mass_each: f64) -> ScalarField {
    let mut out = ScalarField::zeros(grid.dims);
    let inv_h2 = 1.0 / (grid.h * grid.h);
    for p in points {
        deposit(grid, &mut out, *p, mass_each * inv_h2);
    }
    out
}

/// `‖∇h‖_{L²}` with `−Δh = a − b`, zero boundary values.
pub fn hminus1_distance(grid: &Grid2D, a: &ScalarField, b: &ScalarField, params: &SolverParams) -> Result<f64> {
    if a.dims != grid.dims || b.dims != grid.dims {
        return Err(Error::GridMismatch);
    }
    let mut rhs = a.clone();
    rhs.axpy(-1.0, b);
    let h = solve_poisson(grid, &rhs, &BoundaryValues::Zero, params)?;
    Ok(dirichlet_energy(grid, &h)?.sqrt())
}

#[derive(Clone, Debug)]
pub struct HodgeResult {
    /// Stream function on the potential lattice.
    pub h: ScalarField,
    /// Potential on the corner lattice.
    pub g: ScalarField,
    pub defect: f64,
    pub norm_j_sq: f64,
    pub norm_h_sq: f64,
    pub norm_g_sq: f64,
}

/// Split a corner-lattice current as `j = ∇g − ∇⊥h`.
pub fn hodge_check(grid: &Grid2D, j: &VectorField, params: &SolverParams) -> Result<HodgeResult> {
    if grid.has_inner_boundary() {
        return Err(Error::InvalidInput("hodge check needs a simply connected grid".into()));
    }
    let mask = grid.corners();
    if j.dims != mask.dims {
        return Err(Error::GridMismatch);
    }
    let curl = plaquette_curl(mask, j)?.into_node_field();
    let mut rhs = ScalarField::zeros(grid.dims);
    for k in grid.interior_nodes() {
        rhs.values[k] = curl.values[k];
    }
    let h = solve_poisson(grid, &rhs, &BoundaryValues::Zero, params)?;
    let ph = perp_grad(grid, &h)?;
    let r = j.add(&ph);
    let g = integrate_tree(mask, &r);
    let gg = crate::grid::grad(mask, &g)?;
    let hh = mask.h;
    let norm_h_sq = ph.norm_sq(hh);
    let norm_g_sq = gg.norm_sq(hh);
    let denom = (norm_h_sq * norm_g_sq).sqrt();
    let defect = if denom == 0.0 { 0.0 } else { ph.dot(&gg, hh).abs() / denom };
    Ok(HodgeResult { h, g, defect, norm_j_sq: j.norm_sq(hh), norm_h_sq, norm_g_sq })
}

/// Node potential whose differences reproduce `r` along a BFS spanning tree of
/// active edges, rooted at the active node of least index.
pub fn integrate_tree(mask: &LatticeMask, r: &VectorField) -> ScalarField {
    let d = mask.dims;
    let h = mask.h;
    let mut out = ScalarField::zeros(d);
    let mut seen = vec![false; d.node_count()];
    for root in 0..d.node_count() {
        if !mask.node[root] || seen[root] {
            continue;
        }
        seen[root] = true;
        let mut q = VecDeque::from([root]);
        while let Some(k) = q.pop_front() {
            let (i, j) = d.coords(k);
            let v = out.values[k];
            let mut visit = |n: usize, dv: f64| {
                if !seen[n] {
                    seen[n] = true;
                    out.values[n] = v + dv;
                    q.push_back(n);
                }
            };
            if i + 1 < d.nx && mask.xedge[d.xedge(i, j)] {
                visit(k + 1, r.x[d.xedge(i, j)] * h);
            }
            if i > 0 && mask.xedge[d.xedge(i - 1, j)] {
                visit(k - 1, -r.x[d.xedge(i - 1, j)] * h);
            }
            if j + 1 < d.ny && mask.yedge[d.yedge(i, j)] {
                visit(k + d.nx, r.y[d.yedge(i, j)] * h);
            }
            if j > 0 && mask.yedge[d.yedge(i, j - 1)] {
                visit(k - d.nx, -r.y[d.yedge(i, j - 1)] * h);
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    /// Stop when `‖∇F‖_∞` falls below this.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    pub initial_step: f64,
    pub min_step: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self { gradient_tolerance: 1e-6, max_iterations: 20_000, initial_step: 0.1, min_step: 1e-14 }
    }
}

#[derive(Clone, Debug)]
pub struct FlowOutcome {
    pub u: ComplexField,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Discrete `ω² F_ε` after every accepted step.
    pub history: Vec<f64>,
}

/// Gradient descent on the discrete functional with Barzilai-Borwein step
/// proposals and monotone backtracking.
pub fn minimize_energy(init: &ComplexField, energy: &GlEnergy<'_>, params: &FlowParams) -> Result<FlowOutcome> {
    let mut u = init.clone();
    let mut f = energy.terms(&u)?.total();
    let mut g = energy.gradient(&u)?;
    let mut step = params.initial_step;
    let mut history = vec![f];
    let gnorm = |g: &ComplexField| g.values.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    for it in 0..params.max_iterations {
        let gn = gnorm(&g);
        if gn <= params.gradient_tolerance {
            return Ok(FlowOutcome { u, iterations: it, gradient_norm: gn, converged: true, history });
        }
        let g2: f64 = g.values.iter().map(|z| z.norm_sqr()).sum();
        let mut tau = step;
        let (nu, nf) = loop {
            let trial = ComplexField {
                dims: u.dims,
                values: u.values.iter().zip(&g.values).map(|(a, b)| a - b * tau).collect(),
            };
            let ft = energy.terms(&trial)?.total();
            if ft <= f - 1e-4 * tau * g2 {
                break (trial, ft);
            }
            tau *= 0.5;
            if tau < params.min_step {
                return Err(Error::Descent(format!("step collapsed at iteration {it}")));
            }
        };
        if nf > f {
            return Err(Error::Descent(format!("energy increased at iteration {it}")));
        }
        let ng = energy.gradient(&nu)?;
        let mut sy = 0.0;
        let mut ss = 0.0;
        for k in 0..nu.values.len() {
            let s = nu.values[k] - u.values[k];
            let y = ng.values[k] - g.values[k];
            sy += s.re * y.re + s.im * y.im;
            ss += s.norm_sqr();
        }
        step = if sy > 0.0 { (ss / sy).clamp(params.min_step, 1e3) } else { tau * 2.0 };
        u = nu;
        f = nf;
        g = ng;
        history.push(f);
    }
    let gn = gnorm(&g);
    Ok(FlowOutcome { u, iterations: params.max_iterations, gradient_norm: gn, converged: false, history })
}

/// Descent on `F_ε`; the result never has higher energy than the start.
pub fn minimize_f(
    grid: &Grid2D,
    init: &ComplexField,
    eps: f64,
    schedule: &RotationSchedule,
    zeta: &ScalarField,
    params: &FlowParams,
) -> Result<FlowOutcome> {
    if grid.h > eps / 2.0 + 1e-15 {
        return Err(Error::InvalidInput(format!("epsilon {eps} is not resolved by h = {}", grid.h)));
    }
    let a = perp_grad_interior(grid, zeta)?.scaled(schedule.big_omega(eps));
    let e = GlEnergy::new(grid, eps, Some(&a))?;
    minimize_energy(init, &e, params)
}
