//! Green energy, the Green equilibrium measure on a curve, and the optimal
//! limiting vorticity.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{Curve, CurveMeasure};
use crate::elliptic::{dirichlet_energy, solve_poisson, BoundaryValues, SolverParams};
use crate::error::{Error, Result};
use crate::greens::GreenProvider;
use crate::grid::Grid2D;

/// Dense symmetric discretization of the Green kernel on curve nodes.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    pub m: usize,
    /// Row-major entries.
    pub k: Vec<f64>,
}

impl KernelMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.m + j]
    }

    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        self.k.chunks(self.m).map(|row| row.iter().zip(w).map(|(a, b)| a * b).sum()).collect()
    }

    /// `½ wᵀ K w`.
    pub fn energy(&self, w: &[f64]) -> f64 {
        0.5 * self.apply(w).iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { m: self.m, k: self.k.iter().map(|v| c * v).collect() }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.m).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Cholesky attempt; on failure, estimate the smallest eigenvalue.
    pub fn check_positive_definite(&self) -> Result<()> {
        let m = self.m;
        let mut l = self.k.clone();
        let mut ok = true;
        'outer: for j in 0..m {
            let mut d = l[j * m + j];
            for p in 0..j {
                d -= l[j * m + p] * l[j * m + p];
            }
            if !(d > 0.0) {
                ok = false;
                break 'outer;
            }
            let d = d.sqrt();
            l[j * m + j] = d;
            for i in j + 1..m {
                let mut s = l[i * m + j];
                for p in 0..j {
                    s -= l[i * m + p] * l[j * m + p];
                }
                l[i * m + j] = s / d;
            }
        }
        if ok {
            return Ok(());
        }
        Err(Error::IndefiniteKernel { min_eigenvalue: self.min_eigenvalue_estimate() })
    }

    /// Power iteration on `σI − K` with a Gershgorin shift.
    pub fn min_eigenvalue_estimate(&self) -> f64 {
        let m = self.m;
        let sigma = (0..m).map(|i| (0..m).map(|j| self.get(i, j).abs()).sum::<f64>()).fold(0.0, f64::max);
        let mut v: Vec<f64> = (0..m).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
        let mut lambda = 0.0;
        for _ in 0..2000 {
            let kv = self.apply(&v);
            let w: Vec<f64> = v.iter().zip(&kv).map(|(a, b)| sigma * a - b).collect();
            let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                break;
            }
            lambda = w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / v.iter().map(|x| x * x).sum::<f64>();
            v = w.into_iter().map(|x| x / n).collect();
        }
        sigma - lambda
    }
}

/// `K_ij = G(x_i, x_j)`, `K_ii = S(x_i, x_i) + (1/2π)(1 − ln(s_i/2))`.
pub fn assemble_kernel(curve: &Curve, provider: &GreenProvider) -> Result<KernelMatrix> {
    let m = curve.len();
    for p in &curve.nodes {
        if !provider.contains(*p) {
            return Err(Error::OutsideDomain(p[0], p[1]));
        }
    }
    if let Some(n) = provider.numeric_state() {
        let sources = curve.nodes.iter().map(|p| n.source_node(*p)).collect::<Result<Vec<_>>>()?;
        n.prefetch(&sources)?;
    }
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut row = vec![0.0; m];
            let xi = curve.nodes[i];
            for (j, v) in row.iter_mut().enumerate().skip(i) {
                *v = if i == j {
                    provider.regular_part(xi, xi)?.value + (1.0 - (0.5 * curve.spacing[i]).ln()) / (2.0 * PI)
                } else {
                    provider.green(xi, curve.nodes[j])?
                };
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut k = vec![0.0; m * m];
    for (i, row) in rows.iter().enumerate() {
        for j in i..m {
            k[i * m + j] = row[j];
            k[j * m + i] = row[j];
        }
    }
    Ok(KernelMatrix { m, k })
}

/// `I(μ) = ½ wᵀ K w` through the kernel.
pub fn green_energy(mu: &CurveMeasure, provider: &GreenProvider) -> Result<f64> {
    if mu.total_mass() == 0.0 {
        return Ok(0.0);
    }
    let k = assemble_kernel(&mu.curve, provider)?;
    Ok(k.energy(&mu.weights))
}

/// `I(μ) = ½ ∫|∇h_μ|²` with `h_μ` solved from the rasterized measure.
pub fn green_energy_pde(mu: &CurveMeasure, grid: &Grid2D, params: &SolverParams) -> Result<f64> {
    if mu.total_mass() == 0.0 {
        return Ok(0.0);
    }
    let rhs = mu.rasterize(grid, 8);
    let h = solve_poisson(grid, &rhs, &BoundaryValues::Zero, params)?;
    Ok(0.5 * dirichlet_energy(grid, &h)?)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnergyRoutes {
    pub kernel: f64,
    pub pde: f64,
    pub relative_gap: f64,
}

/// Both routes; errors when they disagree by more than 10%.
pub fn green_energy_checked(
    mu: &CurveMeasure,
    provider: &GreenProvider,
    grid: &Grid2D,
    params: &SolverParams,
) -> Result<EnergyRoutes> {
    let kernel = green_energy(mu, provider)?;
    let pde = green_energy_pde(mu, grid, params)?;
    let relative_gap = if kernel == 0.0 { 0.0 } else { (kernel - pde).abs() / kernel.abs() };
    if relative_gap > 0.1 {
        return Err(Error::RouteDisagreement { kernel, pde });
    }
    Ok(EnergyRoutes { kernel, pde, relative_gap })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct QpParams {
    /// Relative KKT residual at which iteration stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Support threshold relative to the largest weight.
    pub support_threshold: f64,
}

impl Default for QpParams {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 50_000, support_threshold: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct QpOutcome {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub frank_wolfe_steps: usize,
    /// Objective after every iteration.
    pub history: Vec<f64>,
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Relative KKT residual of `min ½wᵀKw` over the simplex at `w` with gradient `p = Kw`.
pub fn kkt_residual(w: &[f64], p: &[f64], support_threshold: f64) -> f64 {
    let lambda: f64 = w.iter().zip(p).map(|(a, b)| a * b).sum();
    let wmax = w.iter().cloned().fold(0.0, f64::max);
    let mut r: f64 = 0.0;
    for (wi, pi) in w.iter().zip(p) {
        if *wi > support_threshold * wmax {
            r = r.max((pi - lambda).abs());
        } else {
            r = r.max(lambda - pi);
        }
    }
    r / lambda.abs().max(f64::MIN_POSITIVE)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected gradient with Barzilai-Borwein steps, Armijo backtracking and a
/// Frank-Wolfe step whenever the projected step stalls.
pub fn solve_simplex_qp(k: &KernelMatrix, params: &QpParams) -> Result<QpOutcome> {
    let m = k.m;
    if m == 0 {
        return Err(Error::InvalidInput("empty kernel".into()));
    }
    let mut w = vec![1.0 / m as f64; m];
    let mut g = k.apply(&w);
    let mut f = 0.5 * dot(&w, &g);
    let mut alpha = 1.0 / (0..m).map(|i| k.get(i, i)).fold(0.0, f64::max).max(1e-300);
    let mut history = vec![f];
    let mut fw_steps = 0;
    for it in 1..=params.max_iterations {
        let res = kkt_residual(&w, &g, params.support_threshold);
        if res <= params.tolerance {
            return Ok(QpOutcome {
                weights: w,
                objective: f,
                kkt_residual: res,
                iterations: it - 1,
                frank_wolfe_steps: fw_steps,
                history,
            });
        }
        let mut accepted = None;
        let mut a = alpha;
        for _ in 0..60 {
            let trial: Vec<f64> = project_simplex(&w.iter().zip(&g).map(|(wi, gi)| wi - a * gi).collect::<Vec<_>>());
            let d: Vec<f64> = trial.iter().zip(&w).map(|(t, wi)| t - wi).collect();
            let gd = dot(&g, &d);
            if gd >= 0.0 {
                break;
            }
            let gt = k.apply(&trial);
            let ft = 0.5 * dot(&trial, &gt);
            if ft <= f + 1e-4 * gd {
                accepted = Some((trial, gt, ft));
                break;
            }
            a *= 0.5;
        }
        let (nw, ng, nf) = match accepted {
            Some(x) => x,
            None => {
                // Frank-Wolfe toward the vertex of least potential, exact line search
                fw_steps += 1;
                let imin = (0..m).min_by(|&i, &j| g[i].total_cmp(&g[j])).unwrap();
                let d: Vec<f64> = (0..m).map(|i| if i == imin { 1.0 } else { 0.0 } - w[i]).collect();
                let kd = k.apply(&d);
                let dkd = dot(&d, &kd);
                let gd = dot(&g, &d);
                if gd >= 0.0 || dkd <= 0.0 {
                    let res = kkt_residual(&w, &g, params.support_threshold);
                    return Err(Error::Descent(format!("QP stalled at iteration {it} with KKT residual {res:.3e}")));
                }
                let t = (-gd / dkd).min(1.0);
                let nw: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                let ng: Vec<f64> = g.iter().zip(&kd).map(|(a, b)| a + t * b).collect();
                let nf = 0.5 * dot(&nw, &ng);
                (nw, ng, nf)
            }
        };
        if nf > f + 1e-14 * f.abs() {
            return Err(Error::Descent(format!("objective increased at iteration {it}")));
        }
        let s: Vec<f64> = nw.iter().zip(&w).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = ng.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 0.0 {
            alpha = dot(&s, &s) / sy;
        }
        w = nw;
        g = ng;
        f = nf;
        history.push(f);
    }
    let res = kkt_residual(&w, &g, params.support_threshold);
    Err(Error::NoConvergence { iterations: params.max_iterations, residual: res })
}

#[derive(Clone, Debug)]
pub struct EquilibriumResult {
    pub measure: CurveMeasure,
    pub energy: f64,
    pub capacity: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Discrete potential `(Kw)_i`.
    pub potential: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EquilibriumSummary {
    pub energy: f64,
    pub capacity: f64,
    pub lambda: f64,
    pub value: f64,
}

impl EquilibriumResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node,weight,potential\n");
        for (i, (w, p)) in self.measure.weights.iter().zip(&self.potential).enumerate() {
            let _ = writeln!(s, "{i},{w:.17e},{p:.17e}");
        }
        s
    }

    pub fn summary(&self, zeta_max: f64) -> Result<EquilibriumSummary> {
        let opt = optimal_vorticity(zeta_max, self)?;
        Ok(EquilibriumSummary { energy: self.energy, capacity: self.capacity, lambda: opt.lambda, value: opt.value })
    }

    /// Relative spread `(max − min) / mean` of the density.
    pub fn density_spread(&self) -> f64 {
        let d = self.measure.density();
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.iter().cloned().fold(0.0, f64::max);
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        (hi - lo) / mean
    }
}

pub fn equilibrium_measure(
    curve: Arc<Curve>,
    provider: &GreenProvider,
    params: &QpParams,
) -> Result<EquilibriumResult> {
    let k = assemble_kernel(&curve, provider)?;
    equilibrium_from_kernel(curve, &k, params)
}

pub fn equilibrium_from_kernel(curve: Arc<Curve>, k: &KernelMatrix, params: &QpParams) -> Result<EquilibriumResult> {
    k.check_positive_definite()?;
    let qp = solve_simplex_qp(k, params)?;
    let potential = k.apply(&qp.weights);
    if !(qp.objective > 0.0) {
        return Err(Error::Singular(format!("equilibrium energy {} is not positive", qp.objective)));
    }
    Ok(EquilibriumResult {
        measure: CurveMeasure::new(curve, qp.weights)?,
        energy: qp.objective,
        capacity: 1.0 / qp.objective,
        kkt_residual: qp.kkt_residual,
        iterations: qp.iterations,
        potential,
    })
}

#[derive(Clone, Debug)]
pub struct OptimalVorticity {
    pub lambda: f64,
    pub measure: CurveMeasure,
    pub value: f64,
}

/// `λ* = ζ_max / (2I*)`, `μ_opt = λ*μ*`, value `−ζ_max² / (4I*)`.
pub fn optimal_vorticity(zeta_max: f64, eq: &EquilibriumResult) -> Result<OptimalVorticity> {
    optimal_vorticity_from(zeta_max, eq.energy, &eq.measure)
}

pub fn optimal_vorticity_from(zeta_max: f64, energy: f64, mu_star: &CurveMeasure) -> Result<OptimalVorticity> {
    if !(energy > 0.0) {
        return Err(Error::InvalidInput("equilibrium energy must be positive".into()));
    }
    if !(zeta_max >= 0.0) {
        return Err(Error::InvalidInput("zeta_max must be nonnegative".into()));
    }
    let lambda = zeta_max / (2.0 * energy);
    Ok(OptimalVorticity { lambda, measure: mu_star.scaled(lambda), value: -zeta_max * zeta_max / (4.0 * energy) })
}
