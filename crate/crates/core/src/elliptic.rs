//! Dirichlet Poisson and harmonic solves on masked grids.
//!
//! The unknowns are the interior nodes; boundary nodes carry Dirichlet data.
//! The discrete operator is the 5-point `-Δ_h`, solved with preconditioned CG.
//! A fitted variant moves the Dirichlet condition from the staircase node to
//! the true boundary crossing of each cut edge, changing only the diagonal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundaryPart, Grid2D, NodeStatus, ScalarField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    Jacobi,
    Ssor,
}

/// Where Dirichlet data act on edges that leave the interior.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryFit {
    /// At the boundary node itself.
    #[default]
    Staircase,
    /// At the crossing of the edge with the continuum boundary (symmetric ghost-point rule).
    Fitted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    /// Relative residual `‖b − Ax‖ / ‖b‖`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub preconditioner: Preconditioner,
    /// SSOR relaxation factor in (0, 2).
    pub relaxation: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 20_000, preconditioner: Preconditioner::Ssor, relaxation: 1.5 }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::InvalidInput(format!("solver tolerance must lie in (0, 1), got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("solver max_iterations must be at least 1".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::InvalidInput("SSOR relaxation must lie in (0, 2)".into()));
        }
        Ok(())
    }
}

/// Dirichlet data on boundary nodes.
#[derive(Clone, Debug)]
pub enum BoundaryValues {
    Zero,
    /// One constant per boundary component.
    Components {
        outer: f64,
        inner: f64,
    },
    /// Values read from boundary nodes of a field on the same grid.
    Nodes(ScalarField),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

const NONE: u32 = u32::MAX;

/// Compact 5-point system over the interior nodes of a grid.
#[derive(Debug)]
pub struct Laplacian {
    /// Grid node index of each unknown (row-major order).
    pub nodes: Vec<usize>,
    /// Unknown index of each grid node, or `NONE`.
    index: Vec<u32>,
    /// Interior neighbours (left, right, down, up) as unknown indices.
    nbr: Vec<[u32; 4]>,
    /// Boundary neighbours per unknown as (grid node, inside fraction of the edge).
    bnd: Vec<Vec<(usize, f64)>>,
    /// Diagonal of the `h²`-scaled operator: 4, plus `1/θ − 1` per fitted cut edge.
    diag: Vec<f64>,
    pub fit: BoundaryFit,
    h: f64,
    node_count: usize,
}

/// Smallest inside fraction of a cut edge; keeps the fitted diagonal bounded.
const MIN_THETA: f64 = 1e-3;

/// Fraction of the segment `p → q` that lies inside the domain, `p` inside and `q` not.
fn inside_fraction(grid: &Grid2D, p: [f64; 2], q: [f64; 2]) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if grid.spec.contains(p[0] + mid * (q[0] - p[0]), p[1] + mid * (q[1] - p[1])) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).max(MIN_THETA)
}

impl Laplacian {
    pub fn new(grid: &Grid2D) -> Result<Self> {
        Self::with_fit(grid, BoundaryFit::Staircase)
    }

    pub fn with_fit(grid: &Grid2D, fit: BoundaryFit) -> Result<Self> {
        let d = grid.dims;
        let nodes: Vec<usize> = grid.interior_nodes().collect();
        if nodes.is_empty() {
            return Err(Error::EmptyInterior);
        }
        let mut index = vec![NONE; d.node_count()];
        for (u, &k) in nodes.iter().enumerate() {
            index[k] = u as u32;
        }
        let mut nbr = Vec::with_capacity(nodes.len());
        let mut bnd = Vec::with_capacity(nodes.len());
        let mut diag = Vec::with_capacity(nodes.len());
        let mut any_boundary = false;
        for &k in &nodes {
            let around = [k - 1, k + 1, k - d.nx, k + d.nx];
            let mut row = [NONE; 4];
            let mut b = Vec::new();
            let mut a = 4.0;
            for (s, &n) in around.iter().enumerate() {
                match grid.status_at(n) {
                    NodeStatus::Interior => row[s] = index[n],
                    NodeStatus::Boundary(_) => {
                        let theta = match fit {
                            BoundaryFit::Staircase => 1.0,
                            BoundaryFit::Fitted => inside_fraction(grid, grid.pos_of(k), grid.pos_of(n)),
                        };
                        a += 1.0 / theta - 1.0;
                        b.push((n, theta));
                        any_boundary = true;
                    }
                    NodeStatus::Exterior => unreachable!("interior node adjacent to exterior"),
                }
            }
            nbr.push(row);
            bnd.push(b);
            diag.push(a);
        }
        if !any_boundary {
            return Err(Error::Singular("no boundary nodes".into()));
        }
        Ok(Self { nodes, index, nbr, bnd, diag, fit, h: grid.h, node_count: d.node_count() })
    }

    pub fn unknowns(&self) -> usize {
        self.nodes.len()
    }

    pub fn unknown_of(&self, node: usize) -> Option<usize> {
        let u = self.index[node];
        (u != NONE).then_some(u as usize)
    }

    /// `y = A x` with `A = diag − adjacency` (the `h²`-scaled `-Δ_h`).
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (u, row) in self.nbr.iter().enumerate() {
            let mut s = self.diag[u] * x[u];
            for &n in row {
                if n != NONE {
                    s -= x[n as usize];
                }
            }
            y[u] = s;
        }
    }

    fn precondition(&self, params: &SolverParams, r: &[f64], z: &mut [f64]) {
        match params.preconditioner {
            Preconditioner::None => z.copy_from_slice(r),
            Preconditioner::Jacobi => {
                for ((zi, ri), a) in z.iter_mut().zip(r).zip(&self.diag) {
                    *zi = ri / a;
                }
            }
            Preconditioner::Ssor => {
                let w = params.relaxation;
                let c = w * (2.0 - w);
                // forward: (D + wL) y = c r, neighbours left and below precede in row-major order
                for u in 0..z.len() {
                    let row = &self.nbr[u];
                    let mut s = c * r[u];
                    for &n in &row[..] {
                        if n != NONE && (n as usize) < u {
                            s += w * z[n as usize];
                        }
                    }
                    z[u] = s / self.diag[u];
                }
                // backward: (D + wU) z = D y
                for u in (0..z.len()).rev() {
                    let row = &self.nbr[u];
                    let mut s = 0.0;
                    for &n in &row[..] {
                        if n != NONE && (n as usize) > u {
                            s += z[n as usize];
                        }
                    }
                    z[u] += w * s / self.diag[u];
                }
            }
        }
    }

    /// Solve `A x = b` by preconditioned conjugate gradients from a zero start.
    pub fn cg(&self, b: &[f64], params: &SolverParams) -> Result<(Vec<f64>, SolveStats)> {
        let n = b.len();
        let bnorm = norm(b);
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok((x, SolveStats::default()));
        }
        let mut r = b.to_vec();
        let mut z = vec![0.0; n];
        self.precondition(params, &r, &mut z);
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        let mut rel = 1.0;
        for it in 1..=params.max_iterations {
            self.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                return Err(Error::Singular("operator not positive definite".into()));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            rel = norm(&r) / bnorm;
            if rel <= params.tolerance {
                // confirm with a true residual to guard against drift
                self.apply(&x, &mut ap);
                let true_rel = b.iter().zip(&ap).map(|(bi, ai)| (bi - ai).powi(2)).sum::<f64>().sqrt() / bnorm;
                if true_rel <= params.tolerance * 10.0 {
                    return Ok((x, SolveStats { iterations: it, relative_residual: true_rel }));
                }
                for i in 0..n {
                    r[i] = b[i] - ap[i];
                }
            }
            self.precondition(params, &r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::NoConvergence { iterations: params.max_iterations, residual: rel })
    }

    /// Solve `-Δ_h u = rhs` on the interior with Dirichlet data. A fitted
    /// operator takes node data as the value at the edge crossing.
    pub fn solve(
        &self,
        grid: &Grid2D,
        rhs: &ScalarField,
        bc: &BoundaryValues,
        params: &SolverParams,
    ) -> Result<(ScalarField, SolveStats)> {
        params.validate()?;
        if rhs.dims != grid.dims || self.node_count != grid.dims.node_count() {
            return Err(Error::GridMismatch);
        }
        let mut out = ScalarField::zeros(grid.dims);
        let bc_value = |k: usize| -> Result<f64> {
            Ok(match bc {
                BoundaryValues::Zero => 0.0,
                BoundaryValues::Components { outer, inner } => match grid.status_at(k) {
                    NodeStatus::Boundary(BoundaryPart::Inner) => *inner,
                    _ => *outer,
                },
                BoundaryValues::Nodes(f) => {
                    if f.dims != grid.dims {
                        return Err(Error::GridMismatch);
                    }
                    f.values[k]
                }
            })
        };
        for k in 0..grid.dims.node_count() {
            if let NodeStatus::Boundary(_) = grid.status_at(k) {
                let v = bc_value(k)?;
                if !v.is_finite() {
                    return Err(Error::InvalidInput("boundary value is not finite".into()));
                }
                out.values[k] = v;
            }
        }
        let h2 = self.h * self.h;
        let b: Vec<f64> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(u, &k)| h2 * rhs.values[k] + self.bnd[u].iter().map(|&(n, t)| out.values[n] / t).sum::<f64>())
            .collect();
        let (x, stats) = self.cg(&b, params)?;
        for (u, &k) in self.nodes.iter().enumerate() {
            out.values[k] = x[u];
        }
        Ok((out, stats))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `-Δ_h u = rhs` with Dirichlet data; see [`Laplacian::solve`].
pub fn solve_poisson(
    grid: &Grid2D,
    rhs: &ScalarField,
    bc: &BoundaryValues,
    params: &SolverParams,
) -> Result<ScalarField> {
    Ok(solve_poisson_with_stats(grid, rhs, bc, params)?.0)
}

pub fn solve_poisson_with_stats(
    grid: &Grid2D,
    rhs: &ScalarField,
    bc: &BoundaryValues,
    params: &SolverParams,
) -> Result<(ScalarField, SolveStats)> {
    Laplacian::new(grid)?.solve(grid, rhs, bc, params)
}

/// Harmonic function equal to `inner_value` on the hole boundary and `outer_value` outside.
pub fn solve_harmonic_two_values(
    grid: &Grid2D,
    inner_value: f64,
    outer_value: f64,
    params: &SolverParams,
) -> Result<ScalarField> {
    if !grid.has_inner_boundary() {
        return Err(Error::InvalidInput("grid has no inner boundary loop".into()));
    }
    let rhs = ScalarField::zeros(grid.dims);
    solve_poisson(grid, &rhs, &BoundaryValues::Components { outer: outer_value, inner: inner_value }, params)
}

/// `-Δ_h f` at interior nodes (zero elsewhere), using the stored boundary values of `f`.
pub fn neg_laplacian(grid: &Grid2D, f: &ScalarField) -> Result<ScalarField> {
    if f.dims != grid.dims {
        return Err(Error::GridMismatch);
    }
    let d = grid.dims;
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let mut out = ScalarField::zeros(d);
    for k in grid.interior_nodes() {
        let v = f.values[k];
        out.values[k] =
            (4.0 * v - f.values[k - 1] - f.values[k + 1] - f.values[k - d.nx] - f.values[k + d.nx]) * inv_h2;
    }
    Ok(out)
}

/// Dirichlet energy `∫|∇_h f|²` over the active edges of the potential lattice.
pub fn dirichlet_energy(grid: &Grid2D, f: &ScalarField) -> Result<f64> {
    let g = crate::grid::grad(grid.nodes(), f)?;
    Ok(g.norm_sq(grid.h))
}
