//! Dirichlet Green function: image formula on the disc, numerical columns elsewhere.
//!
//! Numerical columns subtract the infinite-lattice potential kernel, so the
//! cached quantity `G_h(·, s) + a(· − s)` is discrete-harmonic everywhere and can
//! be interpolated without resolving the logarithmic singularity.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::elliptic::{BoundaryFit, Laplacian, SolverParams};
use crate::error::{Error, Result};
use crate::grid::{bilinear, Grid2D, ScalarField};

const INV_2PI: f64 = 0.5 / PI;
/// Euler-Mascheroni constant plus 1.5 ln 2: the constant in the lattice kernel asymptotics.
pub const LATTICE_C0: f64 = 0.577_215_664_901_532_9 + 1.5 * std::f64::consts::LN_2;
const TABLE_RADIUS: usize = 12;

/// Potential kernel of the simple random walk on Z²: `a(0) = 0`, `Δa = δ_0`.
pub fn lattice_kernel(m: i64, n: i64) -> f64 {
    let (m, n) = (m.unsigned_abs() as usize, n.unsigned_abs() as usize);
    if m <= TABLE_RADIUS && n <= TABLE_RADIUS {
        return kernel_table()[m * (TABLE_RADIUS + 1) + n];
    }
    lattice_kernel_asymptotic(m as f64, n as f64)
}

fn lattice_kernel_asymptotic(m: f64, n: f64) -> f64 {
    let r2 = m * m + n * n;
    let theta = n.atan2(m);
    INV_2PI * (0.5 * r2.ln() + LATTICE_C0) - (4.0 * theta).cos() / (24.0 * PI * r2)
}

fn kernel_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let w = TABLE_RADIUS + 1;
        let mut t = vec![0.0; w * w];
        for m in 0..w {
            for n in 0..=m {
                let v = kernel_quadrature(m as f64, n as f64);
                t[m * w + n] = v;
                t[n * w + m] = v;
            }
        }
        t
    })
}

/// `a(m,n) = (1/π) ∫_0^π (1 − cos(mk) e^{−n t(k)}) / (2 sinh t(k)) dk`, `cosh t = 2 − cos k`.
fn kernel_quadrature(m: f64, n: f64) -> f64 {
    if m == 0.0 && n == 0.0 {
        return 0.0;
    }
    let f = |k: f64| -> f64 {
        if k == 0.0 {
            // limit k → 0: t ~ k, numerator ~ n k (+ m²k²/2)
            return 0.5 * n;
        }
        let c = 2.0 - k.cos();
        let t = c.acosh();
        let sh = (c * c - 1.0).sqrt();
        (1.0 - (m * k).cos() * (-n * t).exp()) / (2.0 * sh)
    };
    // composite Simpson; the integrand is smooth on [0, π]
    let steps = 20_000;
    let dk = PI / steps as f64;
    let mut s = f(0.0) + f(PI);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * dk);
    }
    s * dk / 3.0 / PI
}

/// Regular part value together with the snap distance of the source node used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularPart {
    pub value: f64,
    pub offset: f64,
}

type Column = std::result::Result<Arc<Vec<f64>>, String>;

/// Numerical Green columns on a rasterized grid, with the zero condition
/// fitted to the true boundary crossings.
pub struct NumericGreen {
    pub grid: Arc<Grid2D>,
    pub params: SolverParams,
    /// Columns beyond this count are computed but not retained.
    pub max_columns: usize,
    laplacian: Laplacian,
    cache: Mutex<HashMap<usize, Arc<OnceLock<Column>>>>,
}

impl std::fmt::Debug for NumericGreen {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NumericGreen")
            .field("h", &self.grid.h)
            .field("dims", &self.grid.dims)
            .field("cached", &self.cached_columns())
            .finish()
    }
}

impl NumericGreen {
    pub fn new(grid: Arc<Grid2D>, params: SolverParams) -> Result<Self> {
        params.validate()?;
        let laplacian = Laplacian::with_fit(&grid, BoundaryFit::Fitted)?;
        Ok(Self { grid, params, max_columns: 4096, laplacian, cache: Mutex::new(HashMap::new()) })
    }

    pub fn cached_columns(&self) -> usize {
        self.cache.lock().map(|c| c.len()).unwrap_or(0)
    }

    fn solve_column(&self, source: usize) -> Column {
        let g = &self.grid;
        let su = self.laplacian.unknown_of(source).ok_or_else(|| "source is not an interior node".to_string())?;
        let mut b = vec![0.0; self.laplacian.unknowns()];
        b[su] = 1.0;
        let (x, _) = self.laplacian.cg(&b, &self.params).map_err(|e| e.to_string())?;
        let (si, sj) = g.dims.coords(source);
        let mut r = vec![0.0; g.dims.node_count()];
        for (k, v) in r.iter_mut().enumerate() {
            let (i, j) = g.dims.coords(k);
            *v = lattice_kernel(i as i64 - si as i64, j as i64 - sj as i64);
        }
        for (u, &k) in self.laplacian.nodes.iter().enumerate() {
            r[k] += x[u];
        }
        Ok(Arc::new(r))
    }

    /// Regularized column `G_h(·, s) + a(· − s)` for an interior source node.
    pub fn column(&self, source: usize) -> Result<Arc<Vec<f64>>> {
        let cell = {
            let mut cache = self.cache.lock().expect("green cache poisoned");
            match cache.get(&source) {
                Some(c) => c.clone(),
                None if cache.len() < self.max_columns => {
                    let c = Arc::new(OnceLock::new());
                    cache.insert(source, c.clone());
                    c
                }
                None => Arc::new(OnceLock::new()),
            }
        };
        cell.get_or_init(|| self.solve_column(source))
            .clone()
            .map_err(|e| Error::Singular(format!("green column at node {source}: {e}")))
    }

    /// Solve columns for many sources in parallel.
    pub fn prefetch(&self, sources: &[usize]) -> Result<()> {
        sources.par_iter().try_for_each(|&s| self.column(s).map(|_| ()))
    }

    /// Discrete Green function `G_h(·, s)` as a field (zero off the interior).
    pub fn green_column(&self, source: usize) -> Result<ScalarField> {
        let r = self.column(source)?;
        let g = &self.grid;
        let (si, sj) = g.dims.coords(source);
        let mut out = ScalarField::zeros(g.dims);
        for k in g.interior_nodes() {
            let (i, j) = g.dims.coords(k);
            out.values[k] = r[k] - lattice_kernel(i as i64 - si as i64, j as i64 - sj as i64);
        }
        Ok(out)
    }

    /// Interior source node for a point: the nearest node if interior, else the
    /// nearest interior node in its 3×3 neighbourhood.
    pub fn source_node(&self, p: [f64; 2]) -> Result<usize> {
        let g = &self.grid;
        if !g.spec.contains(p[0], p[1]) {
            return Err(Error::OutsideDomain(p[0], p[1]));
        }
        let (i, j) = g.nearest_node(p).ok_or(Error::OutsideDomain(p[0], p[1]))?;
        let mut best: Option<(f64, usize)> = None;
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                if a < 0 || b < 0 || a >= g.dims.nx as i64 || b >= g.dims.ny as i64 {
                    continue;
                }
                let k = g.dims.node(a as usize, b as usize);
                if !g.is_interior(k) {
                    continue;
                }
                let q = g.pos_of(k);
                let d = (q[0] - p[0]).hypot(q[1] - p[1]);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, k));
                }
            }
        }
        best.map(|(_, k)| k).ok_or(Error::OutsideDomain(p[0], p[1]))
    }

    fn interp_grad(&self, col: &[f64], p: [f64; 2]) -> [f64; 2] {
        let g = &self.grid;
        let d = g.dims;
        let fx = ((p[0] - g.origin[0]) / g.h).clamp(0.0, (d.nx - 1) as f64 - 1e-9);
        let fy = ((p[1] - g.origin[1]) / g.h).clamp(0.0, (d.ny - 1) as f64 - 1e-9);
        let (i, j) = (fx.floor() as usize, fy.floor() as usize);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let v00 = col[d.node(i, j)];
        let v10 = col[d.node(i + 1, j)];
        let v01 = col[d.node(i, j + 1)];
        let v11 = col[d.node(i + 1, j + 1)];
        [((1.0 - ty) * (v10 - v00) + ty * (v11 - v01)) / g.h, ((1.0 - tx) * (v01 - v00) + tx * (v11 - v10)) / g.h]
    }

    /// `S(x, y)` with first-order correction for the snapped source.
    fn regular_one_sided(&self, x: [f64; 2], y: [f64; 2]) -> Result<RegularPart> {
        let g = &self.grid;
        let ny = self.source_node(y)?;
        let nx = self.source_node(x)?;
        let col_y = self.column(ny)?;
        let col_x = self.column(nx)?;
        let q = g.pos_of(ny);
        let base = bilinear(g.dims, g.origin, g.h, x, |k| col_y[k]);
        // ∂_y S(x, ·) at q equals the gradient of the column sourced near x, by symmetry
        let grad = self.interp_grad(&col_x, q);
        let corr = grad[0] * (y[0] - q[0]) + grad[1] * (y[1] - q[1]);
        let value = base + corr + INV_2PI * (g.h.ln() - LATTICE_C0);
        Ok(RegularPart { value, offset: (y[0] - q[0]).hypot(y[1] - q[1]) })
    }

    pub fn regular_part(&self, x: [f64; 2], y: [f64; 2]) -> Result<RegularPart> {
        let a = self.regular_one_sided(x, y)?;
        let b = self.regular_one_sided(y, x)?;
        Ok(RegularPart { value: 0.5 * (a.value + b.value), offset: a.offset.max(b.offset) })
    }
}

#[derive(Debug)]
pub enum GreenMode {
    DiscClosedForm { radius: f64 },
    Numeric(Box<NumericGreen>),
}

/// Green function of a domain.
#[derive(Debug)]
pub struct GreenProvider {
    pub mode: GreenMode,
}

impl GreenProvider {
    pub fn disc(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput("disc radius must be positive".into()));
        }
        Ok(Self { mode: GreenMode::DiscClosedForm { radius } })
    }

    pub fn numeric(grid: Arc<Grid2D>, params: SolverParams) -> Result<Self> {
        Ok(Self { mode: GreenMode::Numeric(Box::new(NumericGreen::new(grid, params)?)) })
    }

    pub fn numeric_state(&self) -> Option<&NumericGreen> {
        match &self.mode {
            GreenMode::Numeric(n) => Some(n),
            _ => None,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match &self.mode {
            GreenMode::DiscClosedForm { radius } => p[0] * p[0] + p[1] * p[1] < radius * radius,
            GreenMode::Numeric(n) => n.grid.spec.contains(p[0], p[1]),
        }
    }

    /// `G(x, y)`; `x` may lie on the boundary of the disc.
    pub fn green(&self, x: [f64; 2], y: [f64; 2]) -> Result<f64> {
        let dist = (x[0] - y[0]).hypot(x[1] - y[1]);
        if dist == 0.0 {
            return Err(Error::Singular("green function evaluated on the diagonal".into()));
        }
        let s = self.regular_part(x, y)?.value;
        Ok(s - INV_2PI * dist.ln())
    }

    /// `S(x, y) = G(x, y) + (1/2π) ln|x − y|`, finite on the diagonal.
    pub fn regular_part(&self, x: [f64; 2], y: [f64; 2]) -> Result<RegularPart> {
        match &self.mode {
            GreenMode::DiscClosedForm { radius } => {
                let r2 = radius * radius;
                for p in [x, y] {
                    if p[0] * p[0] + p[1] * p[1] > r2 * (1.0 + 1e-12) {
                        return Err(Error::OutsideDomain(p[0], p[1]));
                    }
                }
                let xx = x[0] * x[0] + x[1] * x[1];
                let yy = y[0] * y[0] + y[1] * y[1];
                let xy = x[0] * y[0] + x[1] * y[1];
                // |x − y*|·|y| squared, written without dividing by |y|
                let q = xx * yy - 2.0 * r2 * xy + r2 * r2;
                Ok(RegularPart { value: 0.5 * INV_2PI * (q / r2).ln(), offset: 0.0 })
            }
            GreenMode::Numeric(n) => n.regular_part(x, y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{rasterize_domain, DomainSpec};

    #[test]
    fn lattice_kernel_known_values() {
        assert!((lattice_kernel(1, 0) - 0.25).abs() < 1e-9);
        assert!((lattice_kernel(1, 1) - 1.0 / PI).abs() < 1e-9);
        assert!((lattice_kernel(2, 0) - (1.0 - 2.0 / PI)).abs() < 1e-9);
        assert!((lattice_kernel(0, 0)).abs() < 1e-15);
    }

    #[test]
    fn lattice_kernel_is_harmonic_off_origin() {
        for (m, n) in [(3i64, 2i64), (5, 0), (7, 7), (11, 4), (12, 12), (13, 1)] {
            let lap = lattice_kernel(m + 1, n)
                + lattice_kernel(m - 1, n)
                + lattice_kernel(m, n + 1)
                + lattice_kernel(m, n - 1)
                - 4.0 * lattice_kernel(m, n);
            assert!(lap.abs() < 2e-6, "({m},{n}) {lap}");
        }
        let lap0 = 4.0 * lattice_kernel(1, 0) - 4.0 * lattice_kernel(0, 0);
        assert!((lap0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lattice_kernel_asymptotics_match_table_edge() {
        for (m, n) in [(12usize, 0usize), (12, 12), (9, 5)] {
            let t = kernel_quadrature(m as f64, n as f64);
            let a = lattice_kernel_asymptotic(m as f64, n as f64);
            assert!((t - a).abs() < 1e-5, "({m},{n}) {t} vs {a}");
        }
    }

    #[test]
    fn disc_image_formula() {
        let g = GreenProvider::disc(1.0).unwrap();
        let v = g.green([0.5, 0.0], [0.0, 0.0]).unwrap();
        assert!((v - 2f64.ln() / (2.0 * PI)).abs() < 1e-12);
        assert!(g.green([1.0, 0.0], [0.3, 0.2]).unwrap().abs() < 1e-12);
        let a = g.green([0.1, 0.4], [-0.3, 0.2]).unwrap();
        let b = g.green([-0.3, 0.2], [0.1, 0.4]).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert!(g.regular_part([0.0, 0.0], [0.0, 0.0]).unwrap().value.abs() < 1e-15);
        let r = 0.6f64;
        let s = g.regular_part([r, 0.0], [r, 0.0]).unwrap().value;
        assert!((s - (1.0 - r * r).ln() / (2.0 * PI)).abs() < 1e-12);
        assert!(g.green([0.1, 0.1], [0.1, 0.1]).is_err());
        assert!(g.green([1.2, 0.0], [0.1, 0.1]).is_err());
    }

    #[test]
    fn numeric_column_residual_is_delta() {
        let grid = Arc::new(rasterize_domain(&DomainSpec::disc(1.0), 0.05).unwrap());
        let p = GreenProvider::numeric(grid.clone(), SolverParams::default()).unwrap();
        let n = p.numeric_state().unwrap();
        let s = n.source_node([0.2, -0.1]).unwrap();
        let col = n.green_column(s).unwrap();
        let lap = Laplacian::with_fit(&grid, BoundaryFit::Fitted).unwrap();
        let x: Vec<f64> = lap.nodes.iter().map(|&k| col.values[k]).collect();
        let mut y = vec![0.0; x.len()];
        lap.apply(&x, &mut y);
        for (u, &k) in lap.nodes.iter().enumerate() {
            let expect = if k == s { 1.0 } else { 0.0 };
            assert!((y[u] - expect).abs() < 1e-6);
            assert!(col.values[k] >= 0.0);
        }
    }

    #[test]
    fn numeric_matches_disc_closed_form() {
        let grid = Arc::new(rasterize_domain(&DomainSpec::disc(1.0), 0.02).unwrap());
        let num = GreenProvider::numeric(grid, SolverParams::default()).unwrap();
        let exact = GreenProvider::disc(1.0).unwrap();
        let pts = [([0.13, 0.21], [-0.4, 0.33]), ([0.5, 0.0], [0.0, 0.0]), ([0.71, -0.2], [0.6, 0.1])];
        for (x, y) in pts {
            let a = num.green(x, y).unwrap();
            let b = exact.green(x, y).unwrap();
            assert!((a - b).abs() / b < 0.02, "{x:?} {y:?} {a} {b}");
        }
        let s_num = num.regular_part([0.3, 0.1], [0.3, 0.1]).unwrap().value;
        let s_ex = exact.regular_part([0.3, 0.1], [0.3, 0.1]).unwrap().value;
        assert!((s_num - s_ex).abs() < 0.01, "{s_num} {s_ex}");
    }
}
