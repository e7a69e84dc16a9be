//! Concentration curves, measures on them, vortex placement and mollification.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainSpec, Grid2D, ScalarField};

/// Curve description as it appears in configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveKind {
    Circle {
        center: [f64; 2],
        radius: f64,
    },
    /// Polyline through the given points; closed curves join the last point to the first.
    Parametric {
        points: Vec<[f64; 2]>,
    },
    Segment {
        from: [f64; 2],
        to: [f64; 2],
    },
}

/// Arclength-sampled simple curve.
#[derive(Clone, Debug)]
pub struct Curve {
    pub kind: CurveKind,
    pub closed: bool,
    pub length: f64,
    /// Arclength parameter of each node.
    pub t: Vec<f64>,
    pub nodes: Vec<[f64; 2]>,
    /// Arclength represented by each node.
    pub spacing: Vec<f64>,
    /// Largest discrete curvature (turning angle over spacing).
    pub max_curvature: f64,
    // polyline used for evaluation off the nodes (unused for circles)
    poly: Vec<[f64; 2]>,
    poly_s: Vec<f64>,
}

pub fn build_curve(kind: &CurveKind, m: usize, closed: bool, domain: Option<&DomainSpec>) -> Result<Curve> {
    if m < 16 {
        return Err(Error::InvalidCurve(format!("need at least 16 nodes, got {m}")));
    }
    let (poly, poly_s, length) = match kind {
        CurveKind::Circle { radius, .. } => {
            if !closed {
                return Err(Error::InvalidCurve("circle must be closed".into()));
            }
            if !(*radius > 0.0) {
                return Err(Error::InvalidCurve("circle radius must be positive".into()));
            }
            (Vec::new(), Vec::new(), 2.0 * PI * radius)
        }
        CurveKind::Segment { from, to } => {
            if closed {
                return Err(Error::InvalidCurve("a segment cannot be closed".into()));
            }
            let l = (to[0] - from[0]).hypot(to[1] - from[1]);
            if l == 0.0 {
                return Err(Error::InvalidCurve("segment has zero length".into()));
            }
            (vec![*from, *to], vec![0.0, l], l)
        }
        CurveKind::Parametric { points } => {
            if points.len() < 3 {
                return Err(Error::InvalidCurve(format!(
                    "parametric curve needs at least 3 points, got {}",
                    points.len()
                )));
            }
            let mut poly = points.clone();
            if closed {
                poly.push(points[0]);
            }
            let mut s = vec![0.0];
            for w in poly.windows(2) {
                let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
                if d == 0.0 {
                    return Err(Error::InvalidCurve("repeated consecutive points".into()));
                }
                s.push(s.last().unwrap() + d);
            }
            let l = *s.last().unwrap();
            (poly, s, l)
        }
    };
    let step = length / m as f64;
    let t: Vec<f64> = (0..m).map(|i| if closed { i as f64 * step } else { (i as f64 + 0.5) * step }).collect();
    let mut curve = Curve {
        kind: kind.clone(),
        closed,
        length,
        t: t.clone(),
        nodes: Vec::new(),
        spacing: vec![step; m],
        max_curvature: 0.0,
        poly,
        poly_s,
    };
    curve.nodes = t.iter().map(|&s| curve.point_at(s)).collect();

    if let Some(dom) = domain {
        if let Some(p) = curve.nodes.iter().find(|p| !dom.contains(p[0], p[1])) {
            return Err(Error::InvalidCurve(format!("curve exits the domain at ({:.4}, {:.4})", p[0], p[1])));
        }
        if !closed {
            for s in [0.0, length] {
                let p = curve.point_at(s);
                if !dom.contains(p[0], p[1]) {
                    return Err(Error::InvalidCurve("curve endpoint lies outside the domain".into()));
                }
            }
        }
    }
    curve.check_simple()?;
    curve.max_curvature = curve.discrete_curvature();
    Ok(curve)
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

impl Curve {
    /// Point at arclength `s` (wrapped for closed curves, clamped for arcs).
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let s = if self.closed { s.rem_euclid(self.length) } else { s.clamp(0.0, self.length) };
        match &self.kind {
            CurveKind::Circle { center, radius } => {
                let a = s / radius;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            }
            _ => {
                let k = self.poly_s.partition_point(|&x| x <= s).clamp(1, self.poly_s.len() - 1);
                let (s0, s1) = (self.poly_s[k - 1], self.poly_s[k]);
                let f = (s - s0) / (s1 - s0);
                let (p, q) = (self.poly[k - 1], self.poly[k]);
                [p[0] + f * (q[0] - p[0]), p[1] + f * (q[1] - p[1])]
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn chords(&self) -> Vec<([f64; 2], [f64; 2])> {
        let m = self.nodes.len();
        let mut out: Vec<_> = self.nodes.windows(2).map(|w| (w[0], w[1])).collect();
        if self.closed {
            out.push((self.nodes[m - 1], self.nodes[0]));
        }
        out
    }

    fn check_simple(&self) -> Result<()> {
        let ch = self.chords();
        let n = ch.len();
        for i in 0..n {
            for j in i + 2..n {
                if self.closed && i == 0 && j == n - 1 {
                    continue;
                }
                if segments_cross(ch[i].0, ch[i].1, ch[j].0, ch[j].1) {
                    return Err(Error::InvalidCurve(format!("self-intersection between chords {i} and {j}")));
                }
            }
        }
        Ok(())
    }

    fn discrete_curvature(&self) -> f64 {
        let m = self.nodes.len();
        let mut kmax: f64 = 0.0;
        let range = if self.closed { 0..m } else { 1..m - 1 };
        for i in range {
            let a = self.nodes[(i + m - 1) % m];
            let b = self.nodes[i];
            let c = self.nodes[(i + 1) % m];
            let u = [b[0] - a[0], b[1] - a[1]];
            let v = [c[0] - b[0], c[1] - b[1]];
            let turn = (u[0] * v[1] - u[1] * v[0]).atan2(u[0] * v[0] + u[1] * v[1]).abs();
            kmax = kmax.max(turn / self.spacing[i]);
        }
        kmax
    }

    /// Arclength distance between parameters, wrapped for closed curves.
    pub fn param_distance(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        if self.closed {
            d.min(self.length - d)
        } else {
            d
        }
    }
}

/// Nonnegative node masses on a curve.
#[derive(Clone, Debug)]
pub struct CurveMeasure {
    pub curve: Arc<Curve>,
    pub weights: Vec<f64>,
}

impl CurveMeasure {
    pub fn new(curve: Arc<Curve>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != curve.len() {
            return Err(Error::InvalidInput("weight count differs from node count".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        Ok(Self { curve, weights })
    }

    /// Arclength measure scaled to the given total mass.
    pub fn uniform(curve: Arc<Curve>, mass: f64) -> Self {
        let total: f64 = curve.spacing.iter().sum();
        let weights = curve.spacing.iter().map(|s| mass * s / total).collect();
        Self { curve, weights }
    }

    /// `w_i = f(t_i) s_i` for a density in arclength.
    pub fn from_density(curve: Arc<Curve>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let weights = curve.t.iter().zip(&curve.spacing).map(|(&t, &s)| f(t) * s).collect();
        Self::new(curve, weights)
    }

    pub fn zero(curve: Arc<Curve>) -> Self {
        let m = curve.len();
        Self { curve, weights: vec![0.0; m] }
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn density(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.curve.spacing).map(|(w, s)| w / s).collect()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { curve: self.curve.clone(), weights: self.weights.iter().map(|w| a * w).collect() }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,y,w\n");
        for i in 0..self.weights.len() {
            let p = self.curve.nodes[i];
            let _ = writeln!(s, "{:.17e},{:.17e},{:.17e},{:.17e}", self.curve.t[i], p[0], p[1], self.weights[i]);
        }
        s
    }

    /// Density field (mass per unit area) deposited on interior grid nodes with
    /// bilinear weights from `sub` samples per node segment.
    pub fn rasterize(&self, grid: &Grid2D, sub: usize) -> ScalarField {
        let sub = sub.max(1);
        let mut out = ScalarField::zeros(grid.dims);
        let inv_h2 = 1.0 / (grid.h * grid.h);
        let c = &self.curve;
        for i in 0..c.len() {
            let w = self.weights[i];
            if w == 0.0 {
                continue;
            }
            for k in 0..sub {
                let s = c.t[i] + c.spacing[i] * ((k as f64 + 0.5) / sub as f64 - 0.5);
                let p = c.point_at(s);
                deposit(grid, &mut out, p, w / sub as f64 * inv_h2);
            }
        }
        out
    }
}

/// Cloud-in-cell deposition onto interior nodes; mass that would land on
/// non-interior nodes is moved to the nearest interior corner of the cell.
pub(crate) fn deposit(grid: &Grid2D, field: &mut ScalarField, p: [f64; 2], amount: f64) {
    let d = grid.dims;
    let fx = ((p[0] - grid.origin[0]) / grid.h).clamp(0.0, (d.nx - 1) as f64 - 1e-9);
    let fy = ((p[1] - grid.origin[1]) / grid.h).clamp(0.0, (d.ny - 1) as f64 - 1e-9);
    let (i, j) = (fx.floor() as usize, fy.floor() as usize);
    let (tx, ty) = (fx - i as f64, fy - j as f64);
    let corners = [
        (d.node(i, j), (1.0 - tx) * (1.0 - ty)),
        (d.node(i + 1, j), tx * (1.0 - ty)),
        (d.node(i, j + 1), (1.0 - tx) * ty),
        (d.node(i + 1, j + 1), tx * ty),
    ];
    let inside: f64 = corners.iter().filter(|(k, _)| grid.is_interior(*k)).map(|(_, w)| w).sum();
    if inside > 0.0 {
        for (k, w) in corners {
            if grid.is_interior(k) {
                field.values[k] += amount * w / inside;
            }
        }
    } else if let Some((_, k)) = grid
        .interior_nodes()
        .map(|k| {
            let q = grid.pos_of(k);
            ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2), k)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
    {
        field.values[k] += amount;
    }
}

/// Piecewise-linear cumulative mass `M(t) = μ(γ([0, t]))`.
#[derive(Clone, Debug)]
pub struct CumulativeMass {
    pub knots_t: Vec<f64>,
    pub knots_m: Vec<f64>,
}

pub fn cumulative_mass(mu: &CurveMeasure) -> Result<CumulativeMass> {
    let total = mu.total_mass();
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    let c = &mu.curve;
    let m = c.len();
    // (right end of segment, mass on segment)
    let mut segs: Vec<(f64, f64)> = Vec::with_capacity(m + 1);
    if c.closed {
        // node 0 straddles t = 0: half its mass at each end of the parameter range
        segs.push((0.5 * c.spacing[0], 0.5 * mu.weights[0]));
        for i in 1..m {
            segs.push((c.t[i] + 0.5 * c.spacing[i], mu.weights[i]));
        }
        segs[m - 1].0 = c.length - 0.5 * c.spacing[0];
        segs.push((c.length, 0.5 * mu.weights[0]));
    } else {
        for i in 0..m {
            segs.push((c.t[i] + 0.5 * c.spacing[i], mu.weights[i]));
        }
        segs[m - 1].0 = c.length;
    }
    let mut knots_t = vec![0.0];
    let mut knots_m = vec![0.0];
    for (t, dm) in segs {
        let last = *knots_m.last().unwrap();
        knots_t.push(t);
        knots_m.push(last + dm);
    }
    let last = knots_m.len() - 1;
    knots_m[last] = total;
    Ok(CumulativeMass { knots_t, knots_m })
}

impl CumulativeMass {
    pub fn total(&self) -> f64 {
        *self.knots_m.last().unwrap()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.knots_t.partition_point(|&x| x <= t);
        if k == 0 {
            return 0.0;
        }
        if k >= self.knots_t.len() {
            return self.total();
        }
        let (t0, t1) = (self.knots_t[k - 1], self.knots_t[k]);
        let (m0, m1) = (self.knots_m[k - 1], self.knots_m[k]);
        m0 + (m1 - m0) * (t - t0) / (t1 - t0)
    }

    /// Smallest `t` with `M(t) = mass` (left endpoint on flat pieces).
    pub fn inverse(&self, mass: f64) -> f64 {
        if mass <= 0.0 {
            return 0.0;
        }
        let k = self.knots_m.partition_point(|&x| x < mass);
        if k >= self.knots_m.len() {
            return *self.knots_t.last().unwrap();
        }
        let (t0, t1) = (self.knots_t[k - 1], self.knots_t[k]);
        let (m0, m1) = (self.knots_m[k - 1], self.knots_m[k]);
        t0 + (t1 - t0) * (mass - m0) / (m1 - m0)
    }
}

#[derive(Clone, Debug)]
pub struct Placement {
    pub d: usize,
    pub t: Vec<f64>,
    pub points: Vec<[f64; 2]>,
}

/// `D = floor(ω μ(Σ) / 2π)` points at `t_k = M⁻¹(2πk/ω)`.
pub fn place_vortices(mu: &CurveMeasure, omega: f64) -> Result<Placement> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidInput(format!("omega must be positive, got {omega}")));
    }
    let mass = mu.total_mass();
    if mass <= 0.0 {
        return Ok(Placement { d: 0, t: Vec::new(), points: Vec::new() });
    }
    let x = omega * mass / (2.0 * PI);
    let d = (x * (1.0 + 1e-12)).floor() as usize;
    let m = cumulative_mass(mu)?;
    let t: Vec<f64> = (1..=d).map(|k| m.inverse(2.0 * PI * k as f64 / omega)).collect();
    let points = t.iter().map(|&s| mu.curve.point_at(s)).collect();
    Ok(Placement { d, t, points })
}

/// Observed `(min, max)` of `ω · gap` between consecutive placed points.
pub fn gap_constants(p: &Placement, omega: f64, closed: bool) -> Option<(f64, f64)> {
    if p.points.len() < 2 {
        return None;
    }
    let dist = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    let mut gaps: Vec<f64> = p.points.windows(2).map(|w| dist(w[0], w[1])).collect();
    if closed {
        gaps.push(dist(p.points[p.points.len() - 1], p.points[0]));
    }
    let lo = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = gaps.iter().cloned().fold(0.0, f64::max);
    Some((omega * lo, omega * hi))
}

fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// Convolve along the curve with a bump of half-width `1/k` in arclength.
pub fn mollify(mu: &CurveMeasure, k: f64) -> Result<CurveMeasure> {
    let c = &mu.curve;
    let m = c.len();
    let max_spacing = c.spacing.iter().cloned().fold(0.0, f64::max);
    if !(k > 0.0) || 1.0 / k < 2.0 * max_spacing {
        return Err(Error::InvalidInput(format!(
            "kernel width {:.3e} is narrower than two node spacings ({:.3e})",
            1.0 / k,
            2.0 * max_spacing
        )));
    }
    let mut out = vec![0.0; m];
    let mut row = vec![0.0; m];
    for i in 0..m {
        if mu.weights[i] == 0.0 {
            continue;
        }
        let mut sum = 0.0;
        for (j, rj) in row.iter_mut().enumerate() {
            *rj = bump(k * c.param_distance(c.t[i], c.t[j])) * c.spacing[j];
            sum += *rj;
        }
        for j in 0..m {
            out[j] += mu.weights[i] * row[j] / sum;
        }
    }
    CurveMeasure::new(c.clone(), out)
}
