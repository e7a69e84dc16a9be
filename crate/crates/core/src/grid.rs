//! Domain rasterization and discrete vector calculus on masked uniform grids.
//!
//! A [`Grid2D`] carries two staggered lattices:
//!
//! * the *potential lattice*: the grid nodes themselves, classified as interior,
//!   boundary or exterior. Every elliptic solve (stream functions, Green
//!   columns, capacity functions) lives here.
//! * the *corner lattice*: the corners of the cells centred on interior nodes.
//!   Order parameters live on these corners, currents on their edges, and the
//!   plaquette of the corner lattice around a potential node *is* that node.
//!
//! With this layout the perpendicular gradient of a potential-node field lands
//! on corner edges, and its circulation around a corner plaquette equals the
//! five-point Laplacian at the enclosed node times `h²`, with no remainder.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signed level-set function: negative inside the domain.
#[derive(Clone)]
pub struct LevelSet {
    pub f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    /// Bounding box `[xmin, ymin, xmax, ymax]` enclosing the zero sublevel set.
    pub bbox: [f64; 4],
}

impl fmt::Debug for LevelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevelSet").field("bbox", &self.bbox).finish()
    }
}

/// Planar domain description. All lengths in domain units, centred at the origin.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Disc {
        radius: f64,
    },
    Annulus {
        outer: f64,
        inner: f64,
    },
    Ellipse {
        semi_x: f64,
        semi_y: f64,
    },
    #[serde(skip)]
    Implicit(LevelSet),
}

impl DomainSpec {
    pub fn disc(radius: f64) -> Self {
        DomainSpec::Disc { radius }
    }

    pub fn annulus(outer: f64, inner: f64) -> Self {
        DomainSpec::Annulus { outer, inner }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DomainSpec::Disc { radius } if !(radius > 0.0 && radius.is_finite()) => {
                Err(Error::InvalidInput(format!("disc radius must be positive, got {radius}")))
            }
            DomainSpec::Annulus { outer, inner } if !(inner > 0.0 && inner < outer && outer.is_finite()) => {
                Err(Error::InvalidInput(format!("annulus needs 0 < inner < outer, got inner={inner}, outer={outer}")))
            }
            DomainSpec::Ellipse { semi_x, semi_y } if !(semi_x > 0.0 && semi_y > 0.0) => {
                Err(Error::InvalidInput("ellipse semi-axes must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Open-set membership.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            DomainSpec::Disc { radius } => x * x + y * y < radius * radius,
            DomainSpec::Annulus { outer, inner } => {
                let r2 = x * x + y * y;
                r2 < outer * outer && r2 > inner * inner
            }
            DomainSpec::Ellipse { semi_x, semi_y } => (x / semi_x).powi(2) + (y / semi_y).powi(2) < 1.0,
            DomainSpec::Implicit(ls) => (ls.f)(x, y) < 0.0,
        }
    }

    pub fn bbox(&self) -> [f64; 4] {
        match self {
            DomainSpec::Disc { radius } => [-radius, -radius, *radius, *radius],
            DomainSpec::Annulus { outer, .. } => [-outer, -outer, *outer, *outer],
            DomainSpec::Ellipse { semi_x, semi_y } => [-semi_x, -semi_y, *semi_x, *semi_y],
            DomainSpec::Implicit(ls) => ls.bbox,
        }
    }

    pub fn is_annulus(&self) -> bool {
        matches!(self, DomainSpec::Annulus { .. })
    }

    /// Exact area where a closed form exists.
    pub fn area(&self) -> Option<f64> {
        use std::f64::consts::PI;
        match *self {
            DomainSpec::Disc { radius } => Some(PI * radius * radius),
            DomainSpec::Annulus { outer, inner } => Some(PI * (outer * outer - inner * inner)),
            DomainSpec::Ellipse { semi_x, semi_y } => Some(PI * semi_x * semi_y),
            DomainSpec::Implicit(_) => None,
        }
    }

    /// Which boundary component a point outside the domain belongs to.
    fn boundary_part(&self, x: f64, y: f64) -> BoundaryPart {
        match *self {
            DomainSpec::Annulus { outer, inner } => {
                if (x * x + y * y).sqrt() < 0.5 * (outer + inner) {
                    BoundaryPart::Inner
                } else {
                    BoundaryPart::Outer
                }
            }
            _ => BoundaryPart::Outer,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryPart {
    Outer,
    Inner,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeStatus {
    Exterior,
    Interior,
    Boundary(BoundaryPart),
}

/// Index arithmetic for a rectangular lattice of `nx × ny` nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
}

impl Dims {
    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    #[inline]
    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }
    /// Edge from `(i, j)` to `(i + 1, j)`.
    #[inline]
    pub fn xedge(&self, i: usize, j: usize) -> usize {
        j * (self.nx - 1) + i
    }
    #[inline]
    pub fn xedge_count(&self) -> usize {
        (self.nx - 1) * self.ny
    }
    /// Edge from `(i, j)` to `(i, j + 1)`.
    #[inline]
    pub fn yedge(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    #[inline]
    pub fn yedge_count(&self) -> usize {
        self.nx * (self.ny - 1)
    }
    /// Cell with lower-left corner `(i, j)`.
    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * (self.nx - 1) + i
    }
    #[inline]
    pub fn cell_count(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }
    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }
}

/// Active nodes, edges and cells of one lattice, plus its embedding.
#[derive(Clone, Debug)]
pub struct LatticeMask {
    pub dims: Dims,
    pub h: f64,
    pub origin: [f64; 2],
    pub node: Vec<bool>,
    pub xedge: Vec<bool>,
    pub yedge: Vec<bool>,
    pub cell: Vec<bool>,
}

impl LatticeMask {
    #[inline]
    pub fn pos(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    pub fn active_node_count(&self) -> usize {
        self.node.iter().filter(|&&a| a).count()
    }

    pub fn active_cell_count(&self) -> usize {
        self.cell.iter().filter(|&&a| a).count()
    }

    /// Quadrature weight of each node: a quarter cell area per adjacent active cell.
    pub fn node_area_weights(&self) -> Vec<f64> {
        let d = self.dims;
        let q = 0.25 * self.h * self.h;
        let mut w = vec![0.0; d.node_count()];
        for j in 0..d.ny - 1 {
            for i in 0..d.nx - 1 {
                if self.cell[d.cell(i, j)] {
                    w[d.node(i, j)] += q;
                    w[d.node(i + 1, j)] += q;
                    w[d.node(i, j + 1)] += q;
                    w[d.node(i + 1, j + 1)] += q;
                }
            }
        }
        w
    }
}

/// Uniform Cartesian grid rasterizing a [`DomainSpec`].
#[derive(Clone, Debug)]
pub struct Grid2D {
    pub spec: DomainSpec,
    pub h: f64,
    pub origin: [f64; 2],
    pub dims: Dims,
    status: Vec<NodeStatus>,
    nodes: LatticeMask,
    corners: LatticeMask,
}

/// Rasterize a domain on a grid of spacing `h`.
pub fn rasterize_domain(spec: &DomainSpec, h: f64) -> Result<Grid2D> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("grid spacing must be positive, got {h}")));
    }
    spec.validate()?;
    match *spec {
        DomainSpec::Annulus { outer, inner } if outer - inner < 3.0 * h => {
            return Err(Error::Degenerate(format!("annulus width {} is thinner than three cells", outer - inner)))
        }
        DomainSpec::Ellipse { semi_x, semi_y } if semi_x.min(semi_y) < 1.5 * h => {
            return Err(Error::Degenerate("ellipse thinner than three cells".into()))
        }
        _ => {}
    }

    let [xmin, ymin, xmax, ymax] = spec.bbox();
    let pad = 2;
    let origin = [xmin - pad as f64 * h, ymin - pad as f64 * h];
    let nx = ((xmax - xmin) / h).ceil() as usize + 2 * pad + 1;
    let ny = ((ymax - ymin) / h).ceil() as usize + 2 * pad + 1;
    if nx.checked_mul(ny).is_none_or(|n| n > 400_000_000) {
        return Err(Error::InvalidInput("grid too large".into()));
    }
    let dims = Dims { nx, ny };
    let pos = |i: usize, j: usize| [origin[0] + i as f64 * h, origin[1] + j as f64 * h];

    let inside: Vec<bool> = (0..dims.node_count())
        .map(|k| {
            let (i, j) = dims.coords(k);
            let p = pos(i, j);
            i > 0 && j > 0 && i + 1 < nx && j + 1 < ny && spec.contains(p[0], p[1])
        })
        .collect();

    let mut status = vec![NodeStatus::Exterior; dims.node_count()];
    for j in 0..ny {
        for i in 0..nx {
            let k = dims.node(i, j);
            if inside[k] {
                status[k] = NodeStatus::Interior;
                continue;
            }
            let touches = (i > 0 && inside[dims.node(i - 1, j)])
                || (i + 1 < nx && inside[dims.node(i + 1, j)])
                || (j > 0 && inside[dims.node(i, j - 1)])
                || (j + 1 < ny && inside[dims.node(i, j + 1)]);
            if touches {
                let p = pos(i, j);
                status[k] = NodeStatus::Boundary(spec.boundary_part(p[0], p[1]));
            }
        }
    }

    let interior_count = inside.iter().filter(|&&b| b).count();
    if interior_count == 0 {
        return Err(Error::EmptyInterior);
    }
    let components = count_components(dims, &inside);
    if components != 1 {
        return Err(Error::DisconnectedInterior { components });
    }
    if spec.is_annulus() {
        let has = |part| status.contains(&NodeStatus::Boundary(part));
        if !has(BoundaryPart::Inner) || !has(BoundaryPart::Outer) {
            return Err(Error::Degenerate("annulus rasterized without two boundary loops".into()));
        }
    }

    let nodes = node_lattice(dims, h, origin, &status);
    let corners = corner_lattice(dims, h, origin, &status)?;
    Ok(Grid2D { spec: spec.clone(), h, origin, dims, status, nodes, corners })
}

fn count_components(dims: Dims, inside: &[bool]) -> usize {
    let mut seen = vec![false; inside.len()];
    let mut components = 0;
    let mut queue = VecDeque::new();
    for start in 0..inside.len() {
        if !inside[start] || seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(k) = queue.pop_front() {
            let (i, j) = dims.coords(k);
            let mut visit = |n: usize| {
                if inside[n] && !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            };
            if i > 0 {
                visit(k - 1);
            }
            if i + 1 < dims.nx {
                visit(k + 1);
            }
            if j > 0 {
                visit(k - dims.nx);
            }
            if j + 1 < dims.ny {
                visit(k + dims.nx);
            }
        }
    }
    components
}

fn node_lattice(dims: Dims, h: f64, origin: [f64; 2], status: &[NodeStatus]) -> LatticeMask {
    let node: Vec<bool> = status.iter().map(|s| *s != NodeStatus::Exterior).collect();
    let mut xedge = vec![false; dims.xedge_count()];
    let mut yedge = vec![false; dims.yedge_count()];
    let mut cell = vec![false; dims.cell_count()];
    for j in 0..dims.ny {
        for i in 0..dims.nx {
            let a = node[dims.node(i, j)];
            if i + 1 < dims.nx {
                xedge[dims.xedge(i, j)] = a && node[dims.node(i + 1, j)];
            }
            if j + 1 < dims.ny {
                yedge[dims.yedge(i, j)] = a && node[dims.node(i, j + 1)];
            }
            if i + 1 < dims.nx && j + 1 < dims.ny {
                cell[dims.cell(i, j)] =
                    a && node[dims.node(i + 1, j)] && node[dims.node(i, j + 1)] && node[dims.node(i + 1, j + 1)];
            }
        }
    }
    LatticeMask { dims, h, origin, node, xedge, yedge, cell }
}

fn corner_lattice(dims: Dims, h: f64, origin: [f64; 2], status: &[NodeStatus]) -> Result<LatticeMask> {
    let cd = Dims { nx: dims.nx + 1, ny: dims.ny + 1 };
    let interior = |i: isize, j: isize| -> bool {
        i >= 0
            && j >= 0
            && (i as usize) < dims.nx
            && (j as usize) < dims.ny
            && status[dims.node(i as usize, j as usize)] == NodeStatus::Interior
    };
    let cell: Vec<bool> = (0..cd.cell_count())
        .map(|c| {
            let (i, j) = (c % dims.nx, c / dims.nx);
            status[dims.node(i, j)] == NodeStatus::Interior
        })
        .collect();
    let mut xedge = vec![false; cd.xedge_count()];
    let mut yedge = vec![false; cd.yedge_count()];
    let mut node = vec![false; cd.node_count()];
    for j in 0..cd.ny {
        for i in 0..cd.nx {
            let (ii, jj) = (i as isize, j as isize);
            if i + 1 < cd.nx {
                xedge[cd.xedge(i, j)] = interior(ii, jj - 1) || interior(ii, jj);
            }
            if j + 1 < cd.ny {
                yedge[cd.yedge(i, j)] = interior(ii - 1, jj) || interior(ii, jj);
            }
            node[cd.node(i, j)] =
                interior(ii - 1, jj - 1) || interior(ii, jj - 1) || interior(ii - 1, jj) || interior(ii, jj);
        }
    }
    // Every plaquette enclosed by active edges must itself be active, otherwise
    // the edge graph has cycles that no plaquette accounts for.
    for j in 0..dims.ny {
        for i in 0..dims.nx {
            let c = cd.cell(i, j);
            if !cell[c]
                && xedge[cd.xedge(i, j)]
                && xedge[cd.xedge(i, j + 1)]
                && yedge[cd.yedge(i, j)]
                && yedge[cd.yedge(i + 1, j)]
            {
                return Err(Error::Degenerate(format!("exterior node ({i}, {j}) is enclosed by interior cells")));
            }
        }
    }
    let corner_origin = [origin[0] - 0.5 * h, origin[1] - 0.5 * h];
    Ok(LatticeMask { dims: cd, h, origin: corner_origin, node, xedge, yedge, cell })
}

impl Grid2D {
    #[inline]
    pub fn status(&self, i: usize, j: usize) -> NodeStatus {
        self.status[self.dims.node(i, j)]
    }

    #[inline]
    pub fn status_at(&self, k: usize) -> NodeStatus {
        self.status[k]
    }

    #[inline]
    pub fn is_interior(&self, k: usize) -> bool {
        self.status[k] == NodeStatus::Interior
    }

    #[inline]
    pub fn pos(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    #[inline]
    pub fn pos_of(&self, k: usize) -> [f64; 2] {
        let (i, j) = self.dims.coords(k);
        self.pos(i, j)
    }

    /// The potential lattice (grid nodes).
    pub fn nodes(&self) -> &LatticeMask {
        &self.nodes
    }

    /// The staggered lattice of cell corners around interior nodes.
    pub fn corners(&self) -> &LatticeMask {
        &self.corners
    }

    pub fn interior_count(&self) -> usize {
        self.status.iter().filter(|s| **s == NodeStatus::Interior).count()
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.status.len()).filter(move |&k| self.status[k] == NodeStatus::Interior)
    }

    pub fn boundary_nodes(&self, part: BoundaryPart) -> impl Iterator<Item = usize> + '_ {
        (0..self.status.len()).filter(move |&k| self.status[k] == NodeStatus::Boundary(part))
    }

    pub fn has_inner_boundary(&self) -> bool {
        self.boundary_nodes(BoundaryPart::Inner).next().is_some()
    }

    /// Rasterized area: interior node count times the cell area.
    pub fn area(&self) -> f64 {
        self.interior_count() as f64 * self.h * self.h
    }

    /// Lattice coordinates of the node nearest to a point, if inside the array.
    pub fn nearest_node(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let fi = ((p[0] - self.origin[0]) / self.h).round();
        let fj = ((p[1] - self.origin[1]) / self.h).round();
        if fi < 0.0 || fj < 0.0 || fi >= self.dims.nx as f64 || fj >= self.dims.ny as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    /// Nearest node that is interior, or an error if the nearest node is not.
    pub fn nearest_interior_node(&self, p: [f64; 2]) -> Result<usize> {
        let (i, j) = self.nearest_node(p).ok_or(Error::OutsideDomain(p[0], p[1]))?;
        let k = self.dims.node(i, j);
        if self.is_interior(k) {
            Ok(k)
        } else {
            Err(Error::OutsideDomain(p[0], p[1]))
        }
    }

    pub fn same_lattice(&self, other: &Grid2D) -> bool {
        self.dims == other.dims && self.h == other.h && self.origin == other.origin
    }

    /// Scalar field sampled from a closed form on active nodes.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let mut out = ScalarField::zeros(self.dims);
        for k in 0..self.status.len() {
            if self.status[k] != NodeStatus::Exterior {
                let p = self.pos_of(k);
                out.values[k] = f(p[0], p[1]);
            }
        }
        out
    }

    /// Like [`Grid2D::sample`] but zero off the interior.
    pub fn sample_interior(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let mut out = ScalarField::zeros(self.dims);
        for k in self.interior_nodes() {
            let p = self.pos_of(k);
            out.values[k] = f(p[0], p[1]);
        }
        out
    }
}

/// Real values on the nodes of a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub dims: Dims,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(dims: Dims) -> Self {
        Self { dims, values: vec![0.0; dims.node_count()] }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.dims.node(i, j)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { dims: self.dims, values: self.values.iter().map(|v| a * v).collect() }
    }

    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += a * o;
        }
    }

    /// Bilinear interpolation at a physical point of the lattice described by `mask`.
    pub fn interpolate(&self, mask: &LatticeMask, p: [f64; 2]) -> f64 {
        bilinear(self.dims, mask.origin, mask.h, p, |k| self.values[k])
    }
}

pub(crate) fn bilinear(dims: Dims, origin: [f64; 2], h: f64, p: [f64; 2], f: impl Fn(usize) -> f64) -> f64 {
    let fx = ((p[0] - origin[0]) / h).clamp(0.0, (dims.nx - 1) as f64 - 1e-9);
    let fy = ((p[1] - origin[1]) / h).clamp(0.0, (dims.ny - 1) as f64 - 1e-9);
    let (i, j) = (fx.floor() as usize, fy.floor() as usize);
    let (tx, ty) = (fx - i as f64, fy - j as f64);
    let v00 = f(dims.node(i, j));
    let v10 = f(dims.node(i + 1, j));
    let v01 = f(dims.node(i, j + 1));
    let v11 = f(dims.node(i + 1, j + 1));
    (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
}

/// Complex values on the nodes of a lattice, stored as (re, im) pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    pub dims: Dims,
    pub values: Vec<Complex64>,
}

impl ComplexField {
    pub fn constant(dims: Dims, c: Complex64) -> Self {
        Self { dims, values: vec![c; dims.node_count()] }
    }

    pub fn from_fn(mask: &LatticeMask, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let d = mask.dims;
        let mut values = vec![Complex64::new(0.0, 0.0); d.node_count()];
        for j in 0..d.ny {
            for i in 0..d.nx {
                let k = d.node(i, j);
                if mask.node[k] {
                    let p = mask.pos(i, j);
                    values[k] = f(p[0], p[1]);
                }
            }
        }
        Self { dims: d, values }
    }

    pub fn conj(&self) -> Self {
        Self { dims: self.dims, values: self.values.iter().map(|z| z.conj()).collect() }
    }

    /// Pointwise product.
    pub fn mul(&self, other: &ComplexField) -> Self {
        Self { dims: self.dims, values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect() }
    }

    pub fn rotated(&self, alpha: f64) -> Self {
        let g = Complex64::from_polar(1.0, alpha);
        Self { dims: self.dims, values: self.values.iter().map(|z| z * g).collect() }
    }
}

/// Edge-valued field: `x` on edges `(i,j)→(i+1,j)`, `y` on edges `(i,j)→(i,j+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub dims: Dims,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(dims: Dims) -> Self {
        Self { dims, x: vec![0.0; dims.xedge_count()], y: vec![0.0; dims.yedge_count()] }
    }

    /// Sample a continuum vector field at edge midpoints (component along the edge).
    pub fn sample(mask: &LatticeMask, v: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let d = mask.dims;
        let mut out = Self::zeros(d);
        let h = mask.h;
        for j in 0..d.ny {
            for i in 0..d.nx {
                let p = mask.pos(i, j);
                if i + 1 < d.nx && mask.xedge[d.xedge(i, j)] {
                    out.x[d.xedge(i, j)] = v(p[0] + 0.5 * h, p[1])[0];
                }
                if j + 1 < d.ny && mask.yedge[d.yedge(i, j)] {
                    out.y[d.yedge(i, j)] = v(p[0], p[1] + 0.5 * h)[1];
                }
            }
        }
        out
    }

    /// Lattice inner product `Σ_e a_e b_e h²`.
    pub fn dot(&self, other: &VectorField, h: f64) -> f64 {
        let s: f64 = self.x.iter().zip(&other.x).map(|(a, b)| a * b).sum::<f64>()
            + self.y.iter().zip(&other.y).map(|(a, b)| a * b).sum::<f64>();
        s * h * h
    }

    pub fn norm_sq(&self, h: f64) -> f64 {
        self.dot(self, h)
    }

    pub fn add(&self, other: &VectorField) -> Self {
        Self {
            dims: self.dims,
            x: self.x.iter().zip(&other.x).map(|(a, b)| a + b).collect(),
            y: self.y.iter().zip(&other.y).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { dims: self.dims, x: self.x.iter().map(|v| a * v).collect(), y: self.y.iter().map(|v| a * v).collect() }
    }
}

/// Values on the cells (plaquettes) of a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaquetteField {
    pub dims: Dims,
    pub values: Vec<f64>,
}

impl PlaquetteField {
    /// Reinterpret corner-lattice plaquettes as potential-lattice nodes.
    pub fn into_node_field(self) -> ScalarField {
        ScalarField { dims: Dims { nx: self.dims.nx - 1, ny: self.dims.ny - 1 }, values: self.values }
    }
}

fn check_dims(mask: &LatticeMask, dims: Dims) -> Result<()> {
    if mask.dims != dims {
        Err(Error::GridMismatch)
    } else {
        Ok(())
    }
}

/// Forward differences on active edges.
pub fn grad(mask: &LatticeMask, f: &ScalarField) -> Result<VectorField> {
    check_dims(mask, f.dims)?;
    let d = mask.dims;
    let inv_h = 1.0 / mask.h;
    let mut out = VectorField::zeros(d);
    for j in 0..d.ny {
        for i in 0..d.nx {
            let a = f.values[d.node(i, j)];
            if i + 1 < d.nx && mask.xedge[d.xedge(i, j)] {
                out.x[d.xedge(i, j)] = (f.values[d.node(i + 1, j)] - a) * inv_h;
            }
            if j + 1 < d.ny && mask.yedge[d.yedge(i, j)] {
                out.y[d.yedge(i, j)] = (f.values[d.node(i, j + 1)] - a) * inv_h;
            }
        }
    }
    Ok(out)
}

/// Negative adjoint of [`grad`]: net outflow through active edges over `h`.
pub fn div(mask: &LatticeMask, w: &VectorField) -> Result<ScalarField> {
    check_dims(mask, w.dims)?;
    let d = mask.dims;
    let inv_h = 1.0 / mask.h;
    let mut out = ScalarField::zeros(d);
    for j in 0..d.ny {
        for i in 0..d.nx {
            if i + 1 < d.nx && mask.xedge[d.xedge(i, j)] {
                let v = w.x[d.xedge(i, j)] * inv_h;
                out.values[d.node(i, j)] += v;
                out.values[d.node(i + 1, j)] -= v;
            }
            if j + 1 < d.ny && mask.yedge[d.yedge(i, j)] {
                let v = w.y[d.yedge(i, j)] * inv_h;
                out.values[d.node(i, j)] += v;
                out.values[d.node(i, j + 1)] -= v;
            }
        }
    }
    Ok(out)
}

/// Counterclockwise circulation around each active cell, divided by `h²`.
pub fn plaquette_curl(mask: &LatticeMask, w: &VectorField) -> Result<PlaquetteField> {
    check_dims(mask, w.dims)?;
    let d = mask.dims;
    let inv_h = 1.0 / mask.h;
    let mut values = vec![0.0; d.cell_count()];
    for j in 0..d.ny - 1 {
        for i in 0..d.nx - 1 {
            let c = d.cell(i, j);
            if mask.cell[c] {
                let circ = w.x[d.xedge(i, j)] + w.y[d.yedge(i + 1, j)] - w.x[d.xedge(i, j + 1)] - w.y[d.yedge(i, j)];
                values[c] = circ * inv_h;
            }
        }
    }
    Ok(PlaquetteField { dims: d, values })
}

/// Perpendicular gradient `(-∂y c, ∂x c)` of a potential-lattice field, placed on
/// the active edges of the corner lattice.
pub fn perp_grad(grid: &Grid2D, c: &ScalarField) -> Result<VectorField> {
    if c.dims != grid.dims {
        return Err(Error::GridMismatch);
    }
    let mask = grid.corners();
    let cd = mask.dims;
    let pd = grid.dims;
    let inv_h = 1.0 / grid.h;
    let val = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i as usize >= pd.nx || j as usize >= pd.ny {
            0.0
        } else {
            c.values[pd.node(i as usize, j as usize)]
        }
    };
    let mut out = VectorField::zeros(cd);
    for j in 0..cd.ny {
        for i in 0..cd.nx {
            let (ii, jj) = (i as isize, j as isize);
            if i + 1 < cd.nx && mask.xedge[cd.xedge(i, j)] {
                out.x[cd.xedge(i, j)] = -(val(ii, jj) - val(ii, jj - 1)) * inv_h;
            }
            if j + 1 < cd.ny && mask.yedge[cd.yedge(i, j)] {
                out.y[cd.yedge(i, j)] = (val(ii, jj) - val(ii - 1, jj)) * inv_h;
            }
        }
    }
    Ok(out)
}

/// Oriented boundary chains of the union of interior cells, as lists of
/// `(corner edge, is_x_edge, sign)` traversed counterclockwise around the
/// outer boundary and counterclockwise around the hole respectively.
#[derive(Clone, Debug, Default)]
pub struct BoundaryChains {
    pub outer: Vec<(usize, bool, f64)>,
    pub inner: Vec<(usize, bool, f64)>,
}

impl BoundaryChains {
    pub fn circulation(chain: &[(usize, bool, f64)], w: &VectorField, h: f64) -> f64 {
        chain.iter().map(|&(e, is_x, s)| s * if is_x { w.x[e] } else { w.y[e] }).sum::<f64>() * h
    }
}

impl Grid2D {
    /// Corner-lattice edges separating interior cells from boundary nodes.
    pub fn boundary_chains(&self) -> BoundaryChains {
        let pd = self.dims;
        let cd = self.corners.dims;
        let mut chains = BoundaryChains::default();
        for k in self.interior_nodes() {
            let (i, j) = pd.coords(k);
            // (neighbour, edge, is_x, ccw sign relative to this cell)
            let sides = [
                ((i, j - 1), cd.xedge(i, j), true, 1.0),
                ((i + 1, j), cd.yedge(i + 1, j), false, 1.0),
                ((i, j + 1), cd.xedge(i, j + 1), true, -1.0),
                ((i - 1, j), cd.yedge(i, j), false, -1.0),
            ];
            for ((ni, nj), e, is_x, s) in sides {
                match self.status(ni, nj) {
                    NodeStatus::Boundary(BoundaryPart::Outer) => chains.outer.push((e, is_x, s)),
                    // cell orientation is clockwise as seen from the hole
                    NodeStatus::Boundary(BoundaryPart::Inner) => chains.inner.push((e, is_x, -s)),
                    _ => {}
                }
            }
        }
        chains
    }
}
