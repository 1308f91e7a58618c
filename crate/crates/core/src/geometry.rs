//! Periodicity cell and parametrized inclusion boundaries.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{PercondError, Result};

/// A point or vector in the plane.
pub type Point = [f64; 2];

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm2(a: Point) -> f64 {
    a[0] * a[0] + a[1] * a[1]
}

/// Rectangular periodicity cell `Q = ]0,q11[ x ]0,q22[`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicCell {
    pub dim: usize,
    pub q_diag: [f64; 2],
    pub measure: f64,
}

impl PeriodicCell {
    pub fn new(q11: f64, q22: f64) -> Result<Self> {
        if !(q11 > 0.0 && q22 > 0.0) || !q11.is_finite() || !q22.is_finite() {
            return Err(PercondError::Geometry(format!(
                "cell edges must be positive, got ({q11}, {q22})"
            )));
        }
        Ok(Self { dim: 2, q_diag: [q11, q22], measure: q11 * q22 })
    }

    pub fn unit() -> Self {
        Self { dim: 2, q_diag: [1.0, 1.0], measure: 1.0 }
    }

    pub fn q_min(&self) -> f64 {
        self.q_diag[0].min(self.q_diag[1])
    }

    pub fn center(&self) -> Point {
        [0.5 * self.q_diag[0], 0.5 * self.q_diag[1]]
    }

    /// True if `p` lies in the open cell.
    pub fn contains(&self, p: Point) -> bool {
        (0..2).all(|k| p[k] > 0.0 && p[k] < self.q_diag[k])
    }

    /// Lattice translate of `x` closest to `center`.
    pub fn wrap_near(&self, x: Point, center: Point) -> Point {
        let mut y = x;
        for k in 0..2 {
            let q = self.q_diag[k];
            y[k] -= q * ((x[k] - center[k]) / q).round();
        }
        y
    }
}

/// Smooth 2pi-periodic counterclockwise parametrizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Ellipse { a: f64, b: f64 },
    Star { r0: f64, amp: f64, lobes: u32 },
}

impl Shape {
    /// Position, first and second derivative at parameter `t`.
    pub fn eval(&self, t: f64) -> (Point, Point, Point) {
        let (s, c) = t.sin_cos();
        match *self {
            Shape::Ellipse { a, b } => ([a * c, b * s], [-a * s, b * c], [-a * c, -b * s]),
            Shape::Star { r0, amp, lobes } => {
                let m = lobes as f64;
                let (sm, cm) = (m * t).sin_cos();
                let r = r0 + amp * cm;
                let dr = -amp * m * sm;
                let ddr = -amp * m * m * cm;
                let x = [r * c, r * s];
                let dx = [dr * c - r * s, dr * s + r * c];
                let ddx = [ddr * c - 2.0 * dr * s - r * c, ddr * s + 2.0 * dr * c - r * s];
                (x, dx, ddx)
            }
        }
    }

    /// Axis-aligned box `[lo, hi]` containing the closed curve.
    pub fn bounding_box(&self) -> (Point, Point) {
        match *self {
            Shape::Ellipse { a, b } => ([-a, -b], [a, b]),
            Shape::Star { r0, amp, .. } => {
                let r = r0 + amp.abs();
                ([-r, -r], [r, r])
            }
        }
    }

    /// Radial extent `min |x(t)|` and `max |x(t)|`.
    pub fn radial_range(&self) -> (f64, f64) {
        match *self {
            Shape::Ellipse { a, b } => (a.min(b), a.max(b)),
            Shape::Star { r0, amp, .. } => (r0 - amp.abs(), r0 + amp.abs()),
        }
    }
}

/// Nyström discretization of a closed boundary on a uniform parameter grid.
///
/// The boundary is `offset + scale * x(t)` where `x` is the shape parametrization;
/// the model boundary has `offset = 0`, `scale = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGeometry {
    pub dim: usize,
    pub shape: Shape,
    pub offset: Point,
    pub scale: f64,
    pub num_nodes: usize,
    pub params: Vec<f64>,
    pub nodes: Vec<Point>,
    pub tangents: Vec<Point>,
    pub normals: Vec<Point>,
    pub speeds: Vec<f64>,
    pub curvatures: Vec<f64>,
    pub weights: Vec<f64>,
    pub enclosed_measure: f64,
    pub perimeter: f64,
    pub contains_origin: bool,
}

impl BoundaryGeometry {
    /// Samples `shape` at `n` nodes.
    pub fn from_shape(shape: Shape, n: usize) -> Result<Self> {
        Self::placed(shape, n, [0.0, 0.0], 1.0)
    }

    fn placed(shape: Shape, n: usize, offset: Point, scale: f64) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(PercondError::Geometry(format!(
                "number of nodes must be even and at least 8, got {n}"
            )));
        }
        if !(scale > 0.0) {
            return Err(PercondError::Geometry(format!("scale must be positive, got {scale}")));
        }
        let h = 2.0 * PI / n as f64;
        let mut g = BoundaryGeometry {
            dim: 2,
            shape,
            offset,
            scale,
            num_nodes: n,
            params: Vec::with_capacity(n),
            nodes: Vec::with_capacity(n),
            tangents: Vec::with_capacity(n),
            normals: Vec::with_capacity(n),
            speeds: Vec::with_capacity(n),
            curvatures: Vec::with_capacity(n),
            weights: Vec::with_capacity(n),
            enclosed_measure: 0.0,
            perimeter: 0.0,
            contains_origin: false,
        };
        let mut area_x = 0.0;
        let mut area_y = 0.0;
        for i in 0..n {
            let t = h * i as f64;
            let (x, dx, ddx) = shape.eval(t);
            let x = [offset[0] + scale * x[0], offset[1] + scale * x[1]];
            let dx = [scale * dx[0], scale * dx[1]];
            let ddx = [scale * ddx[0], scale * ddx[1]];
            let speed = norm2(dx).sqrt();
            if !(speed > 0.0) {
                return Err(PercondError::Geometry(format!("degenerate parametrization at t={t}")));
            }
            let tau = [dx[0] / speed, dx[1] / speed];
            let kappa = (dx[0] * ddx[1] - dx[1] * ddx[0]) / (speed * speed * speed);
            // Green's theorem with the x-flux and the y-flux, relative to the offset.
            area_x += (x[0] - offset[0]) * dx[1];
            area_y -= (x[1] - offset[1]) * dx[0];
            g.params.push(t);
            g.nodes.push(x);
            g.tangents.push(tau);
            g.normals.push([tau[1], -tau[0]]);
            g.speeds.push(speed);
            g.curvatures.push(kappa);
            g.weights.push(h * speed);
        }
        area_x *= h;
        area_y *= h;
        g.enclosed_measure = 0.5 * (area_x + area_y);
        g.perimeter = g.weights.iter().sum();
        g.contains_origin = winding_number(&g.nodes, [0.0, 0.0]) == 1;
        if !(g.enclosed_measure > 0.0) {
            return Err(PercondError::Geometry(
                "boundary is not counterclockwise (non-positive enclosed measure)".into(),
            ));
        }
        Ok(g)
    }

    /// The two Green's-theorem area quadratures (x-flux, y-flux).
    pub fn area_two_ways(&self) -> (f64, f64) {
        let h = 2.0 * PI / self.num_nodes as f64;
        let mut ax = 0.0;
        let mut ay = 0.0;
        for i in 0..self.num_nodes {
            let x = sub(self.nodes[i], self.offset);
            let dx = [self.tangents[i][0] * self.speeds[i], self.tangents[i][1] * self.speeds[i]];
            ax += x[0] * dx[1];
            ay -= x[1] * dx[0];
        }
        (ax * h, ay * h)
    }

    /// Quadrature of the normal components, which vanishes for closed curves.
    pub fn normal_integral(&self) -> Point {
        let mut s = [0.0, 0.0];
        for (w, nu) in self.weights.iter().zip(&self.normals) {
            s[0] += w * nu[0];
            s[1] += w * nu[1];
        }
        s
    }

    /// The boundary `p + eps * (this boundary)` in cell coordinates.
    pub fn scaled(&self, p: Point, eps: f64) -> Result<Self> {
        let offset = [p[0] + eps * self.offset[0], p[1] + eps * self.offset[1]];
        Self::placed(self.shape, self.num_nodes, offset, eps * self.scale)
    }

    /// Same boundary sampled at `m` nodes.
    pub fn resample(&self, m: usize) -> Result<Self> {
        Self::placed(self.shape, m, self.offset, self.scale)
    }

    /// Boundary integral of nodal values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Boundary mean of nodal values.
    pub fn mean(&self, values: &[f64]) -> f64 {
        self.integrate(values) / self.perimeter
    }

    /// Coordinate `k` of every node.
    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.nodes.iter().map(|x| x[k]).collect()
    }

    /// Normal component `k` at every node.
    pub fn normal_component(&self, k: usize) -> Vec<f64> {
        self.normals.iter().map(|n| n[k]).collect()
    }

    /// Largest chord length, estimated from the nodes.
    pub fn diameter(&self) -> f64 {
        let mut d2: f64 = 0.0;
        for a in &self.nodes {
            for b in &self.nodes {
                d2 = d2.max(norm2(sub(*a, *b)));
            }
        }
        d2.sqrt()
    }

    /// Largest distance of a node from the offset point.
    pub fn max_radius(&self) -> f64 {
        self.nodes
            .iter()
            .map(|x| norm2(sub(*x, self.offset)).sqrt())
            .fold(0.0, f64::max)
    }

    /// Distance from `x` to the nearest node.
    pub fn distance_to_nodes(&self, x: Point) -> f64 {
        self.nodes.iter().map(|y| norm2(sub(x, *y))).fold(f64::INFINITY, f64::min).sqrt()
    }

    /// Largest spacing between consecutive nodes.
    pub fn max_spacing(&self) -> f64 {
        let n = self.num_nodes;
        (0..n)
            .map(|i| norm2(sub(self.nodes[(i + 1) % n], self.nodes[i])).sqrt())
            .fold(0.0, f64::max)
    }

    /// Point-in-curve test by winding number of the node polygon.
    pub fn encloses(&self, x: Point) -> bool {
        winding_number(&self.nodes, x) != 0
    }
}

fn winding_number(nodes: &[Point], x: Point) -> i64 {
    let n = nodes.len();
    let mut total = 0.0;
    for i in 0..n {
        let a = sub(nodes[i], x);
        let b = sub(nodes[(i + 1) % n], x);
        total += (a[0] * b[1] - a[1] * b[0]).atan2(dot(a, b));
    }
    (total / (2.0 * PI)).round() as i64
}

/// Ellipse with semi-axes `a`, `b`, sampled at `n` nodes.
pub fn make_ellipse(a: f64, b: f64, n: usize) -> Result<BoundaryGeometry> {
    if !(a > 0.0 && b > 0.0) {
        return Err(PercondError::Geometry(format!("semi-axes must be positive, got ({a}, {b})")));
    }
    BoundaryGeometry::from_shape(Shape::Ellipse { a, b }, n)
}

/// Polar curve `r(t) = r0 + amp cos(lobes t)`, sampled at `n` nodes.
pub fn make_smooth_star(r0: f64, amp: f64, lobes: u32, n: usize) -> Result<BoundaryGeometry> {
    if !(r0 > 0.0) || !(amp >= 0.0) || amp >= r0 {
        return Err(PercondError::Geometry(format!(
            "star needs 0 <= amp < r0, got r0={r0}, amp={amp}"
        )));
    }
    BoundaryGeometry::from_shape(Shape::Star { r0, amp, lobes }, n)
}

/// The scaled inclusion `p + eps * Omega` inside the cell.
#[derive(Debug, Clone, Copy)]
pub struct ScaledInclusion<'a> {
    pub p: Point,
    pub eps: f64,
    pub eps0: f64,
    pub geometry: &'a BoundaryGeometry,
}

/// Largest `|eps|` for which the bounding box of `p + eps * Omega` stays in the open cell.
pub fn admissible_scale(p: Point, geometry: &BoundaryGeometry, cell: &PeriodicCell) -> f64 {
    let (lo, hi) = geometry.shape.bounding_box();
    let mut eps0 = f64::INFINITY;
    for k in 0..2 {
        let ext = geometry.scale * lo[k].abs().max(hi[k].abs()) + geometry.offset[k].abs();
        let room = p[k].min(cell.q_diag[k] - p[k]);
        eps0 = eps0.min(room / ext);
    }
    eps0
}

/// Checks `p + eps * cl(Omega)` lies inside the cell and records `eps0`.
pub fn validate_scaled<'a>(
    p: Point,
    eps: f64,
    geometry: &'a BoundaryGeometry,
    cell: &PeriodicCell,
) -> Result<ScaledInclusion<'a>> {
    if !cell.contains(p) {
        return Err(PercondError::Geometry(format!("center {p:?} is not inside the open cell")));
    }
    let eps0 = admissible_scale(p, geometry, cell);
    if !(eps.abs() < eps0) {
        return Err(PercondError::InclusionTooLarge(format!(
            "p + eps*cl(Omega) must lie in Q: |eps| = {} but eps0 = {eps0}",
            eps.abs()
        )));
    }
    Ok(ScaledInclusion { p, eps, eps0, geometry })
}
