//! Nyström matrices for simple-layer potentials and their normal derivatives,
//! plus off-boundary evaluation of layer potentials.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{PercondError, Result};
use crate::geometry::{dot, norm2, sub, BoundaryGeometry, Point};
use crate::greens::GreensEvaluator;

/// Nodal values of a boundary density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub values: Vec<f64>,
    pub zero_mean: bool,
}

impl Density {
    /// A density with no mean constraint.
    pub fn general(values: Vec<f64>) -> Self {
        Self { values, zero_mean: false }
    }

    /// A density required to integrate to zero over `geometry`.
    pub fn zero_mean(values: Vec<f64>, geometry: &BoundaryGeometry) -> Result<Self> {
        if values.len() != geometry.num_nodes {
            return Err(PercondError::InvalidData(format!(
                "density has {} values for {} nodes",
                values.len(),
                geometry.num_nodes
            )));
        }
        let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        let integral = geometry.integrate(&values);
        if integral.abs() > 1e-12 * scale * geometry.perimeter {
            return Err(PercondError::InvalidData(format!(
                "density is not zero-mean (integral {integral:e})"
            )));
        }
        Ok(Self { values, zero_mean: true })
    }

    /// Subtracts the boundary mean.
    pub fn projected(values: &[f64], geometry: &BoundaryGeometry) -> Self {
        let m = geometry.mean(values);
        Self { values: values.iter().map(|v| v - m).collect(), zero_mean: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    SingleLayer,
    AdjointDouble,
    PeriodicCorrectionR,
    PeriodicCorrectionDR,
}

/// Dense Nyström matrix: `(A mu)_i` approximates the operator at node `i`.
#[derive(Debug, Clone)]
pub struct NystromBlock {
    pub matrix: DMatrix<f64>,
    pub kind: BlockKind,
    pub scale: Option<f64>,
}

impl NystromBlock {
    pub fn apply(&self, mu: &[f64]) -> Vec<f64> {
        let n = self.matrix.ncols();
        assert_eq!(mu.len(), n, "density length mismatch");
        let mut out = vec![0.0; self.matrix.nrows()];
        for j in 0..n {
            let c = mu[j];
            if c == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.matrix.column(j).iter()) {
                *o += a * c;
            }
        }
        out
    }
}

fn fill_rows(n: usize, f: impl Fn(usize, &mut [f64]) + Sync) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n];
            f(i, &mut row);
            row
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Weights `R_d` of the trapezoid rule for `int log(4 sin^2((t - tau)/2)) phi(tau) dtau`
/// at `t - tau = 2 pi d / N`.
pub fn kress_weights(n: usize) -> Vec<f64> {
    let nf = n as f64;
    (0..n)
        .map(|d| {
            let mut s = 0.0;
            for m in 1..n / 2 {
                s += (2.0 * PI * (m * d) as f64 / nf).cos() / m as f64;
            }
            let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
            -4.0 * PI / nf * s - 4.0 * PI / (nf * nf) * sign
        })
        .collect()
}

/// Single-layer matrix with logarithmic product quadrature.
pub fn assemble_v(geometry: &BoundaryGeometry) -> Result<NystromBlock> {
    let n = geometry.num_nodes;
    if n % 2 != 0 {
        return Err(PercondError::Geometry(format!("single layer needs even N, got {n}")));
    }
    let r = kress_weights(n);
    let h = 2.0 * PI / n as f64;
    let t = &geometry.params;
    let matrix = fill_rows(n, |i, row| {
        for j in 0..n {
            let smooth = if i == j {
                (geometry.speeds[i] * geometry.speeds[i]).ln() / (4.0 * PI)
            } else {
                let d2 = norm2(sub(geometry.nodes[i], geometry.nodes[j]));
                let s = (0.5 * (t[i] - t[j])).sin();
                (d2 / (4.0 * s * s)).ln() / (4.0 * PI)
            };
            row[j] = geometry.speeds[j] * (r[(i + n - j) % n] / (4.0 * PI) + h * smooth);
        }
    });
    Ok(NystromBlock { matrix, kind: BlockKind::SingleLayer, scale: None })
}

/// Adjoint double-layer matrix `w_j dS_2(x_i - x_j) . nu_i`, with the curvature limit
/// `kappa_i / (4 pi)` on the diagonal.
pub fn assemble_w(geometry: &BoundaryGeometry) -> NystromBlock {
    let n = geometry.num_nodes;
    let matrix = fill_rows(n, |i, row| {
        let xi = geometry.nodes[i];
        let nu = geometry.normals[i];
        for j in 0..n {
            row[j] = if i == j {
                geometry.weights[i] * geometry.curvatures[i] / (4.0 * PI)
            } else {
                let d = sub(xi, geometry.nodes[j]);
                geometry.weights[j] * dot(d, nu) / (2.0 * PI * norm2(d))
            };
        }
    });
    NystromBlock { matrix, kind: BlockKind::AdjointDouble, scale: None }
}

/// Trapezoid matrices for `R_q(eps (t - s))` and `DR_q(eps (t - s)) . nu(t)`.
pub fn assemble_r_blocks(
    geometry: &BoundaryGeometry,
    eps: f64,
    ev: &GreensEvaluator,
) -> Result<(NystromBlock, NystromBlock)> {
    let diam = geometry.diameter();
    if !(eps.abs() * diam < ev.cell.q_min()) {
        return Err(PercondError::InclusionTooLarge(format!(
            "|eps| diam(Omega) = {} must be below min q_ii = {}",
            eps.abs() * diam,
            ev.cell.q_min()
        )));
    }
    let n = geometry.num_nodes;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = geometry.nodes[i];
            let nu = geometry.normals[i];
            let mut r = vec![0.0; n];
            let mut dr = vec![0.0; n];
            for j in 0..n {
                let d = sub(xi, geometry.nodes[j]);
                let z = [eps * d[0], eps * d[1]];
                let w = geometry.weights[j];
                r[j] = w * ev.rq(z);
                dr[j] = w * dot(ev.grad_rq(z), nu);
            }
            (r, dr)
        })
        .collect();
    let r = DMatrix::from_fn(n, n, |i, j| rows[i].0[j]);
    let dr = DMatrix::from_fn(n, n, |i, j| rows[i].1[j]);
    Ok((
        NystromBlock { matrix: r, kind: BlockKind::PeriodicCorrectionR, scale: Some(eps) },
        NystromBlock { matrix: dr, kind: BlockKind::PeriodicCorrectionDR, scale: Some(eps) },
    ))
}

/// Trigonometric interpolation of equispaced periodic samples onto `m >= n` points.
pub fn trig_interpolate(values: &[f64], m: usize) -> Vec<f64> {
    let n = values.len();
    assert!(m >= n && n % 2 == 0, "trig_interpolate needs even n <= m");
    if m == n {
        return values.to_vec();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let mut big = vec![Complex::new(0.0, 0.0); m];
    let half = n / 2;
    for k in 0..half {
        big[k] = buf[k];
    }
    for k in half + 1..n {
        big[m - n + k] = buf[k];
    }
    big[half] = buf[half] * 0.5;
    big[m - half] += buf[half] * 0.5;
    planner.plan_fft_inverse(m).process(&mut big);
    big.iter().map(|c| c.re / n as f64).collect()
}

/// Which fundamental solution a layer potential uses.
#[derive(Debug, Clone, Copy)]
pub enum Kernel<'a> {
    Free,
    Periodic(&'a GreensEvaluator),
}

/// Accuracy flag for off-boundary evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldStatus {
    Ok,
    NearBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    pub value: f64,
    pub gradient: Point,
    pub status: FieldStatus,
}

/// Targets closer than this many node spacings use the upsampled density.
const NEAR_SPACINGS: f64 = 6.0;

/// Default upsampling factor for near-boundary targets.
pub const DEFAULT_UPSAMPLE: usize = 16;

/// Simple-layer potential `sum_i w_i S(x - y_i) mu_i` with a near-boundary correction.
pub struct LayerPotential<'a> {
    pub geometry: &'a BoundaryGeometry,
    pub density: Vec<f64>,
    pub kernel: Kernel<'a>,
    pub upsample: usize,
    spacing: f64,
    fine: OnceLock<Option<(BoundaryGeometry, Vec<f64>)>>,
}

impl<'a> LayerPotential<'a> {
    pub fn new(geometry: &'a BoundaryGeometry, density: Vec<f64>, kernel: Kernel<'a>) -> Self {
        Self::with_upsample(geometry, density, kernel, DEFAULT_UPSAMPLE)
    }

    pub fn with_upsample(
        geometry: &'a BoundaryGeometry,
        density: Vec<f64>,
        kernel: Kernel<'a>,
        upsample: usize,
    ) -> Self {
        assert_eq!(density.len(), geometry.num_nodes, "density length mismatch");
        let spacing = geometry.max_spacing();
        Self { geometry, density, kernel, upsample: upsample.max(1), spacing, fine: OnceLock::new() }
    }

    fn fine(&self) -> Option<&(BoundaryGeometry, Vec<f64>)> {
        self.fine
            .get_or_init(|| {
                if self.upsample <= 1 {
                    return None;
                }
                let m = self.geometry.num_nodes * self.upsample;
                let g = self.geometry.resample(m).ok()?;
                let d = trig_interpolate(&self.density, m);
                Some((g, d))
            })
            .as_ref()
    }

    fn local_point(&self, x: Point) -> Point {
        match self.kernel {
            Kernel::Free => x,
            Kernel::Periodic(ev) => ev.cell.wrap_near(x, self.geometry.offset),
        }
    }

    fn free_sum(g: &BoundaryGeometry, mu: &[f64], x: Point) -> (f64, Point) {
        let mut v = 0.0;
        let mut gr = [0.0, 0.0];
        for i in 0..g.num_nodes {
            let d = sub(x, g.nodes[i]);
            let r2 = norm2(d);
            let c = g.weights[i] * mu[i];
            v += c * r2.ln();
            let f = c / r2;
            gr[0] += f * d[0];
            gr[1] += f * d[1];
        }
        (v / (4.0 * PI), [gr[0] / (2.0 * PI), gr[1] / (2.0 * PI)])
    }

    /// Value and gradient at `x` off the boundary.
    pub fn eval(&self, x: Point) -> FieldValue {
        let g = self.geometry;
        let xl = self.local_point(x);
        let dist = g.distance_to_nodes(xl);
        let near = dist < NEAR_SPACINGS * self.spacing;
        let fine = if near { self.fine() } else { None };
        let status = if dist < self.spacing * (NEAR_SPACINGS / self.upsample as f64).max(1.0 / 16.0)
        {
            FieldStatus::NearBoundary
        } else {
            FieldStatus::Ok
        };
        let (mut value, mut gradient) = match self.kernel {
            Kernel::Free => match fine {
                Some((fg, fd)) => Self::free_sum(fg, fd, xl),
                None => Self::free_sum(g, &self.density, xl),
            },
            Kernel::Periodic(ev) => {
                let mut v = 0.0;
                let mut gr = [0.0, 0.0];
                for i in 0..g.num_nodes {
                    let d = sub(xl, g.nodes[i]);
                    let c = g.weights[i] * self.density[i];
                    v += c * ev.sq(d);
                    let dg = ev.grad_sq(d);
                    gr[0] += c * dg[0];
                    gr[1] += c * dg[1];
                }
                (v, gr)
            }
        };
        if let (Kernel::Periodic(_), Some((fg, fd))) = (self.kernel, fine) {
            // Replace the coarse quadrature of the singular part by the fine one.
            let (cv, cg) = Self::free_sum(g, &self.density, xl);
            let (fv, fgr) = Self::free_sum(fg, fd, xl);
            value += fv - cv;
            gradient[0] += fgr[0] - cg[0];
            gradient[1] += fgr[1] - cg[1];
        }
        FieldValue { value, gradient, status }
    }

    /// Value only.
    pub fn value(&self, x: Point) -> f64 {
        self.eval(x).value
    }
}
