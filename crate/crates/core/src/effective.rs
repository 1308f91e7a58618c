//! Effective conductivity from boundary integrals of the rescaled solution, its
//! `eps -> 0` limit, and a volume-quadrature cross-check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PercondError, Result};
use crate::geometry::{Point, BoundaryGeometry};
use crate::potentials::FieldValue;
use crate::transmission::{EpsFields, EpsSolution, TransmissionSolver};

/// 2x2 matrix indexed `[k][j]`.
pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveResult {
    pub eps: f64,
    pub eps_prime: f64,
    pub lambda_eff: Mat2,
    #[serde(rename = "Lambda")]
    pub lambda: Mat2,
    #[serde(rename = "Lambda_plus")]
    pub lambda_plus: Mat2,
    #[serde(rename = "Lambda_minus")]
    pub lambda_minus: Mat2,
    pub f_term: Mat2,
}

/// `(1/|Q|) int f t_k`, written into every column.
pub fn f_term(solver: &TransmissionSolver) -> Mat2 {
    let g = &solver.geometry;
    let f = solver.f_values();
    let qm = solver.cell().measure;
    let mut out = [[0.0; 2]; 2];
    for k in 0..2 {
        let tk = g.coordinate(k);
        let v = (0..g.num_nodes).map(|i| g.weights[i] * f[i] * tk[i]).sum::<f64>() / qm;
        out[k] = [v, v];
    }
    out
}

/// Column `j` of `Lambda+` and `Lambda-` from a finite-eps solution.
pub fn lambda_columns(solver: &TransmissionSolver, sol: &EpsSolution) -> Result<([f64; 2], [f64; 2])> {
    let fields = solver.rescaled_fields(sol)?;
    let g = &solver.geometry;
    let qm = solver.cell().measure;
    let mut plus = [0.0; 2];
    let mut minus = [0.0; 2];
    for k in 0..2 {
        let nu = g.normal_component(k);
        for i in 0..g.num_nodes {
            plus[k] += g.weights[i] * fields.u_plus_nodes[i] * nu[i];
            minus[k] -= g.weights[i] * fields.v_minus_nodes[i] * nu[i];
        }
        plus[k] /= qm;
        minus[k] /= qm;
    }
    Ok((plus, minus))
}

/// Assembles the result from `Lambda+`, `Lambda-` and the f-term.
pub fn assemble_result(
    solver: &TransmissionSolver,
    eps: f64,
    eps_prime: f64,
    lambda_plus: Mat2,
    lambda_minus: Mat2,
) -> EffectiveResult {
    let lp = solver.data.lambda_plus;
    let lm = solver.data.lambda_minus;
    let ft = f_term(solver);
    let mut lambda = [[0.0; 2]; 2];
    let mut lambda_eff = [[0.0; 2]; 2];
    for k in 0..2 {
        for j in 0..2 {
            lambda[k][j] = lp * lambda_plus[k][j] + lm * lambda_minus[k][j] + ft[k][j];
            let delta = if k == j { lm } else { 0.0 };
            lambda_eff[k][j] = delta + eps * eps * lambda[k][j];
        }
    }
    EffectiveResult { eps, eps_prime, lambda_eff, lambda, lambda_plus, lambda_minus, f_term: ft }
}

/// Effective conductivity at `eps` with the resistivity from the data's law.
pub fn lambda_eff(solver: &TransmissionSolver, p: Point, eps: f64) -> Result<EffectiveResult> {
    let sols = [solver.solve_eps(p, eps, 0)?, solver.solve_eps(p, eps, 1)?];
    from_solutions(solver, &sols)
}

/// Effective-conductivity structure at an arbitrary pair `(eps, eps')`.
pub fn lambda_at(solver: &TransmissionSolver, p: Point, eps: f64, eps_prime: f64) -> Result<EffectiveResult> {
    let sols = [solver.solve_scaled(p, eps, eps_prime, 0)?, solver.solve_scaled(p, eps, eps_prime, 1)?];
    from_solutions(solver, &sols)
}

/// Builds the result from the two direction solves (`j = 0, 1` in order).
pub fn from_solutions(solver: &TransmissionSolver, sols: &[EpsSolution; 2]) -> Result<EffectiveResult> {
    let mut plus = [[0.0; 2]; 2];
    let mut minus = [[0.0; 2]; 2];
    for (j, sol) in sols.iter().enumerate() {
        if sol.j != j {
            return Err(PercondError::InvalidData("solutions must be ordered by direction".into()));
        }
        let (pc, mc) = lambda_columns(solver, sol)?;
        for k in 0..2 {
            plus[k][j] = pc[k];
            minus[k][j] = mc[k];
        }
    }
    Ok(assemble_result(solver, sols[0].eps, sols[0].eps_prime, plus, minus))
}

/// `Lambda[0, r*]` from the limiting boundary traces.
pub fn lambda_limit(solver: &TransmissionSolver) -> Result<Mat2> {
    let g = &solver.geometry;
    let qm = solver.cell().measure;
    let lp = solver.data.lambda_plus;
    let lm = solver.data.lambda_minus;
    let ft = f_term(solver);
    let mut out = [[0.0; 2]; 2];
    for j in 0..2 {
        let lim = solver.solve_limiting(j)?;
        for k in 0..2 {
            let nu = g.normal_component(k);
            let mut s = 0.0;
            for i in 0..g.num_nodes {
                s += g.weights[i] * nu[i] * (lp * lim.u_plus_trace.values[i] - lm * lim.u_minus_trace.values[i]);
            }
            let delta = if k == j { g.enclosed_measure / qm * (lp - lm) } else { 0.0 };
            out[k][j] = s / qm + delta + ft[k][j];
        }
    }
    Ok(out)
}

/// Volume-quadrature estimate of the effective conductivity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumeCheck {
    pub lambda_eff: Mat2,
    /// Difference from a half-resolution run.
    pub error_estimate: f64,
    pub resolution: usize,
}

fn bump(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// Smooth step: 0 for `x <= 0`, 1 for `x >= 1`.
fn smooth_step(x: f64) -> f64 {
    let a = bump(x);
    let b = bump(1.0 - x);
    a / (a + b)
}

// Quadrature nodes come within a few percent of a panel width of the interface.
const VOLUME_UPSAMPLE: usize = 64;

struct Cutoff {
    r1: f64,
    r2: f64,
}

impl Cutoff {
    fn chi(&self, r: f64) -> f64 {
        1.0 - smooth_step((r - self.r1) / (self.r2 - self.r1))
    }
}

fn legendre(m: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, m as f64 * (z * p1 - p0) / (z * z - 1.0))
}

fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(m, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(m, z);
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Composite Gauss-Legendre nodes on `[a, b]` with equal panels.
fn panels(a: f64, b: f64, count: usize, order: usize) -> Vec<(f64, f64)> {
    let (gx, gw) = gauss_legendre(order);
    let half = 0.5 * (b - a) / count as f64;
    let mut out = Vec::with_capacity(count * order);
    for i in 0..count {
        let lo = a + 2.0 * half * i as f64;
        for (x, w) in gx.iter().zip(&gw) {
            out.push((lo + half * (1.0 + x), half * w));
        }
    }
    out
}

fn star_coordinates(model: &BoundaryGeometry, m: usize) -> Result<Vec<(Point, f64)>> {
    // (gamma(t), weight * gamma x gamma') at m equispaced parameters.
    let g = model.resample(m)?;
    let h = 2.0 * std::f64::consts::PI / m as f64;
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let x = g.nodes[i];
        let d = [g.tangents[i][0] * g.speeds[i], g.tangents[i][1] * g.speeds[i]];
        let cross = x[0] * d[1] - x[1] * d[0];
        if cross <= 0.0 {
            return Err(PercondError::Geometry(
                "volume check needs an inclusion star-shaped about the origin".into(),
            ));
        }
        out.push((x, h * cross));
    }
    Ok(out)
}

fn integrate_gradients(
    points: &[(Point, f64)],
    eval: impl Fn(Point) -> FieldValue + Sync,
) -> [f64; 2] {
    points
        .par_iter()
        .map(|&(x, w)| {
            if w == 0.0 {
                return [0.0, 0.0];
            }
            let g = eval(x).gradient;
            [w * g[0], w * g[1]]
        })
        .reduce(|| [0.0, 0.0], |a, b| [a[0] + b[0], a[1] + b[1]])
}

fn volume_column(
    solver: &TransmissionSolver,
    fields: &EpsFields<'_>,
    sol: &EpsSolution,
    resolution: usize,
) -> Result<[f64; 2]> {
    let cell = solver.cell();
    let model = &solver.geometry;
    let eps = sol.eps;
    let p = sol.p;
    let r_in = eps * model.max_radius();
    let r_min = eps * model.nodes.iter().map(|x| x[0].hypot(x[1])).fold(f64::INFINITY, f64::min);
    let r2 = 0.45 * cell.q_min();
    if r_in >= 0.8 * r2 {
        return Err(PercondError::InclusionTooLarge(format!(
            "volume check needs the inclusion radius {r_in:.4} well inside {r2:.4}"
        )));
    }
    let cut = Cutoff { r1: r_in + 0.25 * (r2 - r_in), r2 };

    // Far part: (1 - chi) grad u- on a periodic midpoint grid.
    let q = cell.q_diag;
    let (hx, hy) = (q[0] / resolution as f64, q[1] / resolution as f64);
    let mut far_pts = Vec::with_capacity(resolution * resolution);
    for a in 0..resolution {
        for b in 0..resolution {
            let x = [(a as f64 + 0.5) * hx, (b as f64 + 0.5) * hy];
            let d = cell.wrap_near(x, p);
            let r = (d[0] - p[0]).hypot(d[1] - p[1]);
            far_pts.push((x, hx * hy * (1.0 - cut.chi(r))));
        }
    }
    let far = integrate_gradients(&far_pts, |x| fields.u_minus(x));

    // Near and interior parts in star-shaped coordinates x = p + eps s gamma(t).
    let m = resolution.max(16);
    let star = star_coordinates(model, m)?;
    let count = (resolution / 16).max(3);
    let s_max = r2 / r_min;
    let mut near_pts = Vec::new();
    for (s, ws) in panels(1.0, s_max, count, 8) {
        for &(gam, wt) in &star {
            let x = [p[0] + eps * s * gam[0], p[1] + eps * s * gam[1]];
            let r = eps * s * gam[0].hypot(gam[1]);
            near_pts.push((x, eps * eps * s * ws * wt * cut.chi(r)));
        }
    }
    let near = integrate_gradients(&near_pts, |x| fields.u_minus(x));
    let mut in_pts = Vec::new();
    for (s, ws) in panels(0.0, 1.0, count, 8) {
        for &(gam, wt) in &star {
            let x = [p[0] + eps * s * gam[0], p[1] + eps * s * gam[1]];
            in_pts.push((x, eps * eps * s * ws * wt));
        }
    }
    let inner = integrate_gradients(&in_pts, |x| fields.u_plus(x));
    let lp = solver.data.lambda_plus;
    let lm = solver.data.lambda_minus;
    Ok([
        (lp * inner[0] + lm * (far[0] + near[0])) / cell.measure,
        (lp * inner[1] + lm * (far[1] + near[1])) / cell.measure,
    ])
}

fn volume_matrix(solver: &TransmissionSolver, sols: &[EpsSolution; 2], resolution: usize) -> Result<Mat2> {
    let ft = f_term(solver);
    let mut out = [[0.0; 2]; 2];
    for (j, sol) in sols.iter().enumerate() {
        let fields = solver.eps_fields_upsampled(sol, VOLUME_UPSAMPLE);
        let col = volume_column(solver, &fields, sol, resolution)?;
        for k in 0..2 {
            out[k][j] = col[k] + sol.eps * sol.eps * ft[k][j];
        }
    }
    Ok(out)
}

/// Effective conductivity from its volume-integral definition. The cell is split
/// with a smooth radial cutoff around `p`: the outer part is integrated on a
/// uniform `resolution x resolution` grid, the part near and inside the inclusion
/// in star-shaped coordinates. The error estimate compares with a run at half
/// resolution.
pub fn lambda_eff_volume_check(
    solver: &TransmissionSolver,
    p: Point,
    eps: f64,
    resolution: usize,
) -> Result<VolumeCheck> {
    if resolution < 16 {
        return Err(PercondError::InvalidData(format!("volume grid resolution {resolution} is too coarse")));
    }
    let sols = [solver.solve_eps(p, eps, 0)?, solver.solve_eps(p, eps, 1)?];
    let full = volume_matrix(solver, &sols, resolution)?;
    let half = volume_matrix(solver, &sols, resolution / 2)?;
    let mut err: f64 = 0.0;
    for k in 0..2 {
        for j in 0..2 {
            err = err.max((full[k][j] - half[k][j]).abs());
        }
    }
    Ok(VolumeCheck { lambda_eff: full, error_estimate: err, resolution })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = w.iter().sum();
        assert_abs_diff_eq!(s, 2.0, epsilon = 1e-14);
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert_abs_diff_eq!(i, 2.0 / 15.0, epsilon = 1e-14);
    }

    #[test]
    fn panels_cover_interval() {
        let pts = panels(1.0, 3.0, 4, 8);
        let len: f64 = pts.iter().map(|p| p.1).sum();
        assert_abs_diff_eq!(len, 2.0, epsilon = 1e-13);
        assert!(pts.iter().all(|p| p.0 > 1.0 && p.0 < 3.0));
    }

    #[test]
    fn cutoff_is_a_smooth_step() {
        let c = Cutoff { r1: 0.2, r2: 0.4 };
        assert_eq!(c.chi(0.1), 1.0);
        assert_eq!(c.chi(0.5), 0.0);
        assert_abs_diff_eq!(c.chi(0.3), 0.5, epsilon = 1e-14);
    }
}
