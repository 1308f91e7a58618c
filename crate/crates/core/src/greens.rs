//! Fundamental solution of the Laplacian, its periodic analogue and the regular part.
//!
//! The periodic kernel is evaluated by Ewald splitting:
//!
//! ```text
//! S_q(x) = -1/(4 pi) sum_z E1(eta^2 |x - qz|^2) + 1/(4 eta^2 |Q|)
//!          - 1/|Q| sum_{k != 0} exp(-|k|^2 / (4 eta^2)) cos(k.x) / |k|^2
//! ```
//!
//! with `k = 2 pi q^{-1} m`. The constant makes the cell average vanish.

use std::f64::consts::PI;

use crate::error::{PercondError, Result};
use crate::geometry::{dot, norm2, BoundaryGeometry, PeriodicCell, Point};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Images with `eta^2 r^2` above this contribute below 1e-19 relative.
const SCREEN_CUTOFF: f64 = 44.0;

/// Exponential integral `E1(u)` for `u > 0`.
pub fn e1(u: f64) -> f64 {
    if u <= 1.0 {
        ein(u) - u.ln() - EULER_GAMMA
    } else {
        e1_continued_fraction(u)
    }
}

/// Entire function `Ein(u) = int_0^u (1 - e^{-s}) / s ds`.
pub fn ein(u: f64) -> f64 {
    if u <= 1.0 {
        let mut term = u;
        let mut sum = u;
        let mut k = 1.0;
        loop {
            term *= -u / (k + 1.0);
            k += 1.0;
            let add = term / k;
            sum += add;
            if add.abs() <= 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        e1_continued_fraction(u) + u.ln() + EULER_GAMMA
    }
}

// Modified Lentz evaluation of the continued fraction for E1.
fn e1_continued_fraction(u: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = u + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-u).exp()
}

/// `S_2(x) = log|x| / (2 pi)`.
pub fn eval_sn(x: Point) -> Result<f64> {
    let r2 = norm2(x);
    if r2 == 0.0 {
        return Err(PercondError::OnLattice { point: x, distance: 0.0 });
    }
    Ok(r2.ln() / (4.0 * PI))
}

/// Gradient `x / (2 pi |x|^2)`.
pub fn grad_sn(x: Point) -> Result<Point> {
    let r2 = norm2(x);
    if r2 == 0.0 {
        return Err(PercondError::OnLattice { point: x, distance: 0.0 });
    }
    let c = 1.0 / (2.0 * PI * r2);
    Ok([c * x[0], c * x[1]])
}

/// Ewald evaluator for `S_q`, `R_q = S_q - S_2` and their gradients on a fixed cell.
#[derive(Debug, Clone)]
pub struct GreensEvaluator {
    pub cell: PeriodicCell,
    pub ewald_eta: f64,
    pub real_cutoff: usize,
    pub recip_cutoff: usize,
    pub tolerance: f64,
    mean_shift: f64,
    log_eta: f64,
    // coefficient 2 exp(-|k|^2/4eta^2) / (|Q| |k|^2) on the grid m1 in 0..=K, m2 in -K..=K
    recip_coef: Vec<f64>,
    kvec: Vec<Point>,
}

impl GreensEvaluator {
    /// Autotuned splitting parameter and the default tolerance 1e-13.
    pub fn new(cell: PeriodicCell) -> Self {
        Self::with_params(cell, None, 1e-13).expect("default Ewald parameters are valid")
    }

    /// The balanced splitting parameter `2 sqrt(pi / |Q|)`.
    pub fn autotuned_eta(cell: &PeriodicCell) -> f64 {
        2.0 * (PI / cell.measure).sqrt()
    }

    pub fn with_params(cell: PeriodicCell, eta: Option<f64>, tolerance: f64) -> Result<Self> {
        let eta = eta.unwrap_or_else(|| Self::autotuned_eta(&cell));
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(PercondError::InvalidData(format!("Ewald eta must be positive, got {eta}")));
        }
        if !(tolerance > 0.0) {
            return Err(PercondError::InvalidData(format!(
                "Ewald tolerance must be positive, got {tolerance}"
            )));
        }
        let qmin = cell.q_min();
        let qmax = cell.q_diag[0].max(cell.q_diag[1]);
        // Spatial shells: shell s lies at distance >= (s - 1/2) q_min from any point of
        // the principal cell and holds 8s images.
        let mut real_cutoff = 1;
        loop {
            let s = (real_cutoff + 1) as f64;
            let d = (s - 0.5) * qmin;
            let u = eta * eta * d * d;
            let bound = 8.0 * s * (e1(u) / (4.0 * PI) + (-u).exp() / (2.0 * PI * d));
            if bound < 1e-3 * tolerance || real_cutoff > 60 {
                break;
            }
            real_cutoff += 1;
        }
        let mut recip_cutoff = 1;
        loop {
            let s = (recip_cutoff + 1) as f64;
            let k = 2.0 * PI * s / qmax;
            let bound = 8.0 * s * (-k * k / (4.0 * eta * eta)).exp() * (1.0 / (k * k) + 1.0 / k)
                / cell.measure;
            if bound < 1e-3 * tolerance || recip_cutoff > 200 {
                break;
            }
            recip_cutoff += 1;
        }
        let kk = recip_cutoff as i64;
        let width = (2 * kk + 1) as usize;
        let mut recip_coef = vec![0.0; (kk as usize + 1) * width];
        let mut kvec = vec![[0.0, 0.0]; (kk as usize + 1) * width];
        for m1 in 0..=kk {
            for m2 in -kk..=kk {
                if m1 == 0 && m2 <= 0 {
                    continue;
                }
                let k = [
                    2.0 * PI * m1 as f64 / cell.q_diag[0],
                    2.0 * PI * m2 as f64 / cell.q_diag[1],
                ];
                let k2 = norm2(k);
                let idx = m1 as usize * width + (m2 + kk) as usize;
                recip_coef[idx] = 2.0 * (-k2 / (4.0 * eta * eta)).exp() / (cell.measure * k2);
                kvec[idx] = k;
            }
        }
        Ok(Self {
            cell,
            ewald_eta: eta,
            real_cutoff,
            recip_cutoff,
            tolerance,
            mean_shift: 1.0 / (4.0 * eta * eta * cell.measure),
            log_eta: eta.ln(),
            recip_coef,
            kvec,
        })
    }

    /// Distance from `x` to the nearest lattice point.
    pub fn lattice_distance(&self, x: Point) -> f64 {
        let y = self.cell.wrap_near(x, [0.0, 0.0]);
        norm2(y).sqrt()
    }

    fn check_off_lattice(&self, x: Point) -> Result<()> {
        let d = self.lattice_distance(x);
        if d <= 1e-10 * self.cell.q_min() {
            return Err(PercondError::OnLattice { point: x, distance: d });
        }
        Ok(())
    }

    fn check_principal(&self, x: Point) -> Result<()> {
        if (0..2).any(|k| !(x[k].abs() < self.cell.q_diag[k])) {
            return Err(PercondError::OutsidePrincipalCell(x));
        }
        Ok(())
    }

    /// `S_q(x)`; errors on lattice points.
    pub fn eval_sqn(&self, x: Point) -> Result<f64> {
        self.check_off_lattice(x)?;
        Ok(self.sq(x))
    }

    /// Gradient of `S_q`; errors on lattice points.
    pub fn grad_sqn(&self, x: Point) -> Result<Point> {
        self.check_off_lattice(x)?;
        Ok(self.grad_sq(x))
    }

    /// `R_q(x)` for `|x_k| < q_kk`, continued analytically through the origin.
    pub fn eval_rqn(&self, x: Point) -> Result<f64> {
        self.check_principal(x)?;
        Ok(self.rq(x))
    }

    /// Gradient of `R_q` for `|x_k| < q_kk`.
    pub fn grad_rqn(&self, x: Point) -> Result<Point> {
        self.check_principal(x)?;
        Ok(self.grad_rq(x))
    }

    /// `S_q(x)` without the lattice check.
    pub fn sq(&self, x: Point) -> f64 {
        let y = self.cell.wrap_near(x, [0.0, 0.0]);
        self.real_value(y, false) + self.mean_shift + self.recip_value(y)
    }

    /// Gradient of `S_q` without the lattice check.
    pub fn grad_sq(&self, x: Point) -> Point {
        let y = self.cell.wrap_near(x, [0.0, 0.0]);
        let a = self.real_grad(y, false);
        let b = self.recip_grad(y);
        [a[0] + b[0], a[1] + b[1]]
    }

    /// `R_q(x)` without the domain check; valid away from nonzero lattice points.
    pub fn rq(&self, x: Point) -> f64 {
        let u = self.ewald_eta * self.ewald_eta * norm2(x);
        let central = -(ein(u) - EULER_GAMMA) / (4.0 * PI) + self.log_eta / (2.0 * PI);
        self.real_value(x, true) + central + self.mean_shift + self.recip_value(x)
    }

    /// Gradient of `R_q` without the domain check.
    pub fn grad_rq(&self, x: Point) -> Point {
        let eta2 = self.ewald_eta * self.ewald_eta;
        let r2 = norm2(x);
        let u = eta2 * r2;
        let factor = if u < 1e-8 { eta2 * (1.0 - 0.5 * u) } else { -(-u).exp_m1() / r2 };
        let c = -factor / (2.0 * PI);
        let a = self.real_grad(x, true);
        let b = self.recip_grad(x);
        [a[0] + b[0] + c * x[0], a[1] + b[1] + c * x[1]]
    }

    // Screened images in a window centered on the cell containing x. With
    // `skip_origin` the image at z = 0 is left out.
    fn real_value(&self, x: Point, skip_origin: bool) -> f64 {
        let q = self.cell.q_diag;
        let eta2 = self.ewald_eta * self.ewald_eta;
        let c = [(x[0] / q[0]).round() as i64, (x[1] / q[1]).round() as i64];
        let l = self.real_cutoff as i64;
        let mut sum = 0.0;
        for z0 in c[0] - l..=c[0] + l {
            let d0 = x[0] - q[0] * z0 as f64;
            for z1 in c[1] - l..=c[1] + l {
                if skip_origin && z0 == 0 && z1 == 0 {
                    continue;
                }
                let d1 = x[1] - q[1] * z1 as f64;
                let u = eta2 * (d0 * d0 + d1 * d1);
                if u < SCREEN_CUTOFF {
                    sum += e1(u);
                }
            }
        }
        -sum / (4.0 * PI)
    }

    fn real_grad(&self, x: Point, skip_origin: bool) -> Point {
        let q = self.cell.q_diag;
        let eta2 = self.ewald_eta * self.ewald_eta;
        let c = [(x[0] / q[0]).round() as i64, (x[1] / q[1]).round() as i64];
        let l = self.real_cutoff as i64;
        let mut g = [0.0, 0.0];
        for z0 in c[0] - l..=c[0] + l {
            let d0 = x[0] - q[0] * z0 as f64;
            for z1 in c[1] - l..=c[1] + l {
                if skip_origin && z0 == 0 && z1 == 0 {
                    continue;
                }
                let d1 = x[1] - q[1] * z1 as f64;
                let r2 = d0 * d0 + d1 * d1;
                let u = eta2 * r2;
                if u < SCREEN_CUTOFF {
                    let f = (-u).exp() / r2;
                    g[0] += f * d0;
                    g[1] += f * d1;
                }
            }
        }
        [g[0] / (2.0 * PI), g[1] / (2.0 * PI)]
    }

    // exp(i k.x) = a^m1 b^m2, accumulated over the half plane.
    fn recip_terms(&self, x: Point, mut f: impl FnMut(usize, f64, f64)) {
        let kk = self.recip_cutoff;
        let width = 2 * kk + 1;
        let q = self.cell.q_diag;
        let (sa, ca) = (2.0 * PI * x[0] / q[0]).sin_cos();
        let (sb, cb) = (2.0 * PI * x[1] / q[1]).sin_cos();
        let mut bpow = vec![(0.0, 0.0); width];
        bpow[kk] = (1.0, 0.0);
        for m in 1..=kk {
            let (re, im) = bpow[kk + m - 1];
            bpow[kk + m] = (re * cb - im * sb, re * sb + im * cb);
            bpow[kk - m] = (bpow[kk + m].0, -bpow[kk + m].1);
        }
        let mut apow = (1.0, 0.0);
        for m1 in 0..=kk {
            let row = m1 * width;
            for (j, &(br, bi)) in bpow.iter().enumerate() {
                let idx = row + j;
                let coef = self.recip_coef[idx];
                if coef == 0.0 {
                    continue;
                }
                let re = apow.0 * br - apow.1 * bi;
                let im = apow.0 * bi + apow.1 * br;
                f(idx, coef * re, coef * im);
            }
            apow = (apow.0 * ca - apow.1 * sa, apow.0 * sa + apow.1 * ca);
        }
    }

    fn recip_value(&self, x: Point) -> f64 {
        let mut s = 0.0;
        self.recip_terms(x, |_, c, _| s += c);
        -s
    }

    fn recip_grad(&self, x: Point) -> Point {
        let mut g = [0.0, 0.0];
        self.recip_terms(x, |idx, _, s| {
            let k = self.kvec[idx];
            g[0] += s * k[0];
            g[1] += s * k[1];
        });
        g
    }
}

/// Residual of the periodic Gauss identity
/// `int_{dOmega} d/dnu(x) S_q(y - x) dsigma_x = 1/2 - |Omega|/|Q|` over boundary nodes `y`.
///
/// `geometry` must already be placed in cell coordinates.
pub fn gauss_periodic_residual(geometry: &BoundaryGeometry, ev: &GreensEvaluator) -> Result<f64> {
    Ok(gauss_periodic_columns(geometry, ev, 0.0)?
        .into_iter()
        .fold(0.0, |m, r: f64| m.max(r.abs())))
}

/// Signed per-node residuals of the periodic Gauss identity. `diag_perturbation` is
/// added to the curvature term of the diagonal (fault injection for validation runs).
pub fn gauss_periodic_columns(
    geometry: &BoundaryGeometry,
    ev: &GreensEvaluator,
    diag_perturbation: f64,
) -> Result<Vec<f64>> {
    let n = geometry.num_nodes;
    let expected = 0.5 - geometry.enclosed_measure / ev.cell.measure;
    let mut w = crate::potentials::assemble_w(geometry);
    for i in 0..n {
        w.matrix[(i, i)] += diag_perturbation * geometry.weights[i];
    }
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let y = geometry.nodes[j];
        let mut s = 0.0;
        for i in 0..n {
            let d = crate::geometry::sub(geometry.nodes[i], y);
            let dr = if i == j { [0.0, 0.0] } else { ev.grad_rq(d) };
            s += geometry.weights[i] * (w.matrix[(i, j)] / geometry.weights[j] + dot(dr, geometry.normals[i]));
        }
        if !s.is_finite() {
            return Err(PercondError::Numerical("non-finite Gauss quadrature".into()));
        }
        out.push(s - expected);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn e1_reference_values() {
        assert_abs_diff_eq!(e1(0.5), 0.559_773_594_776_160_8, epsilon = 1e-15);
        assert_abs_diff_eq!(e1(1.0), 0.219_383_934_395_520_27, epsilon = 1e-15);
        assert!((e1(5.0) / 0.001_148_295_591_275_325_6 - 1.0).abs() < 1e-13);
        assert!((e1(10.0) / 4.156_968_929_685_324e-6 - 1.0).abs() < 1e-13);
        assert!((e1(1e-3) - 6.331_539_364_136_149).abs() < 1e-13);
    }

    #[test]
    fn ein_is_continuous_at_switch() {
        let a = ein(1.0 - 1e-12);
        let b = ein(1.0 + 1e-12);
        // Slope of Ein at 1 is 1 - 1/e.
        let expected = 2e-12 * (1.0 - (-1.0f64).exp());
        assert!((b - a - expected).abs() < 1e-14);
    }

    #[test]
    fn free_space_kernel() {
        assert_abs_diff_eq!(eval_sn([1.0, 0.0]).unwrap(), 0.0, epsilon = 1e-16);
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(eval_sn([0.0, e]).unwrap(), 1.0 / (2.0 * PI), epsilon = 1e-15);
        let x = [0.3, -0.7];
        let a = grad_sn(x).unwrap();
        let b = grad_sn([-0.3, 0.7]).unwrap();
        assert_abs_diff_eq!(a[0] + b[0], 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(a[1] + b[1], 0.0, epsilon = 1e-16);
        assert!(eval_sn([0.0, 0.0]).is_err());
        assert!(grad_sn([0.0, 0.0]).is_err());
    }

    #[test]
    fn periodicity_and_symmetry() {
        let ev = GreensEvaluator::new(PeriodicCell::new(1.0, 1.5).unwrap());
        for x in [[0.1, 0.2], [0.37, -0.61], [0.49, 0.74]] {
            let v = ev.eval_sqn(x).unwrap();
            assert_abs_diff_eq!(v, ev.eval_sqn([x[0] + 1.0, x[1]]).unwrap(), epsilon = 1e-12);
            assert_abs_diff_eq!(v, ev.eval_sqn([x[0], x[1] - 1.5]).unwrap(), epsilon = 1e-12);
            assert_abs_diff_eq!(v, ev.eval_sqn([-x[0], -x[1]]).unwrap(), epsilon = 1e-13);
        }
    }

    #[test]
    fn lattice_points_rejected() {
        let ev = GreensEvaluator::new(PeriodicCell::unit());
        assert!(ev.eval_sqn([1.0, 2.0]).is_err());
        assert!(ev.grad_sqn([0.0, 0.0]).is_err());
        assert!(ev.eval_rqn([1.0, 0.0]).is_err());
        assert!(ev.eval_rqn([0.0, 0.0]).is_ok());
    }

    #[test]
    fn regular_part_identity() {
        let ev = GreensEvaluator::new(PeriodicCell::unit());
        for x in [[1e-3, 0.0], [0.05, 0.02], [0.2, -0.3], [0.0, 0.39]] {
            let d = ev.eval_sqn(x).unwrap() - eval_sn(x).unwrap() - ev.eval_rqn(x).unwrap();
            assert!(d.abs() < 1e-12, "{x:?}: {d}");
        }
        let g0 = ev.grad_rqn([0.0, 0.0]).unwrap();
        assert!(g0[0].abs() < 1e-14 && g0[1].abs() < 1e-14);
    }

    #[test]
    fn regular_part_smooth_at_origin() {
        let ev = GreensEvaluator::new(PeriodicCell::unit());
        let h = 1e-5;
        for x in [[0.0, 0.0], [1e-6, -2e-6], [0.01, 0.0]] {
            let g = ev.grad_rqn(x).unwrap();
            for k in 0..2 {
                let mut a = x;
                let mut b = x;
                a[k] += h;
                b[k] -= h;
                let fd = (ev.rq(a) - ev.rq(b)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-6);
            }
        }
        // Square lattice: R_q(x) = R_q(0) - |x|^2/(4|Q|) + O(|x|^4).
        let r0 = ev.rq([0.0, 0.0]);
        let r1 = ev.rq([1e-3, 0.0]);
        assert!(((r1 - r0) / 1e-6 + 0.25).abs() < 1e-4);
    }

    #[test]
    fn eta_independence() {
        let cell = PeriodicCell::new(1.0, 1.3).unwrap();
        let base = GreensEvaluator::new(cell);
        let eta = base.ewald_eta;
        for f in [0.5, 2.0] {
            let other = GreensEvaluator::with_params(cell, Some(f * eta), 1e-13).unwrap();
            for x in [[0.1, 0.2], [0.45, -0.6], [0.01, 0.003]] {
                assert!((base.sq(x) - other.sq(x)).abs() < 1e-12);
                let (a, b) = (base.grad_sq(x), other.grad_sq(x));
                assert!((a[0] - b[0]).abs() < 1e-11 && (a[1] - b[1]).abs() < 1e-11);
                assert!((base.rq(x) - other.rq(x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_cell_mean() {
        // Midpoint rule on a staggered grid avoids the lattice point; the log
        // singularity limits accuracy to about h^2 log h.
        let ev = GreensEvaluator::new(PeriodicCell::unit());
        let m = 200;
        let h = 1.0 / m as f64;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += ev.sq([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
            }
        }
        assert!((s * h * h).abs() < 1e-4);
    }
}
