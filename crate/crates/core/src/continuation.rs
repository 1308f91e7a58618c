//! Sweeps in `eps`, polynomial fits of `Lambda[eps, eps/rho(eps)]` and convergence
//! orders of the remainder.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effective::{lambda_eff, EffectiveResult, Mat2};
use crate::error::{PercondError, Result};
use crate::geometry::Point;
use crate::transmission::{RhoLaw, TransmissionSolver};

/// Largest Vandermonde condition number accepted by [`fit_series`].
pub const MAX_FIT_CONDITION: f64 = 1e12;

/// Remainders below this are treated as quadrature noise.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub eps: f64,
    pub eps_prime: Option<f64>,
    pub result: Option<EffectiveResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    /// Strictly decreasing in `eps`.
    pub entries: Vec<SweepEntry>,
    pub rho_law: RhoLaw,
    pub lambda_minus: f64,
    pub fingerprint: String,
}

impl SweepRecord {
    /// Successful entries in sweep order.
    pub fn results(&self) -> impl Iterator<Item = &EffectiveResult> {
        self.entries.iter().filter_map(|e| e.result.as_ref())
    }
}

/// `0.2 * 2^(-k/2)` for `k = 0..8`.
pub fn default_grid() -> Vec<f64> {
    (0..8).map(|k| 0.2 * 2f64.powf(-(k as f64) / 2.0)).collect()
}

/// Hash of the shape, discretization, cell and data of a solver.
pub fn fingerprint(solver: &TransmissionSolver) -> String {
    let mut h = DefaultHasher::new();
    let g = &solver.geometry;
    format!("{:?}", g.shape).hash(&mut h);
    g.num_nodes.hash(&mut h);
    for v in g.offset.iter().chain(&solver.cell().q_diag) {
        v.to_bits().hash(&mut h);
    }
    g.scale.to_bits().hash(&mut h);
    solver.evaluator.tolerance.to_bits().hash(&mut h);
    let data = serde_json::to_string(&solver.data).unwrap_or_default();
    data.hash(&mut h);
    format!("{:016x}", h.finish())
}

/// One effective-conductivity solve per grid value. Failures are recorded in
/// their entry and do not stop the sweep.
pub fn sweep(solver: &TransmissionSolver, p: Point, grid: &[f64]) -> Result<SweepRecord> {
    if grid.is_empty() {
        return Err(PercondError::InvalidData("eps grid is empty".into()));
    }
    if grid.iter().any(|e| !(*e > 0.0)) {
        return Err(PercondError::InvalidData("eps grid values must be positive".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(PercondError::InvalidData("eps grid must be strictly decreasing".into()));
    }
    let entries = grid
        .par_iter()
        .map(|&eps| {
            let eps_prime = solver.data.rho_law.eps_prime(eps).ok();
            match lambda_eff(solver, p, eps) {
                Ok(r) => SweepEntry { eps, eps_prime: Some(r.eps_prime), result: Some(r), error: None },
                Err(e) => SweepEntry { eps, eps_prime, result: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    Ok(SweepRecord {
        entries,
        rho_law: solver.data.rho_law.clone(),
        lambda_minus: solver.data.lambda_minus,
        fingerprint: fingerprint(solver),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesFit {
    /// `(k, j)`, zero based.
    pub entry: (usize, usize),
    pub degree: usize,
    /// Coefficients of `Lambda_kj` as a polynomial in `eps`, constant first.
    pub coefficients: Vec<f64>,
    /// The same in the variable `eps / eps_scale`.
    pub scaled_coefficients: Vec<f64>,
    pub eps_scale: f64,
    /// Euclidean norm of the fit residual.
    pub residual: f64,
    /// Change of the intercept when the degree is lowered by one; absent for degree 0.
    pub intercept_error: Option<f64>,
    pub condition: f64,
    pub eps_range: (f64, f64),
}

impl SeriesFit {
    /// Evaluates the fit; refuses values outside the sampled range.
    pub fn eval(&self, eps: f64) -> Result<f64> {
        let (lo, hi) = self.eps_range;
        if eps < lo || eps > hi {
            return Err(PercondError::Fit(format!("eps = {eps} lies outside the fitted range [{lo}, {hi}]")));
        }
        let x = eps / self.eps_scale;
        Ok(self.scaled_coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c))
    }
}

/// Least-squares polynomial fit of `Lambda_kj[eps, eps/rho(eps)]` in `eps`.
pub fn fit_series(record: &SweepRecord, entry: (usize, usize), degree: usize) -> Result<SeriesFit> {
    if !record.rho_law.is_analytic_in_eps() {
        return Err(PercondError::Fit(
            "eps/rho(eps) is not known to be analytic at 0 for this resistivity law".into(),
        ));
    }
    let (k, j) = entry;
    if k > 1 || j > 1 {
        return Err(PercondError::InvalidData(format!("entry ({k}, {j}) out of range")));
    }
    let pts: Vec<(f64, f64)> = record.results().map(|r| (r.eps, r.lambda[k][j])).collect();
    if pts.len() < degree + 2 {
        return Err(PercondError::Fit(format!(
            "degree {degree} needs at least {} successful samples, have {}",
            degree + 2,
            pts.len()
        )));
    }
    let eps_scale = pts.iter().map(|p| p.0).fold(0.0, f64::max);
    let eps_min = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let (c, residual, condition) = least_squares(&pts, degree, eps_scale)?;
    // The intercept is an extrapolation; its change under one degree less is a
    // conservative estimate of its error.
    let intercept_error = match degree {
        0 => None,
        d => Some((least_squares(&pts, d - 1, eps_scale)?.0[0] - c[0]).abs()),
    };
    let coefficients = c.iter().enumerate().map(|(i, v)| v / eps_scale.powi(i as i32)).collect();
    Ok(SeriesFit {
        entry,
        degree,
        coefficients,
        scaled_coefficients: c,
        eps_scale,
        residual,
        intercept_error,
        condition,
        eps_range: (eps_min, eps_scale),
    })
}

/// Scaled coefficients, residual norm and condition number of the fit in `eps / eps_scale`.
fn least_squares(pts: &[(f64, f64)], degree: usize, eps_scale: f64) -> Result<(Vec<f64>, f64, f64)> {
    let a = DMatrix::from_fn(pts.len(), degree + 1, |r, c| (pts[r].0 / eps_scale).powi(c as i32));
    let y = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > MAX_FIT_CONDITION {
        return Err(PercondError::Fit(format!(
            "Vandermonde matrix is ill-conditioned ({condition:.3e}); use a wider eps grid or a lower degree"
        )));
    }
    let c = svd.solve(&y, 0.0).map_err(|e| PercondError::Fit(e.to_string()))?;
    let residual = (&a * &c - &y).norm();
    Ok((c.iter().copied().collect(), residual, condition))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderStatus {
    Fitted,
    /// Too few remainders above the noise floor.
    Saturated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub entry: (usize, usize),
    pub slope: Option<f64>,
    pub status: OrderStatus,
    pub points_used: usize,
}

/// Log-log slope of `|lambda_eff - lambda- delta - eps^2 Lambda0|` against `eps`
/// for every entry.
pub fn order_estimate(record: &SweepRecord, reference: &Mat2) -> Result<Vec<OrderEstimate>> {
    order_estimate_with_floor(record, reference, NOISE_FLOOR)
}

pub fn order_estimate_with_floor(record: &SweepRecord, reference: &Mat2, floor: f64) -> Result<Vec<OrderEstimate>> {
    let results: Vec<&EffectiveResult> = record.results().collect();
    if results.len() < 3 {
        return Err(PercondError::InvalidData(format!(
            "order estimate needs at least 3 successful samples, have {}",
            results.len()
        )));
    }
    let lo = results.iter().map(|r| r.eps).fold(f64::INFINITY, f64::min);
    let hi = results.iter().map(|r| r.eps).fold(0.0, f64::max);
    if hi < 2.0 * lo {
        return Err(PercondError::InvalidData("order estimate needs an eps range spanning a factor of 2".into()));
    }
    let mut out = Vec::with_capacity(4);
    for k in 0..2 {
        for j in 0..2 {
            let delta = if k == j { record.lambda_minus } else { 0.0 };
            let pts: Vec<(f64, f64)> = results
                .iter()
                .map(|r| (r.eps, (r.lambda_eff[k][j] - delta - r.eps * r.eps * reference[k][j]).abs()))
                .filter(|&(_, rem)| rem > floor)
                .map(|(e, rem)| (e.ln(), rem.ln()))
                .collect();
            let span = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max)
                - pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            if pts.len() < 3 || span < 2f64.ln() {
                out.push(OrderEstimate { entry: (k, j), slope: None, status: OrderStatus::Saturated, points_used: pts.len() });
                continue;
            }
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            out.push(OrderEstimate {
                entry: (k, j),
                slope: Some(sxy / sxx),
                status: OrderStatus::Fitted,
                points_used: pts.len(),
            });
        }
    }
    Ok(out)
}
