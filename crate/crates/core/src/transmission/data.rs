use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{PercondError, Result};
use crate::geometry::BoundaryGeometry;

/// Interfacial resistivity as a function of the scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum RhoLaw {
    /// `rho(eps) = c eps^a` with `a <= 1`.
    Power { c: f64, a: f64 },
    /// Sampled values, linearly interpolated in `eps`, with the limit of `eps / rho` given.
    Table { eps: Vec<f64>, rho: Vec<f64>, r_star: f64 },
}

impl RhoLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            RhoLaw::Power { c, a } => {
                if !(*c > 0.0) || !c.is_finite() {
                    return Err(PercondError::InvalidData(format!("rho law needs c > 0, got {c}")));
                }
                if !(*a <= 1.0) || !a.is_finite() {
                    return Err(PercondError::InvalidData(format!(
                        "rho law exponent must satisfy a <= 1 so that eps/rho(eps) has a finite limit, got {a}"
                    )));
                }
            }
            RhoLaw::Table { eps, rho, r_star } => {
                if eps.len() < 2 || eps.len() != rho.len() {
                    return Err(PercondError::InvalidData(
                        "rho table needs at least two (eps, rho) pairs of equal length".into(),
                    ));
                }
                if eps.windows(2).any(|w| !(w[1] > w[0])) || !(eps[0] > 0.0) {
                    return Err(PercondError::InvalidData(
                        "rho table eps values must be positive and strictly increasing".into(),
                    ));
                }
                if rho.iter().any(|r| !(*r > 0.0)) {
                    return Err(PercondError::InvalidData("rho table values must be positive".into()));
                }
                if !(*r_star >= 0.0) || !r_star.is_finite() {
                    return Err(PercondError::InvalidData(format!(
                        "r_star must be finite and non-negative, got {r_star}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn rho(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(PercondError::InvalidData(format!("rho(eps) needs eps > 0, got {eps}")));
        }
        let r = match self {
            RhoLaw::Power { c, a } => c * eps.powf(*a),
            RhoLaw::Table { eps: xs, rho, .. } => {
                let last = xs.len() - 1;
                if eps < xs[0] || eps > xs[last] {
                    return Err(PercondError::InvalidData(format!(
                        "eps = {eps} outside the rho table range [{}, {}]",
                        xs[0], xs[last]
                    )));
                }
                let k = xs.partition_point(|&x| x <= eps).clamp(1, last);
                let s = (eps - xs[k - 1]) / (xs[k] - xs[k - 1]);
                rho[k - 1] + s * (rho[k] - rho[k - 1])
            }
        };
        if !(r > 0.0) || !r.is_finite() {
            return Err(PercondError::InvalidData(format!("rho({eps}) = {r} is not positive")));
        }
        Ok(r)
    }

    /// `lim eps/rho(eps)` as `eps -> 0+`.
    pub fn r_star(&self) -> f64 {
        match self {
            RhoLaw::Power { c, a } => {
                if *a == 1.0 {
                    1.0 / c
                } else {
                    0.0
                }
            }
            RhoLaw::Table { r_star, .. } => *r_star,
        }
    }

    /// `eps / rho(eps)`.
    pub fn eps_prime(&self, eps: f64) -> Result<f64> {
        Ok(eps / self.rho(eps)?)
    }

    /// True when `eps / rho(eps) = eps^(1-a)/c` is a polynomial in `eps`.
    pub fn is_analytic_in_eps(&self) -> bool {
        match self {
            RhoLaw::Power { a, .. } => {
                let m = 1.0 - a;
                m >= 0.0 && m.fract() == 0.0
            }
            RhoLaw::Table { .. } => false,
        }
    }
}

/// `c0 + sum_m cos[m-1] cos(m t) + sin[m-1] sin(m t)` in the boundary parameter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigPolynomial {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl TrigPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.cos.iter().all(|c| *c == 0.0) && self.sin.iter().all(|c| *c == 0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut v = self.constant;
        for (m, c) in self.cos.iter().enumerate() {
            v += c * ((m + 1) as f64 * t).cos();
        }
        for (m, s) in self.sin.iter().enumerate() {
            v += s * ((m + 1) as f64 * t).sin();
        }
        v
    }

    pub fn degree(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    /// Values at the nodes of `geometry`.
    pub fn sample(&self, geometry: &BoundaryGeometry) -> Vec<f64> {
        geometry.params.iter().map(|&t| self.eval(t)).collect()
    }
}

/// Materials, interface data and resistivity law of the transmission problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemData {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub f: TrigPolynomial,
    pub g: TrigPolynomial,
    pub rho_law: RhoLaw,
    pub r_star: f64,
}

impl ProblemData {
    pub fn new(
        lambda_plus: f64,
        lambda_minus: f64,
        f: TrigPolynomial,
        g: TrigPolynomial,
        rho_law: RhoLaw,
    ) -> Result<Self> {
        if !(lambda_plus > 0.0 && lambda_minus > 0.0) || !lambda_plus.is_finite() || !lambda_minus.is_finite()
        {
            return Err(PercondError::InvalidData(format!(
                "conductivities must be positive, got ({lambda_plus}, {lambda_minus})"
            )));
        }
        rho_law.validate()?;
        let r_star = rho_law.r_star();
        Ok(Self { lambda_plus, lambda_minus, f, g, rho_law, r_star })
    }

    /// Homogeneous interface data (`f = g = 0`).
    pub fn homogeneous(lambda_plus: f64, lambda_minus: f64, rho_law: RhoLaw) -> Result<Self> {
        Self::new(lambda_plus, lambda_minus, TrigPolynomial::zero(), TrigPolynomial::zero(), rho_law)
    }

    /// Checks that `f` integrates to zero over the boundary.
    pub fn validate_on(&self, geometry: &BoundaryGeometry) -> Result<()> {
        // The nodal quadrature aliases high harmonics of the speed against f, so the
        // zero-integral condition is checked on a finer resampling.
        let fine = geometry.resample(8 * geometry.num_nodes)?;
        let vals = self.f.sample(&fine);
        let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let integral = fine.integrate(&vals);
        if scale > 0.0 && integral.abs() > 1e-10 * scale * fine.perimeter {
            return Err(PercondError::InvalidData(format!(
                "flux jump data f must have zero boundary integral, got {integral:e}"
            )));
        }
        if 2 * self.f.degree().max(self.g.degree()) >= geometry.num_nodes {
            return Err(PercondError::InvalidData(format!(
                "boundary data degree {} is not resolved by N = {}",
                self.f.degree().max(self.g.degree()),
                geometry.num_nodes
            )));
        }
        Ok(())
    }

    /// Power law `rho(eps) = eps`, the case `r* = 1`.
    pub fn rho_linear() -> RhoLaw {
        RhoLaw::Power { c: 1.0, a: 1.0 }
    }

    /// Constant resistivity `rho = c`, the case `r* = 0`.
    pub fn rho_constant(c: f64) -> RhoLaw {
        RhoLaw::Power { c, a: 0.0 }
    }
}

/// Two-phase disk benchmark: the limiting problem on the unit disk for `f = g = 0`
/// has solution `u+ = A t_j`, `u- = B t_j / |t|^2` with
/// `-lm B - lp A = lp - lm` and `lp A + r (A - B) = -lp`.
pub fn disk_dipole_coefficients(lambda_plus: f64, lambda_minus: f64, r_star: f64) -> (f64, f64) {
    // Cramer's rule on [[-lp, -lm], [lp + r, -r]] (A, B) = (lp - lm, -lp).
    let (a11, a12, b1) = (-lambda_plus, -lambda_minus, lambda_plus - lambda_minus);
    let (a21, a22, b2) = (lambda_plus + r_star, -r_star, -lambda_plus);
    let det = a11 * a22 - a12 * a21;
    ((b1 * a22 - a12 * b2) / det, (a11 * b2 - b1 * a21) / det)
}

/// `Lambda_jj[0, r*]` for the unit disk in a cell of measure `cell_measure`.
pub fn disk_lambda_limit(lambda_plus: f64, lambda_minus: f64, r_star: f64, cell_measure: f64) -> f64 {
    let (a, b) = disk_dipole_coefficients(lambda_plus, lambda_minus, r_star);
    PI * (lambda_plus * a - lambda_minus * b + lambda_plus - lambda_minus) / cell_measure
}
