use super::solver::{EpsSolution, LimitingSolution, PeriodicDirectSolution, TransmissionSolver};
use crate::error::{PercondError, Result};
use crate::geometry::{sub, BoundaryGeometry, Point};
use crate::greens::GreensEvaluator;
use crate::potentials::{FieldStatus, FieldValue, Kernel, LayerPotential, DEFAULT_UPSAMPLE};

fn shifted(mut fv: FieldValue, shift: f64, j: usize) -> FieldValue {
    fv.value += shift;
    fv.gradient[j] += 1.0;
    fv
}

/// Interior and exterior fields of the finite-eps problem in cell coordinates.
pub struct EpsFields<'a> {
    sol: &'a EpsSolution,
    ev: &'a GreensEvaluator,
    inner: LayerPotential<'a>,
    outer: LayerPotential<'a>,
    shift_plus: f64,
    shift_minus: f64,
}

impl<'a> EpsFields<'a> {
    /// `u+` at `x`; meaningful inside `p + eps Omega` (and its periodic copies).
    pub fn u_plus(&self, x: Point) -> FieldValue {
        shifted(self.inner.eval(x), self.shift_plus + x[self.sol.j], self.sol.j)
    }

    /// `u-` at `x`; meaningful outside the periodic inclusions.
    pub fn u_minus(&self, x: Point) -> FieldValue {
        shifted(self.outer.eval(x), self.shift_minus + x[self.sol.j], self.sol.j)
    }

    /// Whichever of `u+`, `u-` applies at `x`.
    pub fn u(&self, x: Point) -> FieldValue {
        if self.inside(x) {
            self.u_plus(x)
        } else {
            self.u_minus(x)
        }
    }

    pub fn inside(&self, x: Point) -> bool {
        let xl = self.ev.cell.wrap_near(x, self.sol.p);
        self.sol.scaled.encloses(xl)
    }

    pub fn solution(&self) -> &EpsSolution {
        self.sol
    }
}

/// Limiting fields `u~+` inside `Omega` and `u~-` outside, in model coordinates.
pub struct LimitingFields<'a> {
    sol: &'a LimitingSolution,
    inner: LayerPotential<'a>,
    outer: LayerPotential<'a>,
}

impl<'a> LimitingFields<'a> {
    pub fn u_plus(&self, t: Point) -> FieldValue {
        let mut fv = self.inner.eval(t);
        fv.value -= self.sol.mean_v_i;
        fv
    }

    pub fn u_minus(&self, t: Point) -> FieldValue {
        let mut fv = self.outer.eval(t);
        fv.value -= self.sol.mean_v_o;
        fv
    }
}

/// The rescaled fields `U+` on `Omega` and `V-` on the annulus
/// `{t : |t| < annulus_radius} \ cl Omega`.
pub struct RescaledFields<'a> {
    sol: &'a EpsSolution,
    geometry: &'a BoundaryGeometry,
    ev: &'a GreensEvaluator,
    inner: LayerPotential<'a>,
    outer: LayerPotential<'a>,
    t_mean: f64,
    pub u_plus_nodes: Vec<f64>,
    pub v_minus_nodes: Vec<f64>,
    pub annulus_radius: f64,
}

impl<'a> RescaledFields<'a> {
    fn periodic_part(&self, theta: &[f64], t: Point) -> f64 {
        let g = self.geometry;
        let e = self.sol.eps;
        (0..g.num_nodes)
            .map(|k| {
                let d = sub(t, g.nodes[k]);
                g.weights[k] * theta[k] * self.ev.rq([e * d[0], e * d[1]])
            })
            .sum()
    }

    fn check_reach(&self, t: Point) -> Result<()> {
        let r = t[0].hypot(t[1]);
        if r >= self.annulus_radius {
            return Err(PercondError::InvalidData(format!(
                "point at radius {r} lies outside the annulus of radius {}",
                self.annulus_radius
            )));
        }
        Ok(())
    }

    pub fn u_plus(&self, t: Point) -> Result<f64> {
        if !self.geometry.encloses(t) {
            return Err(PercondError::InvalidData("U+ is evaluated inside the model inclusion only".into()));
        }
        let th = &self.sol.pair.theta_i.values;
        let v = self.inner.value(t) + self.periodic_part(th, t);
        Ok(v - self.sol.mean_vr_i + t[self.sol.j] - self.t_mean)
    }

    pub fn v_minus(&self, t: Point) -> Result<f64> {
        if self.geometry.encloses(t) {
            return Err(PercondError::InvalidData("V- is evaluated outside the model inclusion only".into()));
        }
        self.check_reach(t)?;
        let th = &self.sol.pair.theta_o.values;
        Ok(self.outer.value(t) + self.periodic_part(th, t) + t[self.sol.j])
    }
}

/// Fields of the scaled-domain periodic solution.
pub struct PeriodicDirectFields<'a> {
    sol: &'a PeriodicDirectSolution,
    p: Point,
    ev: &'a GreensEvaluator,
    inner: LayerPotential<'a>,
    outer: LayerPotential<'a>,
    shift_plus: f64,
    shift_minus: f64,
}

impl<'a> PeriodicDirectFields<'a> {
    pub fn u_plus(&self, x: Point) -> FieldValue {
        shifted(self.inner.eval(x), self.shift_plus + x[self.sol.j], self.sol.j)
    }

    pub fn u_minus(&self, x: Point) -> FieldValue {
        shifted(self.outer.eval(x), self.shift_minus + x[self.sol.j], self.sol.j)
    }

    pub fn u(&self, x: Point) -> FieldValue {
        let xl = self.ev.cell.wrap_near(x, self.p);
        if self.sol.scaled.encloses(xl) {
            self.u_plus(x)
        } else {
            self.u_minus(x)
        }
    }
}

/// Result of comparing `u-` with its far-field dipole expansion.
#[derive(Debug, Clone)]
pub struct FarFieldReport {
    pub moment: Point,
    /// `-int t theta~o`, which must agree with `moment`.
    pub moment_check: Point,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

impl TransmissionSolver {
    pub fn eps_fields<'a>(&'a self, sol: &'a EpsSolution) -> EpsFields<'a> {
        self.eps_fields_upsampled(sol, DEFAULT_UPSAMPLE)
    }

    /// As [`Self::eps_fields`] with a chosen upsampling factor for near-boundary targets.
    pub fn eps_fields_upsampled<'a>(&'a self, sol: &'a EpsSolution, upsample: usize) -> EpsFields<'a> {
        let ev = &self.evaluator;
        let shift = -sol.eps * sol.mean_vr_i - sol.p[sol.j] - sol.eps * self.t_mean(sol.j);
        let shift_o = -sol.eps * sol.mean_vr_o - sol.p[sol.j] - sol.eps * self.t_mean(sol.j)
            - sol.rho.map_or(0.0, |r| r * self.g_mean_value());
        EpsFields {
            sol,
            ev,
            inner: LayerPotential::with_upsample(&sol.scaled, sol.pair.theta_i.values.clone(), Kernel::Periodic(ev), upsample),
            outer: LayerPotential::with_upsample(&sol.scaled, sol.pair.theta_o.values.clone(), Kernel::Periodic(ev), upsample),
            shift_plus: shift,
            shift_minus: shift_o,
        }
    }

    pub fn limiting_fields<'a>(&'a self, sol: &'a LimitingSolution) -> LimitingFields<'a> {
        LimitingFields {
            sol,
            inner: LayerPotential::new(&self.geometry, sol.pair.theta_i.values.clone(), Kernel::Free),
            outer: LayerPotential::new(&self.geometry, sol.pair.theta_o.values.clone(), Kernel::Free),
        }
    }

    pub fn periodic_direct_fields<'a>(&'a self, sol: &'a PeriodicDirectSolution, p: Point) -> PeriodicDirectFields<'a> {
        let ev = &self.evaluator;
        let perim = sol.scaled.perimeter;
        let shift_plus = -sol.mean_vq_i + sol.c / perim;
        let shift_minus = -sol.mean_vq_o + sol.c / perim - sol.mean_gamma / sol.gamma_sharp;
        PeriodicDirectFields {
            sol,
            p,
            ev,
            inner: LayerPotential::new(&sol.scaled, sol.mu_i.clone(), Kernel::Periodic(ev)),
            outer: LayerPotential::new(&sol.scaled, sol.mu_o.clone(), Kernel::Periodic(ev)),
            shift_plus,
            shift_minus,
        }
    }

    /// `U+` and `V-` for a finite-eps solution. The annulus radius is
    /// `min(2 diam, room / eps)` with `room` the distance from `p` to the cell
    /// boundary; it must clear the inclusion by a margin.
    pub fn rescaled_fields<'a>(&'a self, sol: &'a EpsSolution) -> Result<RescaledFields<'a>> {
        let g = &self.geometry;
        let q = self.cell().q_diag;
        let room = sol.p[0].min(q[0] - sol.p[0]).min(sol.p[1]).min(q[1] - sol.p[1]);
        let annulus_radius = (2.0 * g.diameter()).min(room / sol.eps);
        let reach = g.max_radius();
        if annulus_radius < 1.25 * reach {
            return Err(PercondError::InclusionTooLarge(format!(
                "annulus radius {annulus_radius:.4} does not clear the inclusion (max radius {reach:.4}) at eps = {}",
                sol.eps
            )));
        }
        let tj = g.coordinate(sol.j);
        let t_mean = self.t_mean(sol.j);
        let u_plus_nodes = (0..g.num_nodes).map(|i| sol.vr_i[i] - sol.mean_vr_i + tj[i] - t_mean).collect();
        let v_minus_nodes = (0..g.num_nodes).map(|i| sol.vr_o[i] + tj[i]).collect();
        Ok(RescaledFields {
            sol,
            geometry: g,
            ev: &self.evaluator,
            inner: LayerPotential::new(g, sol.pair.theta_i.values.clone(), Kernel::Free),
            outer: LayerPotential::new(g, sol.pair.theta_o.values.clone(), Kernel::Free),
            t_mean,
            u_plus_nodes,
            v_minus_nodes,
            annulus_radius,
        })
    }

    /// Compares `u-` at the probes with `x_j - p_j + rho C- + eps^2 DS_q(x - p) . m`,
    /// where `m` is the dipole moment of the limiting exterior field.
    pub fn far_field_dipole_check(
        &self,
        lim: &LimitingSolution,
        sol: &EpsSolution,
        probes: &[Point],
    ) -> Result<FarFieldReport> {
        if lim.j != sol.j {
            return Err(PercondError::InvalidData("limiting and finite-eps solutions use different directions".into()));
        }
        let rho = sol.rho.ok_or_else(|| {
            PercondError::InvalidData("far-field check needs a finite resistivity (eps' > 0)".into())
        })?;
        let g = &self.geometry;
        let ev = &self.evaluator;
        let th = &lim.pair.theta_o.values;
        let nw = self.w_block().apply(th);
        let mut moment = [0.0; 2];
        let mut moment_check = [0.0; 2];
        for k in 0..2 {
            let nu = g.normal_component(k);
            let t = g.coordinate(k);
            for i in 0..g.num_nodes {
                let w = g.weights[i];
                moment[k] += w * nu[i] * lim.u_minus_trace.values[i] - w * t[i] * (0.5 * th[i] + nw[i]);
                moment_check[k] -= w * t[i] * th[i];
            }
        }
        let keep_out = 2.0 * sol.eps * g.max_radius();
        let fields = self.eps_fields(sol);
        let mut residuals = Vec::with_capacity(probes.len());
        for &x in probes {
            let d = sub(x, sol.p);
            let dist = ev.lattice_distance(d);
            if dist <= keep_out {
                return Err(PercondError::InvalidData(format!(
                    "probe {x:?} is within {dist:.3e} of the inclusion lattice"
                )));
            }
            let fv = fields.u_minus(x);
            if fv.status != FieldStatus::Ok {
                return Err(PercondError::Numerical("far-field probe evaluation was not accurate".into()));
            }
            let gs = ev.grad_sqn(d)?;
            let e2 = sol.eps * sol.eps;
            let model = x[sol.j] - sol.p[sol.j] + rho * sol.c_minus + e2 * (gs[0] * moment[0] + gs[1] * moment[1]);
            residuals.push((fv.value - model).abs());
        }
        let max_residual = residuals.iter().copied().fold(0.0, f64::max);
        Ok(FarFieldReport { moment, moment_check, residuals, max_residual })
    }
}
