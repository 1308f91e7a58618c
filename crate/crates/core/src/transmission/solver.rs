use serde::{Deserialize, Serialize};

use super::data::ProblemData;
use super::system::{BorderedSolution, BorderedSystem};
use crate::error::{PercondError, Result};
use crate::geometry::{validate_scaled, BoundaryGeometry, PeriodicCell, Point};
use crate::greens::GreensEvaluator;
use crate::potentials::{assemble_r_blocks, assemble_v, assemble_w, Density, NystromBlock};

/// Where a density pair comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Limiting { r_star: f64 },
    FiniteEps { eps: f64, eps_prime: f64 },
}

/// Zero-mean layer densities for one direction `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPair {
    pub theta_i: Density,
    pub theta_o: Density,
    pub provenance: Provenance,
}

/// Solution of the limiting problem at `(eps, eps') = (0, r*)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitingSolution {
    pub j: usize,
    pub r_star: f64,
    pub pair: DensityPair,
    /// Boundary trace of the interior field.
    pub u_plus_trace: Density,
    /// Boundary trace of the exterior field.
    pub u_minus_trace: Density,
    /// Limit of the exterior field at infinity.
    pub l_minus: f64,
    pub multipliers: [f64; 2],
    pub mean_v_i: f64,
    pub mean_v_o: f64,
}

/// Solution of the fixed-boundary system at `(eps, eps')`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsSolution {
    pub j: usize,
    pub p: Point,
    pub eps: f64,
    pub eps_prime: f64,
    /// `None` when `eps' = 0` (no finite resistivity).
    pub rho: Option<f64>,
    pub eps0: f64,
    pub pair: DensityPair,
    pub multipliers: [f64; 2],
    /// Nodal values of `(V + R_eps) theta_i` and `(V + R_eps) theta_o`.
    pub vr_i: Vec<f64>,
    pub vr_o: Vec<f64>,
    pub mean_vr_i: f64,
    pub mean_vr_o: f64,
    pub c_minus: f64,
    /// `p + eps * dOmega` in cell coordinates.
    pub scaled: BoundaryGeometry,
}

/// Solution of the scaled-domain periodic system.
#[derive(Debug, Clone)]
pub struct PeriodicDirectSolution {
    pub j: usize,
    pub mu_i: Vec<f64>,
    pub mu_o: Vec<f64>,
    pub multipliers: [f64; 2],
    pub gamma_sharp: f64,
    pub c: f64,
    pub mean_gamma: f64,
    pub mean_vq_i: f64,
    pub mean_vq_o: f64,
    pub scaled: BoundaryGeometry,
}

/// Assembles and solves the boundary integral systems for one inclusion shape,
/// cell and set of problem data.
#[derive(Debug, Clone)]
pub struct TransmissionSolver {
    pub geometry: BoundaryGeometry,
    pub evaluator: GreensEvaluator,
    pub data: ProblemData,
    v: NystromBlock,
    w: NystromBlock,
    f_vals: Vec<f64>,
    g_vals: Vec<f64>,
    g_mean: f64,
    t_mean: [f64; 2],
}

fn check_direction(j: usize) -> Result<()> {
    if j > 1 {
        return Err(PercondError::InvalidData(format!("direction index {j} must be 0 or 1")));
    }
    Ok(())
}

impl TransmissionSolver {
    pub fn new(geometry: BoundaryGeometry, evaluator: GreensEvaluator, data: ProblemData) -> Result<Self> {
        if !geometry.contains_origin {
            return Err(PercondError::Geometry("the model inclusion must contain the origin".into()));
        }
        data.validate_on(&geometry)?;
        let v = assemble_v(&geometry)?;
        let w = assemble_w(&geometry);
        // Remove the quadrature-level mean left after validation.
        let f_vals = Density::projected(&data.f.sample(&geometry), &geometry).values;
        let g_vals = data.g.sample(&geometry);
        let g_mean = geometry.mean(&g_vals);
        let t_mean = [geometry.mean(&geometry.coordinate(0)), geometry.mean(&geometry.coordinate(1))];
        Ok(Self { geometry, evaluator, data, v, w, f_vals, g_vals, g_mean, t_mean })
    }

    pub fn cell(&self) -> &PeriodicCell {
        &self.evaluator.cell
    }

    pub fn v_block(&self) -> &NystromBlock {
        &self.v
    }

    pub fn w_block(&self) -> &NystromBlock {
        &self.w
    }

    pub fn f_values(&self) -> &[f64] {
        &self.f_vals
    }

    pub fn g_values(&self) -> &[f64] {
        &self.g_vals
    }

    pub fn g_mean_value(&self) -> f64 {
        self.g_mean
    }

    /// Boundary mean of `t_k` on the model boundary.
    pub fn t_mean(&self, k: usize) -> f64 {
        self.t_mean[k]
    }

    /// Forcing `(f + (lp - lm) nu_j, g - mean(g) - lp nu_j)`.
    pub fn forcing(&self, j: usize) -> (Vec<f64>, Vec<f64>) {
        let lp = self.data.lambda_plus;
        let lm = self.data.lambda_minus;
        let nu = self.geometry.normal_component(j);
        let b1 = (0..nu.len()).map(|i| self.f_vals[i] + (lp - lm) * nu[i]).collect();
        let b2 = (0..nu.len()).map(|i| self.g_vals[i] - self.g_mean - lp * nu[i]).collect();
        (b1, b2)
    }

    /// Bordered matrix of the non-periodic operator with coupling `gamma >= 0`.
    pub fn assemble_k(&self, gamma: f64) -> Result<BorderedSystem> {
        if !(gamma >= 0.0) {
            return Err(PercondError::InvalidData(format!("coupling must be non-negative, got {gamma}")));
        }
        Ok(BorderedSystem::assemble(
            &self.geometry.weights,
            &self.w.matrix,
            &self.v.matrix,
            self.data.lambda_plus,
            self.data.lambda_minus,
            gamma,
        ))
    }

    /// Bordered fixed-boundary system at `(eps, eps')` with its forcing, and the
    /// `R_q(eps (t - s))` block used to rebuild fields.
    pub fn assemble_m(&self, eps: f64, eps_prime: f64, j: usize) -> Result<(BorderedSystem, NystromBlock)> {
        check_direction(j)?;
        let (r, dr) = assemble_r_blocks(&self.geometry, eps, &self.evaluator)?;
        let wt = &self.w.matrix + &dr.matrix * eps;
        let vt = &self.v.matrix + &r.matrix;
        let (b1, b2) = self.forcing(j);
        let sys = BorderedSystem::assemble(
            &self.geometry.weights,
            &wt,
            &vt,
            self.data.lambda_plus,
            self.data.lambda_minus,
            eps_prime,
        )
        .with_rhs(&b1, &b2);
        Ok((sys, r))
    }

    /// 1-norm condition number of the bordered limiting matrix.
    pub fn condition_limiting(&self) -> Result<f64> {
        Ok(self.assemble_k(self.data.r_star)?.factor()?.condition())
    }

    /// 1-norm condition number of the bordered fixed-boundary matrix at `(eps, eps')`.
    pub fn condition_eps(&self, eps: f64, eps_prime: f64) -> Result<f64> {
        Ok(self.assemble_m(eps, eps_prime, 0)?.0.factor()?.condition())
    }

    /// The limiting problem at `(0, r*)`.
    pub fn solve_limiting(&self, j: usize) -> Result<LimitingSolution> {
        check_direction(j)?;
        let r_star = self.data.r_star;
        let (b1, b2) = self.forcing(j);
        let sys = self.assemble_k(r_star)?.with_rhs(&b1, &b2);
        let BorderedSolution { theta_i, theta_o, multipliers } = sys.solve()?;
        let g = &self.geometry;
        let vi = self.v.apply(&theta_i);
        let vo = self.v.apply(&theta_o);
        let mean_v_i = g.mean(&vi);
        let mean_v_o = g.mean(&vo);
        let u_plus: Vec<f64> = vi.iter().map(|v| v - mean_v_i).collect();
        let u_minus: Vec<f64> = vo.iter().map(|v| v - mean_v_o).collect();
        Ok(LimitingSolution {
            j,
            r_star,
            pair: DensityPair {
                theta_i: Density { values: theta_i, zero_mean: true },
                theta_o: Density { values: theta_o, zero_mean: true },
                provenance: Provenance::Limiting { r_star },
            },
            u_plus_trace: Density { values: u_plus, zero_mean: true },
            u_minus_trace: Density { values: u_minus, zero_mean: true },
            l_minus: -mean_v_o,
            multipliers,
            mean_v_i,
            mean_v_o,
        })
    }

    /// The problem with inclusion `p + eps Omega` and resistivity from the data's law.
    pub fn solve_eps(&self, p: Point, eps: f64, j: usize) -> Result<EpsSolution> {
        if !(eps > 0.0) {
            return Err(PercondError::InvalidData(format!("eps must be positive, got {eps}")));
        }
        let rho = self.data.rho_law.rho(eps)?;
        self.solve_scaled(p, eps, eps / rho, j)
    }

    /// The fixed-boundary system at an arbitrary `(eps, eps')` pair.
    pub fn solve_scaled(&self, p: Point, eps: f64, eps_prime: f64, j: usize) -> Result<EpsSolution> {
        check_direction(j)?;
        let inc = validate_scaled(p, eps, &self.geometry, self.cell())?;
        let (sys, r) = self.assemble_m(eps, eps_prime, j)?;
        let BorderedSolution { theta_i, theta_o, multipliers } = sys.solve()?;
        let g = &self.geometry;
        let mut vr_i = self.v.apply(&theta_i);
        let mut vr_o = self.v.apply(&theta_o);
        for (a, b) in vr_i.iter_mut().zip(r.apply(&theta_i)) {
            *a += b;
        }
        for (a, b) in vr_o.iter_mut().zip(r.apply(&theta_o)) {
            *a += b;
        }
        let mean_vr_i = g.mean(&vr_i);
        let mean_vr_o = g.mean(&vr_o);
        let c_minus = -self.g_mean - eps_prime * mean_vr_o - eps_prime * self.t_mean[j];
        let rho = if eps_prime > 0.0 { Some(eps / eps_prime) } else { None };
        Ok(EpsSolution {
            j,
            p,
            eps,
            eps_prime,
            rho,
            eps0: inc.eps0,
            pair: DensityPair {
                theta_i: Density { values: theta_i, zero_mean: true },
                theta_o: Density { values: theta_o, zero_mean: true },
                provenance: Provenance::FiniteEps { eps, eps_prime },
            },
            multipliers,
            vr_i,
            vr_o,
            mean_vr_i,
            mean_vr_o,
            c_minus,
            scaled: g.scaled(p, eps)?,
        })
    }

    /// The scaled-domain route: solves the periodic system on `p + eps dOmega`
    /// with `gamma# = 1/rho(eps)` and forcing from the unscaled periodic problem.
    pub fn solve_periodic_direct(&self, p: Point, eps: f64, j: usize) -> Result<PeriodicDirectSolution> {
        check_direction(j)?;
        validate_scaled(p, eps, &self.geometry, self.cell())?;
        let rho = self.data.rho_law.rho(eps)?;
        let scaled = self.geometry.scaled(p, eps)?;
        let lp = self.data.lambda_plus;
        let lm = self.data.lambda_minus;
        let nu = scaled.normal_component(j);
        let phi: Vec<f64> = (0..nu.len()).map(|i| self.f_vals[i] + (lp - lm) * nu[i]).collect();
        let gamma: Vec<f64> = (0..nu.len()).map(|i| self.g_vals[i] - lp * nu[i]).collect();
        let yj = scaled.coordinate(j);
        let c = -scaled.integrate(&yj);
        solve_periodic_system(scaled, &self.evaluator, lp, lm, 1.0 / rho, &phi, &gamma, c, j)
    }
}

/// Bordered periodic matrix on a boundary given in cell coordinates.
pub fn assemble_j(
    scaled: &BoundaryGeometry,
    ev: &GreensEvaluator,
    lambda_plus: f64,
    lambda_minus: f64,
    gamma_sharp: f64,
) -> Result<(BorderedSystem, nalgebra::DMatrix<f64>)> {
    if !(gamma_sharp > 0.0) {
        return Err(PercondError::InvalidData(format!("gamma# must be positive, got {gamma_sharp}")));
    }
    let v = assemble_v(scaled)?;
    let w = assemble_w(scaled);
    let (r, dr) = assemble_r_blocks(scaled, 1.0, ev)?;
    let wt = w.matrix + dr.matrix;
    let vt = v.matrix + r.matrix;
    let sys = BorderedSystem::assemble(&scaled.weights, &wt, &vt, lambda_plus, lambda_minus, gamma_sharp);
    Ok((sys, vt))
}

/// Solves the periodic system with data `(Phi, Gamma, c)` and records the constants
/// needed to rebuild `v+` and `v-`.
#[allow(clippy::too_many_arguments)]
pub fn solve_periodic_system(
    scaled: BoundaryGeometry,
    ev: &GreensEvaluator,
    lambda_plus: f64,
    lambda_minus: f64,
    gamma_sharp: f64,
    phi: &[f64],
    gamma: &[f64],
    c: f64,
    j: usize,
) -> Result<PeriodicDirectSolution> {
    let (sys, vt) = assemble_j(&scaled, ev, lambda_plus, lambda_minus, gamma_sharp)?;
    let mean_gamma = scaled.mean(gamma);
    let b2: Vec<f64> = gamma.iter().map(|g| g - mean_gamma).collect();
    let BorderedSolution { theta_i, theta_o, multipliers } = sys.with_rhs(phi, &b2).solve()?;
    let apply = |mu: &[f64]| -> Vec<f64> {
        let n = mu.len();
        (0..n).map(|r| (0..n).map(|k| vt[(r, k)] * mu[k]).sum()).collect()
    };
    let mean_vq_i = scaled.mean(&apply(&theta_i));
    let mean_vq_o = scaled.mean(&apply(&theta_o));
    Ok(PeriodicDirectSolution {
        j,
        mu_i: theta_i,
        mu_o: theta_o,
        multipliers,
        gamma_sharp,
        c,
        mean_gamma,
        mean_vq_i,
        mean_vq_o,
        scaled,
    })
}
