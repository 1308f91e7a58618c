//! The `validate` command: identities the discretization must reproduce.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use percond_core::effective::Mat2;
use percond_core::greens::gauss_periodic_columns;
use percond_core::potentials::{assemble_w, Kernel, LayerPotential};
use percond_core::transmission::{disk_dipole_coefficients, disk_lambda_limit, TransmissionSolver};
use percond_core::{lambda_limit, make_ellipse, BoundaryGeometry, GreensEvaluator, Point, ProblemData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::write_json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    GaussIdentity,
    GreenLaplacian,
    EwaldEta,
    JumpRelations,
    RouteEquivalence,
    DiskOracle,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: CheckName,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct ValidationReport {
    pub fingerprint: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub pass: bool,
    pub checks: Vec<Check>,
    /// `Lambda[0, r*]` of the configured problem.
    pub limit: Mat2,
}

/// Tolerance for a check at `n` nodes before the configured factor.
///
/// Resolution-dependent checks get looser bounds on coarse grids; the values sit
/// one to two orders of magnitude above what smooth shapes reach.
pub fn scheduled_tolerance(name: CheckName, n: usize) -> f64 {
    let tier = match n {
        0..=47 => 0,
        48..=95 => 1,
        96..=191 => 2,
        _ => 3,
    };
    match name {
        CheckName::GaussIdentity => [1e-3, 1e-6, 1e-8, 1e-8][tier],
        CheckName::JumpRelations => [1e-2, 1e-4, 1e-6, 1e-6][tier],
        CheckName::RouteEquivalence => [1e-4, 1e-7, 1e-8, 1e-8][tier],
        CheckName::DiskOracle => [1e-4, 1e-7, 1e-8, 1e-8][tier],
        CheckName::GreenLaplacian => 1e-6,
        CheckName::EwaldEta => 1e-12,
    }
}

fn check(name: CheckName, residual: f64, tolerance: f64, detail: String) -> Check {
    Check { name, residual, tolerance, pass: residual.is_finite() && residual < tolerance, detail }
}

/// Residual of the periodic Gauss identity for the shape placed at half its admissible scale.
fn gauss_check(cfg: &RunConfig, solver: &TransmissionSolver, eps0: f64, tol: f64) -> CliResult<Check> {
    let scale = 0.5 * eps0;
    let placed = solver.geometry.scaled(cfg.center(), scale).map_err(CliError::config)?;
    let cols = gauss_periodic_columns(&placed, &solver.evaluator, cfg.test_hooks.w_diagonal_perturbation)
        .map_err(CliError::numerical)?;
    let r = cols.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    Ok(check(CheckName::GaussIdentity, r, tol, format!("shape at scale {scale:.4}")))
}

/// Five-point Laplacian of the periodic Green function against `-1/|Q|`.
fn laplacian_check(ev: &GreensEvaluator, rng: &mut ChaCha8Rng, tol: f64) -> CliResult<Check> {
    let cell = ev.cell;
    let target = -1.0 / cell.measure;
    let lap = |x: Point, h: f64| -> CliResult<f64> {
        let s = |dx: f64, dy: f64| ev.eval_sqn([x[0] + dx, x[1] + dy]).map_err(CliError::numerical);
        Ok((s(h, 0.0)? + s(-h, 0.0)? + s(0.0, h)? + s(0.0, -h)? - 4.0 * s(0.0, 0.0)?) / (h * h))
    };
    let h = 4e-3 * cell.q_min();
    let mut worst = 0.0f64;
    let mut count = 0;
    while count < 20 {
        let x = [rng.gen_range(0.0..cell.q_diag[0]), rng.gen_range(0.0..cell.q_diag[1])];
        if ev.lattice_distance(x) < 0.25 * cell.q_min() {
            continue;
        }
        let l = (4.0 * lap(x, h / 2.0)? - lap(x, h)?) / 3.0;
        worst = worst.max(((l - target) / target).abs());
        count += 1;
    }
    Ok(check(CheckName::GreenLaplacian, worst, tol, "relative error at 20 points".into()))
}

/// Agreement of the Green function under two other splitting parameters.
fn eta_check(ev: &GreensEvaluator, rng: &mut ChaCha8Rng, tol: f64) -> CliResult<Check> {
    let cell = ev.cell;
    let mut worst = 0.0f64;
    for f in [0.5, 2.0] {
        let other = GreensEvaluator::with_params(cell, Some(f * ev.ewald_eta), ev.tolerance).map_err(CliError::config)?;
        for _ in 0..10 {
            let x = [rng.gen_range(0.05..0.95) * cell.q_diag[0], rng.gen_range(0.05..0.95) * cell.q_diag[1]];
            if ev.lattice_distance(x) < 0.05 * cell.q_min() {
                continue;
            }
            let a = ev.eval_sqn(x).map_err(CliError::numerical)?;
            let b = other.eval_sqn(x).map_err(CliError::numerical)?;
            worst = worst.max((a - b).abs());
        }
    }
    Ok(check(CheckName::EwaldEta, worst, tol, "eta / 2 and 2 eta".into()))
}

/// Value at zero of the interpolating polynomial through `(h, y)`.
fn extrapolate(hs: &[f64], ys: &[f64]) -> Option<f64> {
    let m = hs.len();
    let a = DMatrix::from_fn(m, m, |r, c| (hs[r] / hs[m - 1]).powi(c as i32));
    a.lu().solve(&DVector::from_column_slice(ys)).map(|s| s[0])
}

/// Off-boundary normal derivatives of a free-space single layer, extrapolated to the
/// boundary, against `-/+ mu/2 + W* mu` from the Nystrom matrix.
fn jump_check(g: &BoundaryGeometry, hook: f64, rng: &mut ChaCha8Rng, tol: f64) -> Check {
    let n = g.num_nodes;
    let deg = (n / 8).clamp(1, 8);
    let mut w = assemble_w(g);
    for i in 0..n {
        w.matrix[(i, i)] += hook * g.weights[i];
    }
    let h0 = g.max_spacing() / 8.0;
    let hs: Vec<f64> = (1..=8).map(|k| k as f64 * h0).collect();
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let ca: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sa: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mu: Vec<f64> = g
            .params
            .iter()
            .map(|t| (0..=deg).map(|m| ca[m] * (m as f64 * t).cos() + sa[m] * (m as f64 * t).sin()).sum())
            .collect();
        let wmu = w.apply(&mu);
        let lp = LayerPotential::with_upsample(g, mu.clone(), Kernel::Free, 32);
        for i in (0..n).step_by((n / 16).max(1)) {
            let (x, nu) = (g.nodes[i], g.normals[i]);
            for side in [1.0, -1.0] {
                let ys: Vec<f64> = hs
                    .iter()
                    .map(|h| {
                        let gr = lp.eval([x[0] + side * h * nu[0], x[1] + side * h * nu[1]]).gradient;
                        gr[0] * nu[0] + gr[1] * nu[1]
                    })
                    .collect();
                let expected = 0.5 * side * mu[i] + wmu[i];
                let err = extrapolate(&hs, &ys).map_or(f64::INFINITY, |l| (l - expected).abs());
                worst = worst.max(err);
            }
        }
    }
    check(CheckName::JumpRelations, worst, tol, format!("3 densities of degree {deg}"))
}

/// Fields of the fixed-boundary and scaled-domain formulations at seeded probes.
fn route_check(cfg: &RunConfig, solver: &TransmissionSolver, eps0: f64, rng: &mut ChaCha8Rng, tol: f64) -> CliResult<Check> {
    let p = cfg.center();
    let eps = 0.5 * eps0;
    let q = solver.cell().q_diag;
    let mut worst = 0.0f64;
    for j in cfg.direction_indices() {
        let m = solver.solve_eps(p, eps, j).map_err(CliError::numerical)?;
        let d = solver.solve_periodic_direct(p, eps, j).map_err(CliError::numerical)?;
        let fm = solver.eps_fields(&m);
        let fd = solver.periodic_direct_fields(&d, p);
        let mut count = 0;
        while count < 8 {
            let x = [rng.gen_range(0.0..q[0]), rng.gen_range(0.0..q[1])];
            if m.scaled.distance_to_nodes(solver.cell().wrap_near(x, p)) < 2.0 * m.scaled.max_spacing() {
                continue;
            }
            worst = worst.max((fm.u(x).value - fd.u(x).value).abs());
            count += 1;
        }
    }
    Ok(check(CheckName::RouteEquivalence, worst, tol, format!("eps = {eps:.4}, 8 probes per direction")))
}

/// Limiting traces on the unit disk against the closed-form dipole solution.
fn disk_check(cfg: &RunConfig, n: usize, tol: f64) -> CliResult<Check> {
    let data = ProblemData::homogeneous(cfg.materials.lambda_plus, cfg.materials.lambda_minus, cfg.rho_law.clone())
        .map_err(CliError::config)?;
    let disk = make_ellipse(1.0, 1.0, n).map_err(CliError::config)?;
    let s = TransmissionSolver::new(disk, cfg.evaluator()?, data).map_err(CliError::config)?;
    let (lp, lm, r) = (s.data.lambda_plus, s.data.lambda_minus, s.data.r_star);
    let (a, b) = disk_dipole_coefficients(lp, lm, r);
    let mut worst = 0.0f64;
    for j in 0..2 {
        let lim = s.solve_limiting(j).map_err(CliError::numerical)?;
        for i in 0..n {
            let t = s.geometry.nodes[i][j];
            worst = worst.max((lim.u_plus_trace.values[i] - a * t).abs());
            worst = worst.max((lim.u_minus_trace.values[i] - b * t).abs());
        }
    }
    let l = lambda_limit(&s).map_err(CliError::numerical)?;
    let expected = disk_lambda_limit(lp, lm, r, s.cell().measure);
    worst = worst.max((l[0][0] - expected).abs()).max((l[1][1] - expected).abs());
    Ok(check(
        CheckName::DiskOracle,
        worst,
        tol,
        format!("r* = {r}, (A, B) = ({a:.6}, {b:.6}), Lambda_jj = {expected:.10}"),
    ))
}

pub fn run(cfg: &RunConfig) -> CliResult<ValidationReport> {
    let solver = cfg.solver()?;
    let eps0 = cfg.eps0(&solver);
    if !(eps0 > 0.0) {
        return Err(CliError::Config("the inclusion does not fit in the cell at any scale".into()));
    }
    let n = cfg.geometry.num_nodes();
    let tol = |c: CheckName| cfg.tolerances.validation_factor * scheduled_tolerance(c, n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hook = cfg.test_hooks.w_diagonal_perturbation;
    let checks = vec![
        gauss_check(cfg, &solver, eps0, tol(CheckName::GaussIdentity))?,
        laplacian_check(&solver.evaluator, &mut rng, tol(CheckName::GreenLaplacian))?,
        eta_check(&solver.evaluator, &mut rng, tol(CheckName::EwaldEta))?,
        jump_check(&solver.geometry, hook, &mut rng, tol(CheckName::JumpRelations)),
        route_check(cfg, &solver, eps0, &mut rng, tol(CheckName::RouteEquivalence))?,
        disk_check(cfg, n, tol(CheckName::DiskOracle))?,
    ];
    let limit = lambda_limit(&solver).map_err(CliError::numerical)?;
    Ok(ValidationReport {
        fingerprint: percond_core::continuation::fingerprint(&solver),
        n,
        pass: checks.iter().all(|c| c.pass),
        checks,
        limit,
    })
}

/// Runs the suite, writes validation.json and fails with exit code 1 on any failed check.
pub fn validate(cfg: &RunConfig, out: &Path) -> CliResult<ValidationReport> {
    let report = run(cfg)?;
    write_json(&out.join("validation.json"), &report)?;
    for c in &report.checks {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        println!("{tag} {:?}: residual {:.3e} (tolerance {:.1e}) {}", c.name, c.residual, c.tolerance, c.detail);
    }
    if !report.pass {
        let failed: Vec<String> = report.checks.iter().filter(|c| !c.pass).map(|c| format!("{:?}", c.name)).collect();
        return Err(CliError::Validation(failed.join(", ")));
    }
    Ok(report)
}
