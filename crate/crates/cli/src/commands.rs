//! The `solve` and `sweep` commands.

use std::path::Path;

use percond_core::continuation::{self, order_estimate, NOISE_FLOOR};
use percond_core::effective::{from_solutions, Mat2};
use percond_core::transmission::{EpsSolution, TransmissionSolver};
use percond_core::{fit_series, lambda_limit, EffectiveResult, OrderEstimate, Point, SeriesFit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{write_atomic, write_csv, write_json};

pub const SWEEP_HEADER: [&str; 9] =
    ["eps", "eps_prime", "k", "j", "lambda_eff", "Lambda", "Lambda_plus", "Lambda_minus", "f_term"];
pub const FIELDS_HEADER: [&str; 7] = ["j", "x", "y", "phase", "u", "du_dx", "du_dy"];

#[derive(Debug, Serialize)]
struct DensityRecord {
    j: usize,
    theta_i: Vec<f64>,
    theta_o: Vec<f64>,
    multipliers: [f64; 2],
}

#[derive(Debug, Serialize)]
struct Conditioning {
    fixed_boundary: f64,
    limiting: f64,
}

#[derive(Debug, Serialize)]
struct SolveReport<'a> {
    command: &'static str,
    fingerprint: String,
    p: Point,
    eps0: f64,
    result: &'a EffectiveResult,
    condition: Conditioning,
    densities: Vec<DensityRecord>,
}

#[derive(Debug, Serialize)]
struct FieldRow {
    j: usize,
    x: f64,
    y: f64,
    phase: &'static str,
    u: f64,
    du_dx: f64,
    du_dy: f64,
}

/// Seeded probe points in the cell, kept at least two node spacings from the interface.
fn probe_points(solver: &TransmissionSolver, sol: &EpsSolution, count: usize, seed: u64) -> Vec<Point> {
    let cell = solver.cell();
    let q = cell.q_diag;
    let gap = 2.0 * sol.scaled.max_spacing();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < 1000 * count {
        attempts += 1;
        let x = [rng.gen_range(0.0..q[0]), rng.gen_range(0.0..q[1])];
        if sol.scaled.distance_to_nodes(cell.wrap_near(x, sol.p)) >= gap {
            out.push(x);
        }
    }
    out
}

pub fn solve(cfg: &RunConfig, out: &Path) -> CliResult<EffectiveResult> {
    let eps = match cfg.eps.as_slice() {
        [e] => *e,
        other => {
            return Err(CliError::Config(format!("solve needs exactly one eps value, got {}", other.len())))
        }
    };
    let solver = cfg.solver()?;
    let eps0 = cfg.check_scales(&solver)?;
    let p = cfg.center();
    let sols = [
        solver.solve_eps(p, eps, 0).map_err(CliError::numerical)?,
        solver.solve_eps(p, eps, 1).map_err(CliError::numerical)?,
    ];
    let result = from_solutions(&solver, &sols).map_err(CliError::numerical)?;
    let condition = Conditioning {
        fixed_boundary: solver.condition_eps(eps, sols[0].eps_prime).map_err(CliError::numerical)?,
        limiting: solver.condition_limiting().map_err(CliError::numerical)?,
    };
    let mut densities = Vec::new();
    let mut rows = Vec::new();
    for j in cfg.direction_indices() {
        let sol = &sols[j];
        densities.push(DensityRecord {
            j: j + 1,
            theta_i: sol.pair.theta_i.values.clone(),
            theta_o: sol.pair.theta_o.values.clone(),
            multipliers: sol.multipliers,
        });
        let fields = solver.eps_fields(sol);
        for x in probe_points(&solver, sol, cfg.probes, cfg.seed) {
            let inside = fields.inside(x);
            let v = if inside { fields.u_plus(x) } else { fields.u_minus(x) };
            rows.push(FieldRow {
                j: j + 1,
                x: x[0],
                y: x[1],
                phase: if inside { "plus" } else { "minus" },
                u: v.value,
                du_dx: v.gradient[0],
                du_dy: v.gradient[1],
            });
        }
    }
    let report = SolveReport {
        command: "solve",
        fingerprint: continuation::fingerprint(&solver),
        p,
        eps0,
        result: &result,
        condition,
        densities,
    };
    write_json(&out.join("result.json"), &report)?;
    write_csv(&out.join("fields.csv"), &rows, &FIELDS_HEADER)?;
    Ok(result)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    eps: f64,
    eps_prime: f64,
    k: usize,
    j: usize,
    lambda_eff: f64,
    lambda: f64,
    lambda_plus: f64,
    lambda_minus: f64,
    f_term: f64,
}

#[derive(Debug, Serialize)]
struct FitRecord {
    k: usize,
    j: usize,
    fit: Option<SeriesFit>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct FitReport {
    fingerprint: String,
    degree: usize,
    fits: Vec<FitRecord>,
}

#[derive(Debug, Serialize)]
struct OrderRecord {
    k: usize,
    j: usize,
    estimate: OrderEstimate,
}

#[derive(Debug, Serialize)]
struct OrdersReport {
    fingerprint: String,
    /// `Lambda[0, r*]`, the reference of the remainders.
    reference: Mat2,
    noise_floor: f64,
    orders: Vec<OrderRecord>,
    error: Option<String>,
}

#[derive(Debug)]
pub struct SweepSummary {
    pub completed: usize,
}

pub fn sweep(cfg: &RunConfig, out: &Path) -> CliResult<SweepSummary> {
    if cfg.eps.is_empty() {
        return Err(CliError::Config("the eps grid is empty".into()));
    }
    if cfg.eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(CliError::Config(format!("the eps grid must be strictly decreasing, got {:?}", cfg.eps)));
    }
    let solver = cfg.solver()?;
    cfg.check_scales(&solver)?;
    let p = cfg.center();
    let record = continuation::sweep(&solver, p, &cfg.eps).map_err(CliError::numerical)?;
    let js = cfg.direction_indices();

    let mut rows = Vec::new();
    for r in record.results() {
        for &j in &js {
            for k in 0..2 {
                rows.push(SweepRow {
                    eps: r.eps,
                    eps_prime: r.eps_prime,
                    k: k + 1,
                    j: j + 1,
                    lambda_eff: r.lambda_eff[k][j],
                    lambda: r.lambda[k][j],
                    lambda_plus: r.lambda_plus[k][j],
                    lambda_minus: r.lambda_minus[k][j],
                    f_term: r.f_term[k][j],
                });
            }
        }
    }
    write_csv(&out.join("sweep.csv"), &rows, &SWEEP_HEADER)?;

    let mut fits = Vec::new();
    for &j in &js {
        for k in 0..2 {
            let (fit, error) = match fit_series(&record, (k, j), cfg.fit_degree) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            fits.push(FitRecord { k: k + 1, j: j + 1, fit, error });
        }
    }
    write_json(
        &out.join("fit.json"),
        &FitReport { fingerprint: record.fingerprint.clone(), degree: cfg.fit_degree, fits },
    )?;

    let reference = lambda_limit(&solver).map_err(CliError::numerical)?;
    let (orders, error) = match order_estimate(&record, &reference) {
        Ok(est) => (
            est.into_iter()
                .filter(|e| js.contains(&e.entry.1))
                .map(|e| OrderRecord { k: e.entry.0 + 1, j: e.entry.1 + 1, estimate: e })
                .collect(),
            None,
        ),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    write_json(
        &out.join("orders.json"),
        &OrdersReport { fingerprint: record.fingerprint.clone(), reference, noise_floor: NOISE_FLOOR, orders, error },
    )?;
    write_atomic(&out.join("plot.gp"), plot_script(&js, &reference, cfg.materials.lambda_minus).as_bytes())?;

    let failed: Vec<(f64, String)> = record
        .entries
        .iter()
        .filter_map(|e| e.error.as_ref().map(|m| (e.eps, m.clone())))
        .collect();
    if !failed.is_empty() {
        let list: Vec<String> = failed.iter().map(|(e, m)| format!("eps = {e}: {m}")).collect();
        return Err(CliError::Numerical(format!(
            "{} of {} sweep entries failed ({})",
            failed.len(),
            record.entries.len(),
            list.join("; ")
        )));
    }
    Ok(SweepSummary { completed: record.entries.len() })
}

/// Gnuplot script for `lambda_eff` against `eps` and the log-log remainder.
fn plot_script(js: &[usize], reference: &Mat2, lambda_minus: f64) -> String {
    let mut s = String::new();
    s.push_str("# Generated by percond sweep. Run with: gnuplot plot.gp\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set datafile commentschars '#'\n");
    s.push_str("set terminal pngcairo size 1200,500\n");
    s.push_str("set output 'sweep.png'\n");
    s.push_str(&format!("lm = {lambda_minus:e}\n"));
    for k in 0..2 {
        for &j in js {
            s.push_str(&format!("L0_{}{} = {:e}\n", k + 1, j + 1, reference[k][j]));
        }
    }
    s.push_str("set multiplot layout 1,2\n");
    s.push_str("set xlabel 'eps'\nset ylabel 'lambda_eff'\nset key left top\n");
    let mut curves = Vec::new();
    for &j in js {
        for k in 0..2 {
            curves.push(format!(
                "'sweep.csv' every ::1 using 1:(($3=={k} && $4=={j}) ? $5 : 1/0) with linespoints title 'lambda_eff_{k}{j}'",
                k = k + 1,
                j = j + 1
            ));
        }
    }
    s.push_str(&format!("plot {}\n", curves.join(", \\\n     ")));
    s.push_str("set logscale xy\nset ylabel '|lambda_eff - lm delta - eps^2 Lambda0|'\n");
    let mut rem = Vec::new();
    for &j in js {
        for k in 0..2 {
            let d = if k == j { "lm" } else { "0" };
            rem.push(format!(
                "'sweep.csv' every ::1 using 1:(($3=={k1} && $4=={j1}) ? abs($5 - {d} - $1**2 * L0_{k1}{j1}) : 1/0) with linespoints title 'remainder_{k1}{j1}'",
                k1 = k + 1,
                j1 = j + 1
            ));
        }
    }
    s.push_str(&format!("plot {}\n", rem.join(", \\\n     ")));
    s.push_str("unset multiplot\n");
    s
}
