//! Run configuration: a single JSON document, checked before any computation.

use std::path::{Path, PathBuf};

use percond_core::geometry::admissible_scale;
use percond_core::transmission::TransmissionSolver;
use percond_core::{BoundaryGeometry, GreensEvaluator, PeriodicCell, Point, ProblemData, RhoLaw, Shape, TrigPolynomial};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeometrySpec {
    Ellipse {
        a: f64,
        b: f64,
        #[serde(rename = "N")]
        n: usize,
    },
    Star {
        r0: f64,
        amp: f64,
        lobes: u32,
        #[serde(rename = "N")]
        n: usize,
    },
}

impl GeometrySpec {
    pub fn shape(&self) -> Shape {
        match *self {
            GeometrySpec::Ellipse { a, b, .. } => Shape::Ellipse { a, b },
            GeometrySpec::Star { r0, amp, lobes, .. } => Shape::Star { r0, amp, lobes },
        }
    }

    pub fn num_nodes(&self) -> usize {
        match *self {
            GeometrySpec::Ellipse { n, .. } | GeometrySpec::Star { n, .. } => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub q11: f64,
    pub q22: f64,
}

impl Default for CellSpec {
    fn default() -> Self {
        Self { q11: 1.0, q22: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Materials {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keyword {
    Zero,
}

/// Interface data: `"zero"` or trigonometric coefficients in the boundary parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundaryData {
    Keyword(Keyword),
    Coefficients(TrigPolynomial),
}

impl Default for BoundaryData {
    fn default() -> Self {
        BoundaryData::Keyword(Keyword::Zero)
    }
}

impl BoundaryData {
    pub fn polynomial(&self) -> TrigPolynomial {
        match self {
            BoundaryData::Keyword(Keyword::Zero) => TrigPolynomial::zero(),
            BoundaryData::Coefficients(c) => c.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Truncation tolerance of the Ewald sums.
    #[serde(default = "default_ewald")]
    pub ewald: f64,
    /// Ewald splitting parameter; autotuned when absent.
    #[serde(default)]
    pub ewald_eta: Option<f64>,
    /// Multiplier applied to the validation tolerance schedule.
    #[serde(default = "one")]
    pub validation_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { ewald: default_ewald(), ewald_eta: None, validation_factor: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestHooks {
    /// Added to the diagonal of the double-layer matrix in validation runs.
    #[serde(default)]
    pub w_diagonal_perturbation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub cell: CellSpec,
    pub materials: Materials,
    #[serde(default)]
    pub f: BoundaryData,
    #[serde(default)]
    pub g: BoundaryData,
    pub rho_law: RhoLaw,
    /// Inclusion center; the cell center when absent.
    #[serde(default)]
    pub p: Option<Point>,
    /// Directions `j`, one based.
    #[serde(default = "both_directions")]
    pub directions: Vec<usize>,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Number of probe points written to fields.csv per direction.
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Degree of the polynomial fit in sweeps.
    #[serde(default = "default_fit_degree")]
    pub fit_degree: usize,
    #[serde(default)]
    pub test_hooks: TestHooks,
}

fn default_ewald() -> f64 {
    1e-13
}

fn one() -> f64 {
    1.0
}

fn both_directions() -> Vec<usize> {
    vec![1, 2]
}

fn default_probes() -> usize {
    16
}

fn default_fit_degree() -> usize {
    2
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(CliError::config)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Schema checks that do not need any assembly.
    pub fn check(&self) -> CliResult<()> {
        let n = self.geometry.num_nodes();
        if n < 8 || n % 2 != 0 {
            return Err(CliError::Config(format!("geometry.N must be even and at least 8, got {n}")));
        }
        if !(self.cell.q11 > 0.0 && self.cell.q22 > 0.0) {
            return Err(CliError::Config("cell periods must be positive".into()));
        }
        if self.directions.is_empty()
            || self.directions.iter().any(|&j| j != 1 && j != 2)
            || (self.directions.len() == 2 && self.directions[0] == self.directions[1])
            || self.directions.len() > 2
        {
            return Err(CliError::Config(format!(
                "directions must be a non-empty subset of [1, 2], got {:?}",
                self.directions
            )));
        }
        if self.eps.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(CliError::Config(format!("eps values must be positive, got {:?}", self.eps)));
        }
        if self.probes == 0 {
            return Err(CliError::Config("probes must be at least 1".into()));
        }
        let t = &self.tolerances;
        if !(t.ewald > 0.0) || !(t.validation_factor > 0.0) {
            return Err(CliError::Config("tolerances must be positive".into()));
        }
        if let Some(p) = self.p {
            if !(p[0] > 0.0 && p[0] < self.cell.q11 && p[1] > 0.0 && p[1] < self.cell.q22) {
                return Err(CliError::Config(format!("p = {p:?} is not inside the open cell")));
            }
        }
        Ok(())
    }

    pub fn cell(&self) -> CliResult<PeriodicCell> {
        PeriodicCell::new(self.cell.q11, self.cell.q22).map_err(CliError::config)
    }

    pub fn center(&self) -> Point {
        self.p.unwrap_or([0.5 * self.cell.q11, 0.5 * self.cell.q22])
    }

    /// Zero-based directions in increasing order.
    pub fn direction_indices(&self) -> Vec<usize> {
        let mut js: Vec<usize> = self.directions.iter().map(|j| j - 1).collect();
        js.sort_unstable();
        js
    }

    pub fn evaluator(&self) -> CliResult<GreensEvaluator> {
        GreensEvaluator::with_params(self.cell()?, self.tolerances.ewald_eta, self.tolerances.ewald)
            .map_err(CliError::config)
    }

    pub fn boundary(&self) -> CliResult<BoundaryGeometry> {
        BoundaryGeometry::from_shape(self.geometry.shape(), self.geometry.num_nodes()).map_err(CliError::config)
    }

    pub fn problem_data(&self) -> CliResult<ProblemData> {
        ProblemData::new(
            self.materials.lambda_plus,
            self.materials.lambda_minus,
            self.f.polynomial(),
            self.g.polynomial(),
            self.rho_law.clone(),
        )
        .map_err(CliError::config)
    }

    /// Assembles the solver; every failure here is a configuration error.
    pub fn solver(&self) -> CliResult<TransmissionSolver> {
        TransmissionSolver::new(self.boundary()?, self.evaluator()?, self.problem_data()?).map_err(CliError::config)
    }

    /// Largest admissible scale at the configured center.
    pub fn eps0(&self, solver: &TransmissionSolver) -> f64 {
        admissible_scale(self.center(), &solver.geometry, solver.cell())
    }

    /// Every configured `eps` must satisfy `eps < e0`.
    pub fn check_scales(&self, solver: &TransmissionSolver) -> CliResult<f64> {
        let e0 = self.eps0(solver);
        if let Some(bad) = self.eps.iter().find(|&&e| e >= e0) {
            return Err(CliError::Config(format!(
                "eps = {bad} violates the constraint eps < e0 = {e0:.6}: p + eps*Omega must lie inside the cell"
            )));
        }
        Ok(e0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "geometry": {"shape": "ellipse", "a": 1.0, "b": 1.0, "N": 32},
        "materials": {"lambda_plus": 2.0, "lambda_minus": 1.0},
        "rho_law": {"type": "power", "c": 1.0, "a": 1.0},
        "eps": [0.1]
    }"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.cell, CellSpec::default());
        assert_eq!(cfg.directions, vec![1, 2]);
        assert_eq!(cfg.f, BoundaryData::Keyword(Keyword::Zero));
        assert_eq!(cfg.center(), [0.5, 0.5]);
        assert_eq!(cfg.fit_degree, 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("\"eps\"", "\"epsilon\": 1, \"eps\"");
        assert!(matches!(RunConfig::from_json(&text), Err(CliError::Config(_))));
        let text = MINIMAL.replace("\"N\": 32", "\"N\": 32, \"c\": 1");
        assert!(RunConfig::from_json(&text).is_err());
    }

    #[test]
    fn coefficient_data_parses() {
        let text = MINIMAL.replace("\"eps\"", "\"f\": {\"cos\": [0.5]}, \"g\": \"zero\", \"eps\"");
        let cfg = RunConfig::from_json(&text).unwrap();
        assert_eq!(cfg.f.polynomial().cos, vec![0.5]);
        assert!(RunConfig::from_json(&MINIMAL.replace("\"eps\"", "\"f\": \"one\", \"eps\"")).is_err());
    }

    #[test]
    fn bad_directions_and_scales_are_config_errors() {
        for d in ["[]", "[3]", "[1, 1]", "[0]"] {
            let text = MINIMAL.replace("\"eps\"", &format!("\"directions\": {d}, \"eps\""));
            assert!(RunConfig::from_json(&text).is_err(), "{d}");
        }
        assert!(RunConfig::from_json(&MINIMAL.replace("[0.1]", "[-0.1]")).is_err());
        let cfg = RunConfig::from_json(&MINIMAL.replace("[0.1]", "[0.6]")).unwrap();
        let s = cfg.solver().unwrap();
        let err = cfg.check_scales(&s).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("e0"));
    }
}
