//! Transmission problem with interfacial resistance: the limiting system, the
//! fixed-boundary system at `(eps, eps')` and the scaled-domain periodic system.

mod data;
mod fields;
mod solver;
mod system;

pub use data::{disk_dipole_coefficients, disk_lambda_limit, ProblemData, RhoLaw, TrigPolynomial};
pub use fields::{EpsFields, FarFieldReport, LimitingFields, PeriodicDirectFields, RescaledFields};
pub use solver::{
    assemble_j, solve_periodic_system, DensityPair, EpsSolution, LimitingSolution, PeriodicDirectSolution,
    Provenance, TransmissionSolver,
};
pub use system::{BorderedSolution, BorderedSystem, FactoredSystem};
