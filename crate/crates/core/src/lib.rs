//! Effective conductivity of periodic two-phase composites with interfacial
//! thermal resistance, computed with boundary integral equations.
//!
//! The inclusion `p + eps * Omega` sits in a rectangular cell. Layer potentials are
//! discretized by the Nyström method on a fixed model boundary `dOmega`, and the
//! effective conductivity is assembled from boundary integrals of the rescaled
//! solution.

pub mod continuation;
pub mod effective;
pub mod error;
pub mod geometry;
pub mod greens;
pub mod potentials;
pub mod transmission;

pub use continuation::{fit_series, order_estimate, sweep, OrderEstimate, SeriesFit, SweepRecord};
pub use effective::{lambda_eff, lambda_eff_volume_check, lambda_limit, EffectiveResult, VolumeCheck};
pub use error::{PercondError, Result};
pub use geometry::{
    make_ellipse, make_smooth_star, validate_scaled, BoundaryGeometry, PeriodicCell, Point,
    ScaledInclusion, Shape,
};
pub use greens::{eval_sn, grad_sn, gauss_periodic_residual, GreensEvaluator};
pub use potentials::{assemble_r_blocks, assemble_v, assemble_w, Density, NystromBlock};
pub use transmission::{
    DensityPair, EpsSolution, LimitingSolution, ProblemData, Provenance, RhoLaw, TransmissionSolver,
    TrigPolynomial,
};
