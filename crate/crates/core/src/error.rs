use thiserror::Error;

/// Errors raised by geometry construction, kernel evaluation and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PercondError {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("inclusion does not fit in the cell: {0}")]
    InclusionTooLarge(String),

    #[error("point {point:?} lies on the lattice (distance {distance:e})")]
    OnLattice { point: [f64; 2], distance: f64 },

    #[error("point {0:?} is outside the principal cell around the origin")]
    OutsidePrincipalCell([f64; 2]),

    #[error("invalid problem data: {0}")]
    InvalidData(String),

    #[error("singular system ({what}), condition estimate {condition:e}")]
    Singular { what: String, condition: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fit refused: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, PercondError>;
