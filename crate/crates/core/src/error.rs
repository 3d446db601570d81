use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("density must be strictly positive (min = {0:e})")]
    InvalidDensity(f64),
    #[error("rank error: {0}")]
    RankError(String),
    #[error("metric error: {0}")]
    MetricError(String),
    #[error("structure error: {0}")]
    StructureError(String),
    #[error("degenerate structure: {0}")]
    DegenerateStructure(String),
    #[error("path parameter out of range: {0}")]
    PathRangeError(String),
    #[error("degenerate symplectic form: {0}")]
    SymplecticError(String),
    #[error("form is not primitive (|g(psi, omega)| = {0:e})")]
    PrimitivityError(f64),
    #[error("ambiguous kernel: spectral gap {gap:e} below 10 * tol = {threshold:e}")]
    AmbiguousKernel { gap: f64, threshold: f64 },
    #[error("linear solve failed: {0}")]
    SolveError(String),
    #[error("not an almost-Kähler potential: {0}")]
    NotAPotential(String),
    #[error("degenerate hamiltonian basis (normalized Gram determinant {0:e})")]
    DegenerateBasis(f64),
    #[error("Newton iteration diverged: {0}")]
    Diverged(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("AKF4 format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
