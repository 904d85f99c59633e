use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("{sites} sites exceed the {backend} limit of {limit}")]
    TooManySites {
        sites: usize,
        limit: usize,
        backend: &'static str,
    },

    #[error("site index {site} out of range for {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("shape mismatch: expected dimension {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("steady state not reached after t = {time}: residual {residual:e} > tol {tol:e}")]
    NotConverged { time: f64, residual: f64, tol: f64 },

    #[error("steady state is degenerate (kernel dimension > 1)")]
    DegenerateKernel,

    #[error("norm underflow: total jump rate too large for dt = {dt}; try dt <= {suggested_dt}")]
    NormUnderflow { dt: f64, suggested_dt: f64 },

    #[error("no fixed point found from any seed (best residual {best_residual:e})")]
    NoFixedPoint { best_residual: f64 },

    #[error("invalid input curve: {0}")]
    InvalidCurve(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),
}

pub type Result<T> = std::result::Result<T, Error>;
