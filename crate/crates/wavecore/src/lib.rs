pub mod quad;
pub mod grid;
pub mod potential;
pub mod ray;
pub mod greens;
pub mod kernel;
pub mod structure;
pub mod propagator;

pub use num_complex::Complex64;

/// Errors shared across the numerical layers.
#[derive(Debug, thiserror::Error)]
pub enum WaveError {
    #[error("singular kernel evaluated on the diagonal (x == y)")]
    DiagonalSingularity,
    #[error("resolvent argument must satisfy Im(lambda) >= 0, got {0}")]
    LowerHalfPlane(f64),
    #[error("linear solve failed: {0}")]
    SolveFailed(String),
    #[error("Neumann iteration diverged: spectral radius estimate {0:.3}")]
    NeumannDiverged(f64),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("divergent quantity: {0}")]
    Divergence(String),
    #[error("extrapolation residual {0:.3e} above tolerance")]
    Accuracy(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed grid file: {0}")]
    BadGridFile(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, WaveError>;
