use thiserror::Error;

/// Every failure mode the library reports. Numerical conditions that are part
/// of normal operation (a complex spectrum, a masked grid cell) are flags on
/// the result types instead.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("divergent field at (x={x}, y={y}): {reason}")]
    Divergent { x: f64, y: f64, reason: String },

    #[error("ill-conditioned eigenbasis: normalized overlap {overlap}")]
    IllConditioned { overlap: f64 },

    #[error("matrix is singular to working precision")]
    Singular,

    #[error("eigenvalue iteration did not converge after {iterations} sweeps")]
    NoConvergence { iterations: usize },

    #[error("ambiguous sheet pairing: best overlap {overlap:.4} at x={x}")]
    AmbiguousPairing { overlap: f64, x: f64 },

    #[error("integration unstable at t={t}: state norm {norm:e}")]
    StepUnstable { t: f64, norm: f64 },

    #[error("permutation not bijective: targets {targets:?} are hit more than once")]
    NotBijective { targets: Vec<usize> },

    #[error("transfer fidelity {min_confidence:.4} below threshold {threshold}")]
    LowConfidence {
        min_confidence: f64,
        threshold: f64,
    },

    #[error("cycle entry {0} appears more than once")]
    OverlappingCycles(usize),

    #[error("point {point} outside 1..={degree}")]
    OutOfRange { point: usize, degree: usize },

    #[error("degree mismatch: {0} vs {1}")]
    DegreeMismatch(usize, usize),

    #[error("group closure exceeded {cap} elements")]
    SizeLimit { cap: usize },

    #[error("cannot parse cycle notation {0:?}")]
    CycleSyntax(String),

    #[error("eta - I is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    MetricNotDilatable { min_eigenvalue: f64 },

    #[error("D is singular (min eigenvalue of eta - I is {min_eigenvalue:e})")]
    PartialDilation { min_eigenvalue: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
