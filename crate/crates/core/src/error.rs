use thiserror::Error;

/// Everything that can go wrong inside the lab.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KalError {
    #[error("metric is not symmetric (asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("metric is not positive definite")]
    NotPositiveDefinite,
    #[error("form is not antisymmetric (residual {0:.3e})")]
    NotAntisymmetric(f64),
    #[error("operator is not skew-adjoint (residual {0:.3e})")]
    NotSkewAdjoint(f64),
    #[error("eigen-solver failed: {0}")]
    EigenFailure(String),
    #[error("unpaired eigenvalue {value:.6e} (nearest partner off by {gap:.3e})")]
    UnpairedEigenvalue { value: f64, gap: f64 },
    #[error("finite-difference step underflow (h = {0:.3e})")]
    StepUnderflow(f64),
    #[error("matrix path is not diagonal at its base point (off-diagonal {0:.3e})")]
    NonDiagonalBase(f64),
    #[error("frame is not orthonormal (residual {0:.3e})")]
    NonOrthonormalFrame(f64),
    #[error("lattice is degenerate (rank {rank} < {expected})")]
    DegenerateLattice { rank: usize, expected: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("point outside chart (radius {radius:.4} >= {guard})")]
    OutsideChart { radius: f64, guard: f64 },
    #[error("immersion condition violated (rank {rank} < {expected})")]
    ImmersionViolation { rank: usize, expected: usize },
    #[error("curvature routes disagree by {0:.3e}")]
    CurvatureMismatch(f64),
    #[error("vector is not normal (residual {0:.3e})")]
    NonNormalVector(f64),
    #[error("Φ is singular (complex direction present)")]
    SingularPhi,
    #[error("Kähler angles {first} and {second} cross inside the stencil")]
    AngleCrossing { first: usize, second: usize },
    #[error("unknown id '{0}'")]
    UnknownId(String),
    #[error("immersion has no declared periodicity")]
    Aperiodic,
    #[error("degenerate cell at vertex {0}")]
    DegenerateCell(usize),
    #[error("flow diverged at step {0}")]
    FlowDiverged(usize),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, KalError>;
