use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("no cubic root satisfies Im m * Im w > 0 (z={z}, w={w})")]
    NoValidRoot { z: String, w: String },
    #[error("two cubic roots satisfy the side condition (z={z}, w={w})")]
    AmbiguousRoot { z: String, w: String },
    #[error("spectral parameter must have nonzero imaginary part")]
    RealSpectralParameter,
    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),
    #[error("quadrature budget exceeded after {evaluations} evaluations (error estimate {estimate:e})")]
    QuadratureBudgetExceeded { evaluations: usize, estimate: f64 },
    #[error("density at E=0 is positive; no gap for |z| = {0}")]
    NoGap(f64),
    #[error("block matrix is singular")]
    SingularM,
    #[error("stability operator is degenerate (|beta+ beta-| = {0:e})")]
    DegenerateStability(f64),
    #[error("eta changed sign during the step ending at t = {0}")]
    CrossedAxis(f64),
    #[error("no initial condition found: {0}")]
    NoSolution(String),
    #[error("eigenvalue collision in DBM step at t = {0}")]
    Collision(f64),
    #[error("eigendecomposition failed")]
    EigFailure,
    #[error("singular value decomposition failed")]
    SvdFailure,
    #[error("no singular data for z = {0}")]
    MissingZ(String),
    #[error("index {index} out of range for n = {n}")]
    IndexOutOfRange { index: i64, n: usize },
    #[error("incomplete gamma series did not converge (a={a}, x={x})")]
    GammaConvergenceFailure { a: f64, x: String },
    #[error("non-positive scale parameter {value} for n = {n}")]
    NonPositiveScale { n: u64, value: f64 },
    #[error("empty sample")]
    EmptySample,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
