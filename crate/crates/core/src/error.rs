use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("quadrature did not converge: estimated error {error:e} exceeds tolerance {tolerance:e}")]
    QuadratureNotConverged { error: f64, tolerance: f64 },
    #[error("degenerate capacitance network: {0}")]
    DegenerateNetwork(String),
    #[error("Fock-space truncation insufficient: relative change {change:e} on enlarging the window")]
    TruncationInsufficient { change: f64 },
    #[error("transition-rate sum underflow (up {up:e}, down {down:e})")]
    RateUnderflow { up: f64, down: f64 },
    #[error("Lamb-shift cutoff did not converge: doubling the cutoff changed the shift by {change:e} rad/s")]
    CutoffNotConverged { change: f64 },
    #[error("coupling strength is not finite at the mode frequency")]
    PvSingularity,
    #[error("fixed-point iteration diverged after {iterations} iterations (last relative change {change:e})")]
    FixedPointDiverged { iterations: usize, change: f64 },
    #[error("non-physical intermediate: {0}")]
    NonPhysical(String),
    #[error("fit failed: {0}")]
    FitFailed(String),
    #[error("ill-conditioned fit: dip depth {depth:e} below 3x noise floor {noise:e}")]
    IllConditioned { depth: f64, noise: f64 },
    #[error("confidence interval unbounded for `{0}`")]
    UnboundedInterval(String),
    #[error("root not found: {0}")]
    RootNotFound(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
