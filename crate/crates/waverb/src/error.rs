use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid basis spec: {0}")]
    InvalidBasisSpec(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("eigenvalue iteration did not converge after {iterations} iterations (last estimate {last})")]
    EigenNonConvergence { iterations: usize, last: f64 },

    #[error("inner solver stagnated: relative residual {residual:.3e} after {iterations} iterations")]
    SolverStagnation { iterations: usize, residual: f64 },

    #[error("adaptive solve stopped before reaching tolerance: {reason} (achieved {achieved:.3e}, target {target:.3e})")]
    SolveUnconverged { reason: String, achieved: f64, target: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parameter {0:?} outside the declared parameter box")]
    ParameterOutsideDomain(Vec<f64>),

    #[error("snapshot nearly dependent on current basis (relative projection residual {0:.3e})")]
    DependentSnapshot(f64),

    #[error("reduced system singular or ill-conditioned (estimate {0:.3e})")]
    SingularReducedSystem(f64),

    #[error("estimator internal inconsistency: radicand {0:.3e} below roundoff tolerance")]
    EstimatorInconsistency(f64),

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("undefined approximation rate: {0}")]
    UndefinedRate(&'static str),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("model file corrupt: {0}")]
    ModelFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;
