use nalgebra::DVector;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: DVector<f64>,
    },

    #[error("iteration diverged after {iterations} iterations (residual {residual:e})")]
    Divergence {
        iterations: usize,
        residual: f64,
        best: DVector<f64>,
    },

    #[error("singular jacobian at iteration {iterations}")]
    SingularJacobian {
        iterations: usize,
        residual: f64,
        best: DVector<f64>,
    },

    #[error("secant stalled on a flat function at x = {x} (residual {residual:e})")]
    FlatFunction { x: f64, residual: f64 },

    #[error("secant did not converge after {iterations} iterations (best x = {best}, residual {residual:e})")]
    SecantNonConvergence {
        iterations: usize,
        best: f64,
        residual: f64,
    },

    #[error("system is not separable")]
    NotSeparable,

    #[error("system provides no hessians")]
    MissingHessians,

    #[error("finite-difference step underflow (eps = {0:e})")]
    StepUnderflow(f64),

    #[error("unknown invariant label `{0}`")]
    UnknownLabel(String),

    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through stage and step wrappers.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::Step { source, .. } => source.root_cause(),
            other => other,
        }
    }
}
