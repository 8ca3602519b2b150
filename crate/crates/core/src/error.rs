use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid power system: {0}")]
    InvalidSystem(String),
    #[error("network is disconnected: {0}")]
    Disconnected(String),
    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:e})")]
    PowerFlowDivergence { iterations: usize, mismatch: f64 },
    #[error("singular power-flow Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("training diverged at step {step}")]
    TrainingDiverged { step: usize },
    #[error("OPF infeasible: worst violation {worst:e} on {constraint}")]
    Infeasible { worst: f64, constraint: String },
    #[error("unresolved output selector: {0}")]
    Selector(String),
    #[error("OPF solution is not converged")]
    NotConverged,
    #[error("Monte Carlo aborted: {failed} of {total} scenarios failed (first: {first_reason})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first_reason: String,
    },
}

impl Error {
    /// True for failures of a numerical procedure (divergence, infeasibility),
    /// as opposed to malformed inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::PowerFlowDivergence { .. }
                | Error::SingularJacobian { .. }
                | Error::TrainingDiverged { .. }
                | Error::Infeasible { .. }
                | Error::NotConverged
                | Error::TooManyFailures { .. }
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Shape(alloc::format!($($arg)*))
    };
}
pub(crate) use shape_err;
