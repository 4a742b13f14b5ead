use std::path::PathBuf;

/// Errors raised by the solver library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shape mismatch, bad ratio, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid physical or numerical configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("root finding failed for input {input:e}: bracket [{lo:e}, {hi:e}] after {iterations} iterations")]
    RootFinding {
        input: f64,
        lo: f64,
        hi: f64,
        iterations: usize,
    },

    #[error("quadrature did not reach tolerance on [0, {upper:e}] (estimate {estimate:e}, error {error:e})")]
    Quadrature { upper: f64, estimate: f64, error: f64 },

    /// Newton iteration for the stationary profile did not converge.
    #[error("stationary solve failed after {iterations} iterations: {reason}; increment trace {trace:?}")]
    Stationary {
        iterations: usize,
        reason: String,
        trace: Vec<f64>,
    },

    /// A time step failed to converge.
    #[error("step {step} failed after {iterations} Newton iterations: {reason}; residual history {residuals:?}")]
    Step {
        step: usize,
        iterations: usize,
        reason: String,
        residuals: Vec<f64>,
    },

    /// A time step produced non-finite values.
    #[error("divergence at step {step}: non-finite values after {iterations} Newton iterations")]
    Divergence { step: usize, iterations: usize },

    #[error("linear solver failed: {0}")]
    Linear(String),

    /// Failure inside a parameter sweep, tagged with the offending run.
    #[error("run eps={eps:e}, xi={xi:e}: {source}")]
    Sweep {
        eps: f64,
        xi: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
