use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid configuration ({} problem(s)): {}", .0.len(), .0.join("; "))]
    ConfigList(Vec<String>),

    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("{context}: no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        context: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("newton step failed at t = {t}: residual history {history:?}")]
    StepFailure { t: f64, history: Vec<f64> },

    #[error("trajectory {trajectory} failed: {message}")]
    TrajectoryFailed { trajectory: u64, message: String },

    #[error("conjugate search saturated at s = {s:e}: {reason}")]
    Saturated { s: f64, reason: String },

    #[error("malformed {what}: {message}")]
    Decode { what: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
