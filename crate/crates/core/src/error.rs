use thiserror::Error;

/// Errors surfaced by every module. The variant decides the process exit code
/// of the command-line front end.
#[derive(Debug, Error)]
pub enum FmError {
    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("data: missing value at (row {row}, col {col})")]
    MissingValue { row: usize, col: usize },

    #[error("data: cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("mechanism: privacy budget exhausted (requested {requested}, remaining {remaining})")]
    BudgetExhausted { requested: f64, remaining: f64 },

    #[error("solver: fully degenerate objective ({0})")]
    Degenerate(String),

    #[error("solver: eigen-decomposition did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("numeric: {0}")]
    Numeric(String),
}

impl FmError {
    /// 1 config, 2 data, 3 numeric or degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            FmError::Config(_) => 1,
            FmError::Data(_) | FmError::MissingValue { .. } | FmError::Io { .. } => 2,
            FmError::Dimension { .. } => 2,
            FmError::BudgetExhausted { .. }
            | FmError::Degenerate(_)
            | FmError::NoConvergence { .. }
            | FmError::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, FmError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(FmError::Dimension { expected, got })
    }
}
