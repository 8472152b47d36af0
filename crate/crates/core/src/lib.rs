//! Differentially private regression through objective perturbation.
//!
//! The regression objective is written as a polynomial of degree at most two
//! in the model parameters. Laplace noise calibrated to the coefficient
//! sensitivity is injected into every coefficient, the noisy quadratic is
//! repaired if it has become unbounded, and its minimizer is released.
//!
//! Module map:
//!
//! * [`dataset`]: ingestion, public-bound normalization, target encoding, folds, synthetic data.
//! * [`polyobj`]: quadratic objectives, exact linear build, truncated Taylor builds.
//! * [`mechanism`]: sensitivity, Laplace sampling, coefficient perturbation, budget.
//! * [`solver`]: eigen-decomposition, regularization, spectral trimming, minimization.
//! * [`eval`]: metrics, baselines, cross-validation and parameter sweeps.
//! * [`cli`]: run configuration and orchestration for the `funcmech` binary.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod mechanism;
pub mod polyobj;
pub mod rng;
pub mod solver;
pub mod validation;

#[cfg(feature = "cli")]
pub mod cli;

use serde::{Deserialize, Serialize};

pub use error::{FmError, Result};

/// Regression task. Decides the target domain, the objective builder and the
/// sensitivity formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Linear,
    Logistic,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Task::Linear => f.write_str("linear"),
            Task::Logistic => f.write_str("logistic"),
        }
    }
}

impl std::str::FromStr for Task {
    type Err = FmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Task::Linear),
            "logistic" => Ok(Task::Logistic),
            other => Err(FmError::Config(format!("unknown task `{other}`"))),
        }
    }
}
