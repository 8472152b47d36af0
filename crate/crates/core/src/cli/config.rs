//! Run configuration.
//!
//! A config file is TOML with one table per concern:
//!
//! ```toml
//! [data]
//! task = "linear"            # linear | logistic
//! input = "income.csv"       # or a [synth] table, never both
//! target_column = 4
//! feature_bounds = [[0, 100], [0, 1], [0, 1], [18, 90]]
//! target_bounds = [0, 500000] # linear; logistic uses `threshold`
//!
//! [method]
//! methods = ["fm", "noprivacy"]
//! epsilon = 0.8
//! strategy = "regularize-trim"
//!
//! [eval]
//! k = 5
//! repeats = 50
//! seed = 7
//!
//! [grid]
//! epsilons = [3.2, 1.6, 0.8, 0.4, 0.2, 0.1]
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Command-line flags fill the same structure and win over the file.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::{AttributeBounds, SynthSpec, TargetEncoding};
use crate::error::{FmError, Result};
use crate::eval::{Method, SweepGrid};
use crate::solver::Strategy;
use crate::Task;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_REPEATS: usize = 50;
pub const DEFAULT_EPSILON: f64 = crate::eval::DEFAULT_EPSILON;
pub const DEFAULT_SYNTH_NOISE: f64 = 0.1;
pub const DEFAULT_OUTPUT_DIR: &str = "funcmech-out";
/// Environment variable consulted for the seed when none is configured.
pub const SEED_ENV: &str = "FUNCMECH_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub task: Option<Task>,
    pub input: Option<PathBuf>,
    pub target_column: Option<usize>,
    /// Input already satisfies the domain constraints; skip normalization.
    pub normalized: Option<bool>,
    pub feature_bounds: Option<Vec<[f64; 2]>>,
    pub target_bounds: Option<[f64; 2]>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub omega: Option<Vec<f64>>,
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub methods: Option<Vec<String>>,
    pub epsilon: Option<f64>,
    pub strategy: Option<String>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub k: Option<usize>,
    pub repeats: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub epsilons: Option<Vec<f64>>,
    pub sampling_rates: Option<Vec<f64>>,
    pub attribute_subsets: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Unvalidated configuration, as read from a file or assembled from flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub data: DataSection,
    pub synth: Option<SynthSection>,
    #[serde(default)]
    pub method: MethodSection,
    #[serde(default)]
    pub eval: EvalSection,
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub output: OutputSection,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),+) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )+
    };
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| FmError::Config(e.message().to_string()))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &RawConfig) -> Self {
        overlay!(self.data, top.data, task, input, target_column, normalized, feature_bounds, target_bounds, threshold);
        if let Some(ts) = &top.synth {
            let s = self.synth.get_or_insert_with(Default::default);
            overlay!(s, ts, n, d, omega, noise);
        }
        overlay!(self.method, top.method, methods, epsilon, strategy, lambda);
        overlay!(self.eval, top.eval, k, repeats, seed);
        if let Some(tg) = &top.grid {
            let g = self.grid.get_or_insert_with(Default::default);
            overlay!(g, tg, epsilons, sampling_rates, attribute_subsets);
        }
        overlay!(self.output, top.output, dir);
        self
    }
}

/// How a file's columns become a normalized dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Preparation {
    Prenormalized,
    Bounds {
        features: AttributeBounds,
        target: TargetEncoding,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File {
        path: PathBuf,
        target_column: usize,
        preparation: Preparation,
    },
    Synth(SynthSpec),
}

/// Validated configuration with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: DataSource,
    pub task: Task,
    pub methods: Vec<Method>,
    pub epsilon: f64,
    pub strategy: Strategy,
    pub lambda: Option<f64>,
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub grid: Option<SweepGrid>,
    pub output_dir: PathBuf,
}

fn missing(field: &str) -> FmError {
    FmError::Config(format!("missing required field `{field}`"))
}

fn invalid(field: &str, why: impl std::fmt::Display) -> FmError {
    FmError::Config(format!("`{field}`: {why}"))
}

/// Parse an optional config file, overlay command-line values and validate.
pub fn parse_config(file_text: Option<&str>, flags: &RawConfig) -> Result<RunConfig> {
    let base = match file_text {
        Some(text) => RawConfig::from_toml(text)?,
        None => RawConfig::default(),
    };
    validate(base.overlay(flags))
}

pub fn validate(raw: RawConfig) -> Result<RunConfig> {
    let task = raw.data.task.ok_or_else(|| missing("data.task"))?;

    let source = match (&raw.data.input, &raw.synth) {
        (Some(_), Some(_)) => {
            return Err(FmError::Config(
                "exactly one data source: set either `data.input` or a [synth] table".into(),
            ))
        }
        (None, None) => {
            return Err(FmError::Config(
                "exactly one data source: set either `data.input` or a [synth] table".into(),
            ))
        }
        (Some(path), None) => {
            let target_column = raw.data.target_column.ok_or_else(|| missing("data.target_column"))?;
            let preparation = if raw.data.normalized.unwrap_or(false) {
                Preparation::Prenormalized
            } else {
                let pairs = raw.data.feature_bounds.as_ref().ok_or_else(|| missing("data.feature_bounds"))?;
                let pairs: Vec<(f64, f64)> = pairs.iter().map(|p| (p[0], p[1])).collect();
                let features =
                    AttributeBounds::from_pairs(&pairs).map_err(|e| invalid("data.feature_bounds", e))?;
                let target = match task {
                    Task::Linear => {
                        let [lower, upper] = raw.data.target_bounds.ok_or_else(|| missing("data.target_bounds"))?;
                        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                            return Err(invalid("data.target_bounds", "must be finite with lower < upper"));
                        }
                        TargetEncoding::Linear { lower, upper }
                    }
                    Task::Logistic => {
                        let threshold = raw.data.threshold.ok_or_else(|| missing("data.threshold"))?;
                        if !threshold.is_finite() {
                            return Err(invalid("data.threshold", "must be finite"));
                        }
                        TargetEncoding::Logistic { threshold }
                    }
                };
                Preparation::Bounds { features, target }
            };
            DataSource::File {
                path: path.clone(),
                target_column,
                preparation,
            }
        }
        (None, Some(s)) => {
            let n = s.n.ok_or_else(|| missing("synth.n"))?;
            let d = s.d.ok_or_else(|| missing("synth.d"))?;
            if n == 0 {
                return Err(invalid("synth.n", "must be at least 1"));
            }
            if d == 0 {
                return Err(invalid("synth.d", "must be at least 1"));
            }
            let omega = s.omega.clone().unwrap_or_else(|| vec![1.0; d]);
            if omega.len() != d || omega.iter().any(|w| !w.is_finite()) {
                return Err(invalid("synth.omega", format!("needs {d} finite entries")));
            }
            let noise = s.noise.unwrap_or(DEFAULT_SYNTH_NOISE);
            if !(noise.is_finite() && noise >= 0.0) {
                return Err(invalid("synth.noise", "must be finite and non-negative"));
            }
            DataSource::Synth(SynthSpec { n, d, task, omega, noise })
        }
    };

    let methods = match &raw.method.methods {
        None => vec![Method::Fm],
        Some(list) if list.is_empty() => return Err(invalid("method.methods", "must not be empty")),
        Some(list) => list
            .iter()
            .map(|m| m.parse::<Method>().map_err(|e| invalid("method.methods", e)))
            .collect::<Result<Vec<_>>>()?,
    };
    if task == Task::Linear && methods.contains(&Method::Truncated) {
        return Err(invalid("method.methods", "truncated applies to logistic regression only"));
    }
    let uses_fm = methods.contains(&Method::Fm);

    let epsilon = raw.method.epsilon.unwrap_or(DEFAULT_EPSILON);
    if uses_fm && !(epsilon > 0.0) {
        return Err(invalid("method.epsilon", "epsilon must be positive"));
    }
    let strategy = match &raw.method.strategy {
        Some(s) => s.parse().map_err(|e| invalid("method.strategy", e))?,
        None => Strategy::RegularizeTrim,
    };
    if let Some(l) = raw.method.lambda {
        if !(l.is_finite() && l >= 0.0) {
            return Err(invalid("method.lambda", "must be finite and non-negative"));
        }
    }

    let k = raw.eval.k.unwrap_or(DEFAULT_K);
    if k < 2 {
        return Err(invalid("eval.k", "must be at least 2"));
    }
    let repeats = raw.eval.repeats.unwrap_or(DEFAULT_REPEATS);
    if repeats == 0 {
        return Err(invalid("eval.repeats", "must be at least 1"));
    }
    let seed = match raw.eval.seed {
        Some(s) => s,
        None => match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| invalid(SEED_ENV, format!("`{v}` is not an unsigned integer")))?,
            Err(_) => 0,
        },
    };

    let grid = match &raw.grid {
        None => None,
        Some(g) => {
            let epsilons = g.epsilons.clone().unwrap_or_else(|| vec![epsilon]);
            if epsilons.is_empty() {
                return Err(invalid("grid.epsilons", "must not be empty"));
            }
            if uses_fm && epsilons.iter().any(|e| !(*e > 0.0)) {
                return Err(invalid("grid.epsilons", "epsilon must be positive"));
            }
            let sampling_rates = g.sampling_rates.clone().unwrap_or_else(|| vec![1.0]);
            if sampling_rates.is_empty() || sampling_rates.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
                return Err(invalid("grid.sampling_rates", "rates must lie in (0, 1]"));
            }
            let attribute_subsets = g.attribute_subsets.clone().unwrap_or_default();
            if attribute_subsets.iter().any(|s| s.is_empty()) {
                return Err(invalid("grid.attribute_subsets", "subsets must not be empty"));
            }
            Some(SweepGrid {
                epsilons,
                sampling_rates,
                attribute_subsets,
            })
        }
    };

    Ok(RunConfig {
        source,
        task,
        methods,
        epsilon,
        strategy,
        lambda: raw.method.lambda,
        k,
        repeats,
        seed,
        grid,
        output_dir: raw.output.dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[data]\ntask = \"linear\"\n[synth]\nn = 100\nd = 3\n";

    fn seeded(text: &str) -> Result<RunConfig> {
        let mut flags = RawConfig::default();
        flags.eval.seed = Some(1);
        parse_config(Some(text), &flags)
    }

    #[test]
    fn minimal_synth_config_gets_defaults() {
        let c = seeded(MINIMAL).unwrap();
        assert_eq!(c.k, 5);
        assert_eq!(c.repeats, 50);
        assert_eq!(c.epsilon, 0.8);
        assert_eq!(c.strategy, Strategy::RegularizeTrim);
        assert_eq!(c.methods, vec![Method::Fm]);
        assert!(matches!(c.source, DataSource::Synth(ref s) if s.omega == vec![1.0; 3]));
    }

    #[test]
    fn zero_epsilon_with_fm() {
        let err = seeded(&format!("{MINIMAL}[method]\nepsilon = 0.0\n")).unwrap_err();
        assert!(err.to_string().contains("epsilon must be positive"), "{err}");
        assert_eq!(err.exit_code(), 1);
        // baselines ignore epsilon
        assert!(seeded(&format!("{MINIMAL}[method]\nepsilon = 0.0\nmethods = [\"noprivacy\"]\n")).is_ok());
    }

    #[test]
    fn two_data_sources() {
        let err = seeded(&MINIMAL.replace("[data]\n", "[data]\ninput = \"x.csv\"\n")).unwrap_err();
        assert!(err.to_string().contains("exactly one data source"), "{err}");
        let err = seeded("[data]\ntask = \"linear\"\n").unwrap_err();
        assert!(err.to_string().contains("exactly one data source"));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = seeded(&format!("{MINIMAL}[eval]\nfolds = 5\n")).unwrap_err();
        assert!(err.to_string().contains("folds"), "{err}");
    }

    #[test]
    fn missing_fields_are_named() {
        let err = seeded("[data]\ntask = \"linear\"\ninput = \"a.csv\"\ntarget_column = 1\n").unwrap_err();
        assert!(err.to_string().contains("data.feature_bounds"), "{err}");
        let err = seeded("[data]\ninput = \"a.csv\"\n").unwrap_err();
        assert!(err.to_string().contains("data.task"));
        let err = seeded(
            "[data]\ntask = \"logistic\"\ninput = \"a.csv\"\ntarget_column = 1\nfeature_bounds = [[0, 1]]\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("data.threshold"));
    }

    #[test]
    fn flags_override_file() {
        let mut flags = RawConfig::default();
        flags.method.epsilon = Some(3.2);
        flags.eval.seed = Some(9);
        let c = parse_config(Some(&format!("{MINIMAL}[method]\nepsilon = 0.1\n")), &flags).unwrap();
        assert_eq!(c.epsilon, 3.2);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn file_source_with_bounds() {
        let text = "[data]\ntask = \"logistic\"\ninput = \"a.csv\"\ntarget_column = 2\n\
                    feature_bounds = [[0, 10], [-1, 1]]\nthreshold = 3.5\n";
        let c = seeded(text).unwrap();
        match c.source {
            DataSource::File { preparation: Preparation::Bounds { target, .. }, .. } => {
                assert_eq!(target, TargetEncoding::Logistic { threshold: 3.5 })
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_validation() {
        let c = seeded(&format!("{MINIMAL}[grid]\nepsilons = [0.1, 0.2]\nsampling_rates = [0.5]\n")).unwrap();
        assert_eq!(c.grid.unwrap().epsilons, vec![0.1, 0.2]);
        assert!(seeded(&format!("{MINIMAL}[grid]\nsampling_rates = [1.5]\n")).is_err());
        assert!(seeded(&format!("{MINIMAL}[grid]\nepsilons = []\n")).is_err());
    }

    #[test]
    fn bad_strategy_and_method() {
        assert!(seeded(&format!("{MINIMAL}[method]\nstrategy = \"magic\"\n")).is_err());
        assert!(seeded(&format!("{MINIMAL}[method]\nmethods = [\"truncated\"]\n")).is_err());
        assert!(seeded(&format!("{MINIMAL}[method]\nmethods = [\"dpme\"]\n")).is_err());
    }
}
