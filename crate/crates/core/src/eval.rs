//! Evaluation harness: metrics, non-private baselines, repeated k-fold
//! cross-validation and parameter sweeps.
//!
//! Every cell of a report carries the seeds it was produced from. Fold
//! assignment is reshuffled per repeat, and each (repeat, fold) cell draws
//! mechanism noise from its own derived stream, so reports are identical for
//! any number of worker threads.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{kfold_split, sigmoid, NormalizedDataset};
use crate::error::{check_dim, FmError, Result};
use crate::mechanism::{fm_train, FmOptions, NoiseTrace, PrivacyBudget};
use crate::polyobj::{build_logistic_taylor_objective, logistic_loss_gradient, true_loss, ModelParams};
use crate::rng::{derive_seed, label, FmRng};
use crate::solver::{minimize_exact, RepairReport, Strategy};
use crate::Task;

/// Gradient-norm stop for the iterative logistic baseline, on the mean loss.
pub const LOGISTIC_GRAD_TOL: f64 = 1e-8;
pub const LOGISTIC_MAX_ITER: usize = 100_000;

/// `(1/n) sum (y - x.w)^2`.
pub fn mse(omega: &ModelParams, test: &NormalizedDataset) -> Result<f64> {
    check_dim(test.d(), omega.d())?;
    if test.n() == 0 {
        return Err(FmError::Data("empty test set".into()));
    }
    Ok(true_loss(test, omega, Task::Linear)? / test.n() as f64)
}

/// Fraction of records whose predicted class differs from the label. The
/// prediction is 1 iff `sigmoid(x.w) > 0.5`; an exact tie predicts 0.
pub fn misclassification_rate(omega: &ModelParams, test: &NormalizedDataset) -> Result<f64> {
    check_dim(test.d(), omega.d())?;
    if test.n() == 0 {
        return Err(FmError::Data("empty test set".into()));
    }
    let wrong = test
        .records()
        .filter(|(x, y)| {
            let predicted = if sigmoid(omega.dot(x)) > 0.5 { 1.0 } else { 0.0 };
            predicted != *y
        })
        .count();
    Ok(wrong as f64 / test.n() as f64)
}

/// MSE for linear data, misclassification rate for logistic data.
pub fn task_metric(omega: &ModelParams, test: &NormalizedDataset) -> Result<f64> {
    match test.task() {
        Task::Linear => mse(omega, test),
        Task::Logistic => misclassification_rate(omega, test),
    }
}

/// Non-private least squares on the normal equations. Falls back to the
/// SVD minimum-norm solution when `XᵀX` is singular.
pub fn least_squares(data: &NormalizedDataset) -> Result<ModelParams> {
    let x = DMatrix::from_row_slice(data.n(), data.d(), data.features());
    let y = DVector::from_column_slice(data.targets());
    let xtx = x.tr_mul(&x);
    let xty = x.tr_mul(&y);
    if let Some(chol) = xtx.clone().cholesky() {
        let w = chol.solve(&xty);
        if w.iter().all(|v| v.is_finite()) {
            return Ok(ModelParams(w.iter().copied().collect()));
        }
    }
    let w = x
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| FmError::Numeric(format!("least squares: {e}")))?;
    Ok(ModelParams(w.iter().copied().collect()))
}

/// Damped Newton iteration with Armijo backtracking on the mean logistic loss,
/// stopping once the gradient norm is below [`LOGISTIC_GRAD_TOL`]. Falls back
/// to the gradient direction when the Hessian is not positive definite.
pub fn logistic_regression(data: &NormalizedDataset) -> Result<ModelParams> {
    let n = data.n() as f64;
    let d = data.d();
    let loss = |w: &ModelParams| true_loss(data, w, Task::Logistic).map(|v| v / n);
    let mut w = ModelParams::zeros(d);
    let mut f = loss(&w)?;
    for _ in 0..LOGISTIC_MAX_ITER {
        let g: Vec<f64> = logistic_loss_gradient(data, &w)?.into_iter().map(|v| v / n).collect();
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm <= LOGISTIC_GRAD_TOL {
            return Ok(w);
        }
        let mut h = DMatrix::<f64>::zeros(d, d);
        for (x, _) in data.records() {
            let s = sigmoid(w.dot(x));
            let c = s * (1.0 - s) / n;
            for j in 0..d {
                for l in 0..d {
                    h[(j, l)] += c * x[j] * x[l];
                }
            }
        }
        let gv = DVector::from_column_slice(&g);
        let dir: Vec<f64> = match h.cholesky() {
            Some(ch) => (-ch.solve(&gv)).iter().copied().collect(),
            None => g.iter().map(|v| -v).collect(),
        };
        let slope: f64 = dir.iter().zip(&g).map(|(p, q)| p * q).sum();
        let (dir, slope) = if slope < 0.0 {
            (dir, slope)
        } else {
            (g.iter().map(|v| -v).collect(), -gnorm * gnorm)
        };
        let mut step = 1.0;
        loop {
            let cand = ModelParams(w.0.iter().zip(&dir).map(|(a, b)| a + step * b).collect());
            let fc = loss(&cand)?;
            if fc <= f + 1e-4 * step * slope {
                w = cand;
                f = fc;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                // no further decrease representable
                return Ok(w);
            }
        }
    }
    Ok(w)
}

/// Non-private fit of the exact objective.
pub fn no_privacy_fit(data: &NormalizedDataset) -> Result<ModelParams> {
    match data.task() {
        Task::Linear => least_squares(data),
        Task::Logistic => logistic_regression(data),
    }
}

/// Non-private fit of the truncated logistic objective.
pub fn truncated_fit(data: &NormalizedDataset) -> Result<ModelParams> {
    minimize_exact(&build_logistic_taylor_objective(data)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fm,
    NoPrivacy,
    Truncated,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Fm => "fm",
            Method::NoPrivacy => "noprivacy",
            Method::Truncated => "truncated",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = FmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fm" => Ok(Method::Fm),
            "noprivacy" | "no-privacy" => Ok(Method::NoPrivacy),
            "truncated" => Ok(Method::Truncated),
            other => Err(FmError::Config(format!(
                "unknown method `{other}` (expected fm, noprivacy or truncated)"
            ))),
        }
    }
}

/// A method together with its options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    pub task: Task,
    pub options: FmOptions,
}

impl MethodSpec {
    pub fn new(method: Method, task: Task) -> Result<Self> {
        Self::with_options(method, task, FmOptions::default())
    }

    pub fn with_options(method: Method, task: Task, options: FmOptions) -> Result<Self> {
        if method == Method::Truncated && task == Task::Linear {
            return Err(FmError::Config(
                "the truncated baseline applies to logistic regression only".into(),
            ));
        }
        Ok(Self { method, task, options })
    }
}

/// Output of training one model.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub omega: ModelParams,
    pub repair: Option<RepairReport>,
    pub traces: Vec<NoiseTrace>,
    pub epsilon_spent: f64,
}

/// Fit `spec` on `train`. Private fits get a fresh budget of `epsilon`, or
/// `2 epsilon` under the rerun strategy.
pub fn train_model(spec: &MethodSpec, train: &NormalizedDataset, epsilon: f64, rng: &mut FmRng) -> Result<Trained> {
    if train.task() != spec.task {
        return Err(FmError::Config(format!(
            "method configured for {} but data is {}",
            spec.task,
            train.task()
        )));
    }
    match spec.method {
        Method::Fm => {
            let allowance = match spec.options.strategy {
                Strategy::RegularizeTrim => epsilon,
                Strategy::RerunOnce => 2.0 * epsilon,
            };
            let mut budget = PrivacyBudget::new(allowance)?;
            let out = fm_train(train, epsilon, &mut budget, rng, &spec.options)?;
            Ok(Trained {
                omega: out.omega,
                repair: Some(out.repair),
                traces: out.traces,
                epsilon_spent: out.epsilon_spent,
            })
        }
        Method::NoPrivacy => Ok(Trained {
            omega: no_privacy_fit(train)?,
            repair: None,
            traces: Vec::new(),
            epsilon_spent: 0.0,
        }),
        Method::Truncated => Ok(Trained {
            omega: truncated_fit(train)?,
            repair: None,
            traces: Vec::new(),
            epsilon_spent: 0.0,
        }),
    }
}

/// One train/test evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    pub task: Task,
    pub epsilon: f64,
    pub sampling_rate: f64,
    /// Index into the sweep's attribute subsets; 0 when all attributes are used.
    pub attribute_set: usize,
    pub d: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub repeat: usize,
    pub fold: usize,
    pub fold_seed: u64,
    pub noise_seed: u64,
    pub metric: f64,
    pub epsilon_spent: f64,
    pub omega: ModelParams,
    pub repair: Option<RepairReport>,
    pub traces: Vec<NoiseTrace>,
    /// Not serialized, so report files stay byte-identical across runs.
    #[serde(skip)]
    pub wall_ms: f64,
}

/// Summary statistics of one grid point and method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub epsilon: f64,
    pub sampling_rate: f64,
    pub attribute_set: usize,
    pub d: usize,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub metric: String,
    pub seed: u64,
    pub cells: Vec<Cell>,
    pub aggregates: Vec<Aggregate>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl EvalReport {
    fn new(task: Task, seed: u64, cells: Vec<Cell>) -> Self {
        let metric = match task {
            Task::Linear => "mse",
            Task::Logistic => "misclassification_rate",
        }
        .to_string();
        let aggregates = aggregate(&cells);
        Self {
            task,
            metric,
            seed,
            cells,
            aggregates,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| FmError::Numeric(format!("report serialization: {e}")))
    }

    /// One row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,task,epsilon,sampling_rate,attribute_set,d,n_train,n_test,repeat,fold,fold_seed,noise_seed,metric,epsilon_spent,lambda,trimmed\n",
        );
        for c in &self.cells {
            let (lambda, trimmed) = match &c.repair {
                Some(r) => (format!("{:?}", r.lambda), r.trimmed.to_string()),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!(
                "{},{},{:?},{:?},{},{},{},{},{},{},{},{},{:?},{:?},{},{}\n",
                c.method,
                c.task,
                c.epsilon,
                c.sampling_rate,
                c.attribute_set,
                c.d,
                c.n_train,
                c.n_test,
                c.repeat,
                c.fold,
                c.fold_seed,
                c.noise_seed,
                c.metric,
                c.epsilon_spent,
                lambda,
                trimmed
            ));
        }
        out
    }

    /// Wall-clock time per cell, kept apart from the deterministic report.
    pub fn timings_csv(&self) -> String {
        let mut out = String::from("method,epsilon,sampling_rate,attribute_set,repeat,fold,wall_ms\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{:?},{:?},{},{},{},{:.3}\n",
                c.method, c.epsilon, c.sampling_rate, c.attribute_set, c.repeat, c.fold, c.wall_ms
            ));
        }
        out
    }

    /// Aggregates matching a method and epsilon.
    pub fn find(&self, method: Method, epsilon: f64) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.method == method && a.epsilon == epsilon)
    }
}

/// Group cells by (method, epsilon, rate, attribute set) in first-seen order.
pub fn aggregate(cells: &[Cell]) -> Vec<Aggregate> {
    let mut keys: Vec<(Method, u64, u64, usize, usize)> = Vec::new();
    for c in cells {
        let key = (c.method, c.epsilon.to_bits(), c.sampling_rate.to_bits(), c.attribute_set, c.d);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, eps, rate, set, d)| {
            let values: Vec<f64> = cells
                .iter()
                .filter(|c| {
                    c.method == method
                        && c.epsilon.to_bits() == eps
                        && c.sampling_rate.to_bits() == rate
                        && c.attribute_set == set
                })
                .map(|c| c.metric)
                .collect();
            let (mean, stddev) = mean_std(&values);
            Aggregate {
                method,
                epsilon: f64::from_bits(eps),
                sampling_rate: f64::from_bits(rate),
                attribute_set: set,
                d,
                count: values.len(),
                mean,
                median: median(&values),
                stddev,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct GridContext {
    sampling_rate: f64,
    attribute_set: usize,
}

fn run_cells(
    spec: &MethodSpec,
    data: &NormalizedDataset,
    k: usize,
    repeats: usize,
    epsilon: f64,
    seed: u64,
    ctx: GridContext,
) -> Result<Vec<Cell>> {
    if repeats == 0 {
        return Err(FmError::Config("repeats must be at least 1".into()));
    }
    let plans = (0..repeats)
        .map(|r| kfold_split(data, k, derive_seed(seed, &[label::FOLDS, r as u64])))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..repeats).flat_map(|r| (0..k).map(move |f| (r, f))).collect();

    let run = |&(repeat, fold): &(usize, usize)| -> Result<Cell> {
        let plan = &plans[repeat];
        let train = data.subset(&plan.train_indices(fold))?;
        let test = data.subset(&plan.test_indices(fold))?;
        let noise_seed = derive_seed(seed, &[label::NOISE, repeat as u64, fold as u64]);
        let mut rng = FmRng::from_seed(noise_seed);
        let started = Instant::now();
        let trained = train_model(spec, &train, epsilon, &mut rng)?;
        let metric = task_metric(&trained.omega, &test)?;
        Ok(Cell {
            method: spec.method,
            task: spec.task,
            epsilon,
            sampling_rate: ctx.sampling_rate,
            attribute_set: ctx.attribute_set,
            d: data.d(),
            n_train: train.n(),
            n_test: test.n(),
            repeat,
            fold,
            fold_seed: plan.seed(),
            noise_seed,
            metric,
            epsilon_spent: trained.epsilon_spent,
            omega: trained.omega,
            repair: trained.repair,
            traces: trained.traces,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.iter().map(run).collect()
    }
}

/// `repeats` rounds of `k`-fold cross-validation, `k * repeats` cells.
/// Baselines ignore `epsilon` apart from recording it.
pub fn cross_validate(
    spec: &MethodSpec,
    data: &NormalizedDataset,
    k: usize,
    repeats: usize,
    epsilon: f64,
    seed: u64,
) -> Result<EvalReport> {
    let cells = run_cells(
        spec,
        data,
        k,
        repeats,
        epsilon,
        seed,
        GridContext {
            sampling_rate: 1.0,
            attribute_set: 0,
        },
    )?;
    Ok(EvalReport::new(data.task(), seed, cells))
}

/// Parameter grid. An empty attribute subset list means "all attributes".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub epsilons: Vec<f64>,
    #[serde(default = "default_rates")]
    pub sampling_rates: Vec<f64>,
    #[serde(default)]
    pub attribute_subsets: Vec<Vec<usize>>,
}

fn default_rates() -> Vec<f64> {
    vec![1.0]
}

/// Privacy budgets evaluated in the original experiments.
pub const TABLE_EPSILONS: [f64; 6] = [3.2, 1.6, 0.8, 0.4, 0.2, 0.1];
pub const TABLE_RATES: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
pub const TABLE_DIMENSIONS: [usize; 4] = [5, 8, 11, 14];
pub const DEFAULT_EPSILON: f64 = 0.8;
pub const DEFAULT_DIMENSION: usize = 11;

/// Run [`cross_validate`] for every grid point and method and concatenate
/// the cells. All grid points share `seed`, so fold assignments and noise
/// streams are common across epsilons.
pub fn sweep(
    grid: &SweepGrid,
    data: &NormalizedDataset,
    methods: &[MethodSpec],
    k: usize,
    repeats: usize,
    seed: u64,
) -> Result<EvalReport> {
    if grid.epsilons.is_empty() || grid.sampling_rates.is_empty() || methods.is_empty() {
        return Err(FmError::Config("sweep grid and method list must be non-empty".into()));
    }
    let subsets: Vec<Option<&[usize]>> = if grid.attribute_subsets.is_empty() {
        vec![None]
    } else {
        grid.attribute_subsets.iter().map(|s| Some(s.as_slice())).collect()
    };
    let mut cells = Vec::new();
    for (set_idx, subset) in subsets.iter().enumerate() {
        let projected = match subset {
            Some(cols) => data.select_attributes(cols)?,
            None => data.clone(),
        };
        for &rate in &grid.sampling_rates {
            let sampled = if rate == 1.0 {
                projected.clone()
            } else {
                let mut rng = FmRng::from_seed(derive_seed(seed, &[label::SUBSAMPLE, rate.to_bits()]));
                projected.subsample(rate, &mut rng)?
            };
            for &eps in &grid.epsilons {
                for spec in methods {
                    let ctx = GridContext {
                        sampling_rate: rate,
                        attribute_set: set_idx,
                    };
                    cells.extend(run_cells(spec, &sampled, k, repeats, eps, seed, ctx)?);
                }
            }
        }
    }
    Ok(EvalReport::new(data.task(), seed, cells))
}
