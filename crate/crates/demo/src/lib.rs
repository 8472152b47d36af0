//! Browser bindings for the interactive demo page in `www/`.
//!
//! Each export returns a JSON string; the plain-Rust functions behind them are
//! public so they can be tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use funcmech::dataset::{synth_generate, NormalizedDataset, SynthSpec};
use funcmech::eval::{cross_validate, Method, MethodSpec};
use funcmech::mechanism::{perturb_objective, PrivacyBudget, Sensitivity};
use funcmech::polyobj::{build_linear_objective, ModelParams, QuadraticObjective};
use funcmech::rng::FmRng;
use funcmech::solver::{default_lambda, regularize, solve_pipeline, PipelineOutcome, Strategy};
use funcmech::Task;

#[derive(Debug, Serialize)]
pub struct ToyCurves {
    pub w: Vec<f64>,
    pub exact: Vec<f64>,
    pub noisy: Vec<f64>,
    pub repaired: Vec<f64>,
    pub exact_min: f64,
    pub private_min: f64,
    pub noise_scale: f64,
    pub lambda: f64,
}

/// The three-record, one-attribute regression problem.
pub fn toy_data() -> NormalizedDataset {
    NormalizedDataset::new(1, vec![1.0, 0.9, -0.5], vec![0.4, 0.3, -1.0], Task::Linear).expect("toy data is valid")
}

fn sample(obj: &QuadraticObjective, w: &[f64]) -> funcmech::Result<Vec<f64>> {
    w.iter().map(|&v| obj.evaluate(&ModelParams(vec![v]))).collect()
}

/// Exact, noisy, and repaired objective curves for the toy problem.
pub fn toy_curves(epsilon: f64, seed: u64, points: usize) -> funcmech::Result<ToyCurves> {
    let data = toy_data();
    let exact = build_linear_objective(&data)?;
    let sens = Sensitivity::for_task(Task::Linear, 1)?;
    let mut budget = PrivacyBudget::new(epsilon)?;
    let (noisy, trace) = perturb_objective(&exact, &sens, epsilon, &mut budget, &mut FmRng::from_seed(seed))?;
    let lambda = default_lambda(&sens, epsilon);
    let repaired = regularize(&noisy, lambda)?;
    let private_min = match solve_pipeline(&noisy, &sens, epsilon, Strategy::RegularizeTrim, None)? {
        PipelineOutcome::Solved(w, _) => w.0[0],
        PipelineOutcome::NeedsRerun(_) => f64::NAN,
    };
    let points = points.max(2);
    let w: Vec<f64> = (0..points).map(|i| -2.0 + 4.0 * i as f64 / (points - 1) as f64).collect();
    Ok(ToyCurves {
        exact: sample(&exact, &w)?,
        noisy: sample(&noisy, &w)?,
        repaired: sample(&repaired, &w)?,
        w,
        exact_min: -exact.linear()[0] / (2.0 * exact.m_at(0, 0)),
        private_min,
        noise_scale: trace.scale,
        lambda,
    })
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub fm: f64,
    pub no_privacy: f64,
}

/// Median cross-validated error of the private fit and the non-private
/// baseline over a grid of epsilons, on synthetic data.
pub fn epsilon_sweep(task: Task, n: usize, d: usize, epsilons: &[f64], seed: u64) -> funcmech::Result<Vec<SweepPoint>> {
    let omega = (0..d).map(|j| if j % 2 == 0 { 1.0 } else { -0.8 }).collect();
    let data = synth_generate(&SynthSpec { n, d, task, omega, noise: 0.1 }, seed)?;
    let fm = MethodSpec::new(Method::Fm, task)?;
    let np = MethodSpec::new(Method::NoPrivacy, task)?;
    let baseline = cross_validate(&np, &data, 5, 2, 1.0, seed)?.aggregates[0].median;
    epsilons
        .iter()
        .map(|&epsilon| {
            Ok(SweepPoint {
                epsilon,
                fm: cross_validate(&fm, &data, 5, 2, epsilon, seed)?.aggregates[0].median,
                no_privacy: baseline,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct LogisticCurves {
    pub s: Vec<f64>,
    pub exact: Vec<f64>,
    pub truncated: Vec<f64>,
}

/// Per-record logistic loss `ln(1 + e^s) - y s` against its second-order
/// expansion around `s = 0`, for `s` in `[-range, range]`.
pub fn logistic_curves(y: f64, range: f64, points: usize) -> LogisticCurves {
    let points = points.max(2);
    let s: Vec<f64> = (0..points).map(|i| -range + 2.0 * range * i as f64 / (points - 1) as f64).collect();
    let exact = s.iter().map(|&v| softplus(v) - y * v).collect();
    let truncated = s.iter().map(|&v| std::f64::consts::LN_2 + (0.5 - y) * v + v * v / 8.0).collect();
    LogisticCurves { s, exact, truncated }
}

fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

fn to_js<T: Serialize>(r: funcmech::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = toyCurves)]
pub fn toy_curves_js(epsilon: f64, seed: u32, points: usize) -> Result<String, JsError> {
    to_js(toy_curves(epsilon, seed as u64, points))
}

#[wasm_bindgen(js_name = epsilonSweep)]
pub fn epsilon_sweep_js(task: &str, n: usize, d: usize, epsilons: Vec<f64>, seed: u32) -> Result<String, JsError> {
    let task: Task = task.parse().map_err(|e: funcmech::FmError| JsError::new(&e.to_string()))?;
    to_js(epsilon_sweep(task, n, d, &epsilons, seed as u64))
}

#[wasm_bindgen(js_name = logisticCurves)]
pub fn logistic_curves_js(y: f64, range: f64, points: usize) -> Result<String, JsError> {
    to_js(Ok(logistic_curves(y, range, points)))
}
