//! Quick invariant checks behind `funcmech validate`.
//!
//! These are smaller versions of the crate's acceptance tests, meant to be
//! run against a release build on the target machine.

use serde::Serialize;

use crate::dataset::NormalizedDataset;
use crate::mechanism::{coefficient_l1_distance, fm_train, laplace_sample, FmOptions, PrivacyBudget, Sensitivity};
use crate::polyobj::{build_linear_objective, build_objective, ModelParams, QuadraticObjective};
use crate::rng::FmRng;
use crate::solver::{minimize_exact, sym_eigendecompose};
use crate::Task;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

/// A record on or inside the unit ball. Half of the draws sit on the
/// boundary with equal-magnitude coordinates and `|y| = 1`, the worst case
/// for coefficient changes.
pub fn random_record(d: usize, task: Task, rng: &mut FmRng) -> (Vec<f64>, f64) {
    let extreme = rng.uniform() < 0.5;
    let x: Vec<f64> = if extreme {
        let mag = 1.0 / (d as f64).sqrt();
        (0..d).map(|_| if rng.uniform() < 0.5 { mag } else { -mag }).collect()
    } else {
        let raw: Vec<f64> = (0..d).map(|_| rng.uniform() * 2.0 - 1.0).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = rng.uniform();
        raw.iter().map(|v| v / norm.max(1e-300) * r).collect()
    };
    let y = match task {
        Task::Linear if extreme => {
            if rng.uniform() < 0.5 {
                1.0
            } else {
                -1.0
            }
        }
        Task::Linear => rng.uniform() * 2.0 - 1.0,
        Task::Logistic => (rng.uniform() < 0.5) as u8 as f64,
    };
    (x, y)
}

/// Two datasets of `n` records differing in exactly one record.
pub fn random_neighbors(n: usize, d: usize, task: Task, rng: &mut FmRng) -> (NormalizedDataset, NormalizedDataset) {
    let mut xs = Vec::with_capacity(n * d);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, y) = random_record(d, task, rng);
        xs.extend(x);
        ys.push(y);
    }
    let i = (rng.uniform() * n as f64) as usize % n;
    let (x, y) = random_record(d, task, rng);
    let mut xs2 = xs.clone();
    xs2[i * d..(i + 1) * d].copy_from_slice(&x);
    let mut ys2 = ys.clone();
    ys2[i] = y;
    (
        NormalizedDataset::new(d, xs, ys, task).expect("valid records"),
        NormalizedDataset::new(d, xs2, ys2, task).expect("valid records"),
    )
}

/// Run every check with `pairs` neighbor pairs per (task, d) and
/// `laplace_draws` Laplace samples.
pub fn run_all(seed: u64, pairs: usize, laplace_draws: usize) -> Vec<CheckResult> {
    let mut rng = FmRng::from_seed(seed);
    let mut out = Vec::new();

    let toy = NormalizedDataset::new(1, vec![1.0, 0.9, -0.5], vec![0.4, 0.3, -1.0], Task::Linear).expect("toy data");
    let obj = build_linear_objective(&toy).expect("linear build");
    let w = minimize_exact(&obj).map(|w| w.0[0]).unwrap_or(f64::NAN);
    let err = (obj.c0() - 1.25)
        .abs()
        .max((obj.linear()[0] + 2.34).abs())
        .max((obj.m_at(0, 0) - 2.06).abs())
        .max((w - 117.0 / 206.0).abs());
    out.push(check("worked-example", err <= 1e-12, format!("max error {err:e}")));

    let mut violations = 0;
    let mut worst = 0.0f64;
    for task in [Task::Linear, Task::Logistic] {
        for d in [1, 5, 8, 11, 14] {
            let delta = Sensitivity::for_task(task, d).expect("d >= 1").delta();
            for _ in 0..pairs {
                let (a, b) = random_neighbors(8, d, task, &mut rng);
                let dist = coefficient_l1_distance(&build_objective(&a).unwrap(), &build_objective(&b).unwrap())
                    .unwrap_or(f64::INFINITY);
                worst = worst.max(dist / delta);
                if dist > delta {
                    violations += 1;
                }
            }
        }
    }
    out.push(check(
        "sensitivity-bound",
        violations == 0,
        format!("{violations} violations, worst distance/delta {worst:.4}"),
    ));

    let (mut sum, mut abs) = (0.0, 0.0);
    for _ in 0..laplace_draws {
        let x = laplace_sample(1.0, &mut rng).expect("positive scale");
        sum += x;
        abs += x.abs();
    }
    let n = laplace_draws as f64;
    let mean_tol = 5.0 * std::f64::consts::SQRT_2 / n.sqrt();
    let (mean, mean_abs) = (sum / n, abs / n);
    out.push(check(
        "laplace-calibration",
        mean.abs() <= mean_tol && (mean_abs - 1.0).abs() <= 0.01,
        format!("mean {mean:.5} (tol {mean_tol:.5}), mean |x| {mean_abs:.5}"),
    ));

    let d = 14;
    let mut m = vec![0.0; d * d];
    for j in 0..d {
        for l in j..d {
            let v = rng.uniform() * 2.0 - 1.0;
            m[j * d + l] = v;
            m[l * d + j] = v;
        }
    }
    let residual = sym_eigendecompose(&m, d)
        .map(|e| e.reconstruct().iter().zip(&m).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY);
    out.push(check("eigen-reconstruction", residual <= 1e-8, format!("residual {residual:e}")));

    let (a, _) = random_neighbors(50, 6, Task::Logistic, &mut rng);
    let obj = build_objective(&a).expect("logistic build");
    let fd_err = gradient_fd_error(&obj, &ModelParams((0..6).map(|_| rng.uniform() * 4.0 - 2.0).collect()));
    out.push(check("gradient-fd", fd_err <= 1e-6, format!("relative error {fd_err:e}")));

    let mut budget = PrivacyBudget::new(1e12).expect("positive");
    let w = fm_train(&toy, 1e12, &mut budget, &mut rng, &FmOptions::default())
        .map(|o| o.omega.0[0])
        .unwrap_or(f64::NAN);
    let gap = (w - 117.0 / 206.0).abs();
    out.push(check("noiseless-limit", gap <= 1e-3, format!("|w - 117/206| = {gap:e}")));
    out
}

fn gradient_fd_error(obj: &QuadraticObjective, w: &ModelParams) -> f64 {
    let g = obj.gradient(w).expect("dims");
    let h = 1e-5;
    let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    (0..w.d())
        .map(|j| {
            let mut p = w.clone();
            let mut m = w.clone();
            p.0[j] += h;
            m.0[j] -= h;
            let fd = (obj.evaluate(&p).unwrap() - obj.evaluate(&m).unwrap()) / (2.0 * h);
            (fd - g[j]).abs() / scale
        })
        .fold(0.0, f64::max)
}
