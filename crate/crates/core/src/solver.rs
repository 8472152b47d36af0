//! Repair and minimization of noisy quadratic objectives.
//!
//! After perturbation the quadratic matrix may have non-positive eigenvalues,
//! in which case the objective has no minimum. The default repair adds
//! `lambda I` to the matrix and then drops every eigen-direction whose
//! eigenvalue is still not positive. The surrogate
//!
//! ```text
//! f(w) = w' (Q'ᵀ Λ' Q') w + a' (Q'ᵀ Q') w + c0
//! ```
//!
//! is minimized in `V = Q' w` and mapped back with `w = Q'ᵀ V`, the
//! minimum-norm solution of `Q' w = V`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, FmError, Result};
use crate::mechanism::Sensitivity;
use crate::polyobj::{dot, ModelParams, QuadraticObjective};

/// Sweep cap for the cyclic Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;
/// Convergence threshold on the off-diagonal Frobenius norm, relative to the
/// Frobenius norm of the input.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;
/// Eigenvalues at or below `TRIM_RELATIVE_TOL * max(1, max|M_jl|)` count as
/// non-positive.
pub const TRIM_RELATIVE_TOL: f64 = 1e-10;

/// `M = Qᵀ diag(lambdas) Q`, rows of `Q` being unit eigenvectors, eigenvalues
/// sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    d: usize,
    q: Vec<f64>,
    lambdas: Vec<f64>,
}

impl EigenDecomposition {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambdas
    }

    /// Row-major d×d; row `i` is the eigenvector of `eigenvalues()[i]`.
    pub fn eigenvectors(&self) -> &[f64] {
        &self.q
    }

    pub fn eigenvector(&self, i: usize) -> &[f64] {
        &self.q[i * self.d..(i + 1) * self.d]
    }

    /// `Qᵀ Λ Q`, row-major.
    pub fn reconstruct(&self) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; d * d];
        for (i, &lam) in self.lambdas.iter().enumerate() {
            let v = self.eigenvector(i);
            for j in 0..d {
                for l in 0..d {
                    out[j * d + l] += lam * v[j] * v[l];
                }
            }
        }
        out
    }
}

/// Cyclic Jacobi rotations on a symmetric row-major d×d matrix.
pub fn sym_eigendecompose(m: &[f64], d: usize) -> Result<EigenDecomposition> {
    check_dim(d * d, m.len())?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(FmError::Numeric("matrix has non-finite entries".into()));
    }
    for j in 0..d {
        for l in 0..j {
            if m[j * d + l] != m[l * d + j] {
                return Err(FmError::Numeric(format!("matrix is not symmetric at ({j}, {l})")));
            }
        }
    }
    let mut a = m.to_vec();
    // columns of v are eigenvectors
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = OFF_DIAGONAL_TOL * norm;
    let off = |a: &[f64]| {
        let mut s = 0.0;
        for p in 0..d {
            for q in p + 1..d {
                s += 2.0 * a[p * d + q] * a[p * d + q];
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let residual = off(&a);
        if residual <= threshold {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(FmError::NoConvergence { sweeps, residual });
        }
        sweeps += 1;
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let (akp, akq) = (a[k * d + p], a[k * d + q]);
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let (apk, aqk) = (a[p * d + k], a[q * d + k]);
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                a[p * d + q] = 0.0;
                a[q * d + p] = 0.0;
                for k in 0..d {
                    let (vkp, vkq) = (v[k * d + p], v[k * d + q]);
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[j * d + j].total_cmp(&a[i * d + i]));
    let lambdas = order.iter().map(|&i| a[i * d + i]).collect();
    let mut q = Vec::with_capacity(d * d);
    for &i in &order {
        q.extend((0..d).map(|k| v[k * d + i]));
    }
    Ok(EigenDecomposition { d, q, lambdas })
}

/// Four standard deviations of `Lap(delta / epsilon)`: `4 sqrt(2) delta / epsilon`.
/// An infinite epsilon gives zero.
pub fn default_lambda(sens: &Sensitivity, epsilon: f64) -> f64 {
    4.0 * std::f64::consts::SQRT_2 * sens.delta() / epsilon
}

/// `M + lambda I`.
pub fn regularize(obj: &QuadraticObjective, lambda: f64) -> Result<QuadraticObjective> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(FmError::Config(format!("lambda must be finite and non-negative (got {lambda})")));
    }
    let d = obj.d();
    let mut m = obj.quadratic().to_vec();
    for j in 0..d {
        m[j * d + j] += lambda;
    }
    QuadraticObjective::from_parts(obj.c0(), obj.linear().to_vec(), m)
}

/// Objective restricted to its positive eigen-directions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrimmedObjective {
    d: usize,
    qp: Vec<f64>,
    lambdas_p: Vec<f64>,
    a: Vec<f64>,
    c0: f64,
    k: usize,
}

impl TrimmedObjective {
    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of removed eigenvalues.
    pub fn removed(&self) -> usize {
        self.k
    }

    pub fn retained_eigenvalues(&self) -> &[f64] {
        &self.lambdas_p
    }

    /// Row-major (d-k)×d.
    pub fn retained_vectors(&self) -> &[f64] {
        &self.qp
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.qp[i * self.d..(i + 1) * self.d]
    }

    /// `Q' x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        (0..self.lambdas_p.len()).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Q'ᵀ v`.
    pub fn lift(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for (i, vi) in v.iter().enumerate() {
            out.iter_mut().zip(self.row(i)).for_each(|(o, r)| *o += vi * r);
        }
        out
    }

    /// `V' Λ' V + (Q' a).V + c0`.
    pub fn reduced_value(&self, v: &[f64]) -> f64 {
        let qa = self.project(&self.a);
        let quad: f64 = v.iter().zip(&self.lambdas_p).map(|(x, l)| l * x * x).sum();
        quad + dot(&qa, v) + self.c0
    }

    /// Gradient of [`Self::reduced_value`].
    pub fn reduced_gradient(&self, v: &[f64]) -> Vec<f64> {
        let qa = self.project(&self.a);
        v.iter().zip(&self.lambdas_p).zip(&qa).map(|((x, l), g)| 2.0 * l * x + g).collect()
    }

    /// Surrogate objective value at `w`.
    pub fn evaluate(&self, omega: &ModelParams) -> Result<f64> {
        check_dim(self.d, omega.d())?;
        Ok(self.reduced_value(&self.project(omega.as_slice())))
    }

    /// `Q'ᵀ Λ' Q'`, row-major d×d.
    pub fn surrogate_matrix(&self) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; d * d];
        for (i, &lam) in self.lambdas_p.iter().enumerate() {
            let r = self.row(i);
            for j in 0..d {
                for l in j..d {
                    out[j * d + l] += lam * r[j] * r[l];
                }
            }
        }
        for j in 0..d {
            for l in 0..j {
                out[j * d + l] = out[l * d + j];
            }
        }
        out
    }
}

/// The trim tolerance used when none is given.
pub fn default_trim_tolerance(obj: &QuadraticObjective) -> f64 {
    let max = obj.quadratic().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    TRIM_RELATIVE_TOL * max.max(1.0)
}

/// Drop eigenvalues `<= tolerance` together with their eigenvectors.
pub fn spectral_trim(obj: &QuadraticObjective, tolerance: Option<f64>) -> Result<TrimmedObjective> {
    let tol = tolerance.unwrap_or_else(|| default_trim_tolerance(obj));
    let d = obj.d();
    let eig = sym_eigendecompose(obj.quadratic(), d)?;
    let mut qp = Vec::new();
    let mut lambdas_p = Vec::new();
    for (i, &lam) in eig.eigenvalues().iter().enumerate() {
        if lam > tol {
            lambdas_p.push(lam);
            qp.extend_from_slice(eig.eigenvector(i));
        }
    }
    if lambdas_p.is_empty() {
        return Err(FmError::Degenerate(format!(
            "all {d} eigenvalues <= {tol:e} (largest {:e})",
            eig.eigenvalues().first().copied().unwrap_or(f64::NAN)
        )));
    }
    Ok(TrimmedObjective {
        d,
        k: d - lambdas_p.len(),
        qp,
        lambdas_p,
        a: obj.linear().to_vec(),
        c0: obj.c0(),
    })
}

/// `V* = -(1/2) Λ'^{-1} Q' a`, returned as `w = Q'ᵀ V*`.
pub fn minimize(trimmed: &TrimmedObjective) -> ModelParams {
    let qa = trimmed.project(&trimmed.a);
    let v: Vec<f64> = qa.iter().zip(&trimmed.lambdas_p).map(|(g, l)| -0.5 * g / l).collect();
    ModelParams(trimmed.lift(&v))
}

/// How an unbounded noisy objective is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Add `lambda I`, then drop non-positive eigen-directions.
    RegularizeTrim,
    /// Draw a fresh noisy objective once if the first one is not positive
    /// definite. Costs twice the budget when it fires.
    RerunOnce,
}

impl std::str::FromStr for Strategy {
    type Err = FmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regularize-trim" | "default" => Ok(Strategy::RegularizeTrim),
            "rerun-once" | "rerun" => Ok(Strategy::RerunOnce),
            other => Err(FmError::Config(format!(
                "unknown strategy `{other}` (expected regularize-trim or rerun-once)"
            ))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::RegularizeTrim => "regularize-trim",
            Strategy::RerunOnce => "rerun-once",
        })
    }
}

/// What the repair step did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub strategy: Strategy,
    pub lambda: f64,
    pub tolerance: f64,
    /// Number of trimmed eigen-directions.
    pub trimmed: usize,
    /// Spectrum of the (regularized) matrix before trimming, descending.
    pub eigenvalues: Vec<f64>,
    pub reran: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineOutcome {
    Solved(ModelParams, RepairReport),
    /// Rerun strategy only: the objective is not positive definite and the
    /// caller must draw a new one.
    NeedsRerun(RepairReport),
}

/// Repair and minimize a noisy objective.
pub fn solve_pipeline(
    noisy: &QuadraticObjective,
    sens: &Sensitivity,
    epsilon: f64,
    strategy: Strategy,
    lambda_override: Option<f64>,
) -> Result<PipelineOutcome> {
    check_dim(sens.d(), noisy.d())?;
    match strategy {
        Strategy::RegularizeTrim => {
            let lambda = lambda_override.unwrap_or_else(|| default_lambda(sens, epsilon));
            let repaired = regularize(noisy, lambda)?;
            let tolerance = default_trim_tolerance(&repaired);
            let eig = sym_eigendecompose(repaired.quadratic(), repaired.d())?;
            let trimmed = spectral_trim(&repaired, Some(tolerance))?;
            let omega = minimize(&trimmed);
            if !omega.is_finite() {
                return Err(FmError::Numeric("minimizer is not finite".into()));
            }
            Ok(PipelineOutcome::Solved(
                omega,
                RepairReport {
                    strategy,
                    lambda,
                    tolerance,
                    trimmed: trimmed.removed(),
                    eigenvalues: eig.eigenvalues().to_vec(),
                    reran: false,
                },
            ))
        }
        Strategy::RerunOnce => {
            let tolerance = default_trim_tolerance(noisy);
            let eig = sym_eigendecompose(noisy.quadratic(), noisy.d())?;
            let report = RepairReport {
                strategy,
                lambda: 0.0,
                tolerance,
                trimmed: 0,
                eigenvalues: eig.eigenvalues().to_vec(),
                reran: false,
            };
            if eig.eigenvalues().iter().any(|&l| l <= tolerance) {
                return Ok(PipelineOutcome::NeedsRerun(report));
            }
            let trimmed = spectral_trim(noisy, Some(tolerance))?;
            Ok(PipelineOutcome::Solved(minimize(&trimmed), report))
        }
    }
}

/// Minimize a noise-free objective: trim without regularization.
pub fn minimize_exact(obj: &QuadraticObjective) -> Result<ModelParams> {
    Ok(minimize(&spectral_trim(obj, None)?))
}
