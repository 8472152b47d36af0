//! Objectives as polynomials of degree at most two in the model parameters.
//!
//! An objective is stored as `f(w) = c0 + a.w + w' M w` with `M` symmetric.
//! The coefficient of a cross monomial `w_j w_l` (`j != l`) is therefore
//! `2 * M[j][l]`, split evenly between the two mirrored entries.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::NormalizedDataset;
use crate::error::{check_dim, FmError, Result};
use crate::Task;

/// Model parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelParams(pub Vec<f64>);

impl ModelParams {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn d(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        dot(&self.0, x)
    }
}

impl From<Vec<f64>> for ModelParams {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `c0 + a.w + w' M w`, with `M` d×d symmetric stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticObjective {
    d: usize,
    c0: f64,
    a: Vec<f64>,
    m: Vec<f64>,
}

impl QuadraticObjective {
    pub fn zero(d: usize) -> Self {
        Self {
            d,
            c0: 0.0,
            a: vec![0.0; d],
            m: vec![0.0; d * d],
        }
    }

    /// Build from parts. The upper triangle of `m` is authoritative and is
    /// mirrored into the lower triangle.
    pub fn from_parts(c0: f64, a: Vec<f64>, mut m: Vec<f64>) -> Result<Self> {
        let d = a.len();
        if d == 0 {
            return Err(FmError::Numeric("objective dimension must be at least 1".into()));
        }
        check_dim(d * d, m.len())?;
        for j in 0..d {
            for l in 0..j {
                m[j * d + l] = m[l * d + j];
            }
        }
        if !c0.is_finite() || a.iter().chain(&m).any(|v| !v.is_finite()) {
            return Err(FmError::Numeric("objective coefficients must be finite".into()));
        }
        Ok(Self { d, c0, a, m })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn linear(&self) -> &[f64] {
        &self.a
    }

    /// Row-major d×d quadratic matrix.
    pub fn quadratic(&self) -> &[f64] {
        &self.m
    }

    pub fn m_at(&self, j: usize, l: usize) -> f64 {
        self.m[j * self.d + l]
    }

    pub fn is_finite(&self) -> bool {
        self.c0.is_finite() && self.a.iter().chain(&self.m).all(|v| v.is_finite())
    }

    pub(crate) fn add_c0(&mut self, v: f64) {
        self.c0 += v;
    }

    pub(crate) fn add_linear(&mut self, j: usize, v: f64) {
        self.a[j] += v;
    }

    /// Add `v` to matrix entry `(j, l)` and its mirror, `j <= l`.
    pub(crate) fn add_upper(&mut self, j: usize, l: usize, v: f64) {
        self.m[j * self.d + l] += v;
        if j != l {
            self.m[l * self.d + j] = self.m[j * self.d + l];
        }
    }

    /// Accumulate `scale * w w'` into the upper triangle only.
    fn add_outer_upper(&mut self, w: &[f64], scale: f64) {
        let d = self.d;
        for j in 0..d {
            let sj = scale * w[j];
            for l in j..d {
                self.m[j * d + l] += sj * w[l];
            }
        }
    }

    fn mirror_upper(&mut self) {
        let d = self.d;
        for j in 0..d {
            for l in 0..j {
                self.m[j * d + l] = self.m[l * d + j];
            }
        }
    }

    #[cfg(feature = "parallel")]
    fn merge(mut self, other: &Self) -> Self {
        self.c0 += other.c0;
        self.a.iter_mut().zip(&other.a).for_each(|(x, y)| *x += y);
        self.m.iter_mut().zip(&other.m).for_each(|(x, y)| *x += y);
        self
    }

    pub fn evaluate(&self, omega: &ModelParams) -> Result<f64> {
        check_dim(self.d, omega.d())?;
        let w = omega.as_slice();
        let quad: f64 = (0..self.d).map(|j| w[j] * dot(&self.m[j * self.d..(j + 1) * self.d], w)).sum();
        Ok(self.c0 + dot(&self.a, w) + quad)
    }

    /// `a + 2 M w`.
    pub fn gradient(&self, omega: &ModelParams) -> Result<Vec<f64>> {
        check_dim(self.d, omega.d())?;
        let w = omega.as_slice();
        Ok((0..self.d)
            .map(|j| self.a[j] + 2.0 * dot(&self.m[j * self.d..(j + 1) * self.d], w))
            .collect())
    }
}

/// Exact squared-error objective `sum_i (y_i - x_i.w)^2`:
/// `c0 = sum y^2`, `a = -2 sum y x`, `M = sum x x'`.
pub fn build_linear_objective(data: &NormalizedDataset) -> Result<QuadraticObjective> {
    expect_task(data, Task::Linear)?;
    let mut obj = QuadraticObjective::zero(data.d());
    for (x, y) in data.records() {
        obj.c0 += y * y;
        for (aj, xj) in obj.a.iter_mut().zip(x) {
            *aj += -2.0 * y * xj;
        }
        obj.add_outer_upper(x, 1.0);
    }
    obj.mirror_upper();
    Ok(obj)
}

/// Per-record affine form `g(t, w) = weights(t).w + offset(t)`. The closure
/// writes the weights for record `(x, y)` into the output slice and returns
/// the offset.
pub type AffineMap = Arc<dyn Fn(&[f64], f64, &mut [f64]) -> f64 + Send + Sync>;

/// One `f_l(g_l(t, w))` term together with `f_l` and its first two
/// derivatives at the expansion point.
#[derive(Clone)]
pub struct CostComponent {
    pub g: AffineMap,
    pub expansion_point: f64,
    /// `f(z), f'(z), f''(z)`.
    pub derivatives: [f64; 3],
}

impl std::fmt::Debug for CostComponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CostComponent")
            .field("expansion_point", &self.expansion_point)
            .field("derivatives", &self.derivatives)
            .finish_non_exhaustive()
    }
}

/// A per-record cost written as `sum_l f_l(g_l(t, w))`.
#[derive(Debug, Clone)]
pub struct CostDecomposition {
    components: Vec<CostComponent>,
}

impl CostDecomposition {
    pub fn new(components: Vec<CostComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(FmError::Numeric("cost decomposition needs at least one component".into()));
        }
        for c in &components {
            if !c.expansion_point.is_finite() || c.derivatives.iter().any(|v| !v.is_finite()) {
                return Err(FmError::Numeric("cost derivatives and expansion points must be finite".into()));
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[CostComponent] {
        &self.components
    }

    /// Logistic loss `log(1 + exp(x.w)) - y x.w` expanded around zero:
    /// `f1 = log(1 + e^z)` on `g1 = x.w`, `f2 = -z` on `g2 = y x.w`.
    pub fn logistic() -> Self {
        let g1: AffineMap = Arc::new(|x, _y, w| {
            w.copy_from_slice(x);
            0.0
        });
        let g2: AffineMap = Arc::new(|x, y, w| {
            w.iter_mut().zip(x).for_each(|(wj, xj)| *wj = y * xj);
            0.0
        });
        Self {
            components: vec![
                CostComponent {
                    g: g1,
                    expansion_point: 0.0,
                    derivatives: [std::f64::consts::LN_2, 0.5, 0.25],
                },
                CostComponent {
                    g: g2,
                    expansion_point: 0.0,
                    derivatives: [0.0, -1.0, 0.0],
                },
            ],
        }
    }
}

/// Degree-two Taylor truncation of `sum_i sum_l f_l(g_l(t_i, w))`, each
/// `f_l` expanded at its own point `z_l`.
///
/// With `g = v.w + b` and `u = b - z`:
/// `f(z) + f'(z)(v.w + u) + f''(z)/2 (v.w + u)^2`.
pub fn build_taylor_objective(decomp: &CostDecomposition, data: &NormalizedDataset) -> Result<QuadraticObjective> {
    let d = data.d();
    let mut obj = QuadraticObjective::zero(d);
    let mut v = vec![0.0; d];
    for (x, y) in data.records() {
        for comp in &decomp.components {
            let b = (comp.g)(x, y, &mut v);
            let u = b - comp.expansion_point;
            let [f0, f1, f2] = comp.derivatives;
            let half = 0.5 * f2;
            obj.c0 += f0 + f1 * u + half * u * u;
            let lin = f1 + f2 * u;
            for (aj, vj) in obj.a.iter_mut().zip(&v) {
                *aj += lin * vj;
            }
            if half != 0.0 {
                obj.add_outer_upper(&v, half);
            }
        }
    }
    obj.mirror_upper();
    Ok(obj)
}

/// Closed form of the truncated logistic objective:
/// `c0 = n log 2`, `a = sum (1/2 - y) x`, `M = (1/8) sum x x'`.
pub fn build_logistic_taylor_objective(data: &NormalizedDataset) -> Result<QuadraticObjective> {
    expect_task(data, Task::Logistic)?;
    let mut obj = QuadraticObjective::zero(data.d());
    obj.c0 = data.n() as f64 * std::f64::consts::LN_2;
    for (x, y) in data.records() {
        let coef = 0.5 - y;
        for (aj, xj) in obj.a.iter_mut().zip(x) {
            *aj += coef * xj;
        }
        obj.add_outer_upper(x, 0.125);
    }
    obj.mirror_upper();
    Ok(obj)
}

/// The objective for `data`'s task: exact for linear, truncated for logistic.
pub fn build_objective(data: &NormalizedDataset) -> Result<QuadraticObjective> {
    match data.task() {
        Task::Linear => build_linear_objective(data),
        Task::Logistic => build_logistic_taylor_objective(data),
    }
}

/// Build over disjoint record chunks and add the partial sums.
#[cfg(feature = "parallel")]
pub fn build_objective_parallel(data: &NormalizedDataset, chunk: usize) -> Result<QuadraticObjective> {
    use rayon::prelude::*;
    let chunk = chunk.max(1);
    let idx: Vec<usize> = (0..data.n()).collect();
    let parts: Vec<QuadraticObjective> = idx
        .par_chunks(chunk)
        .map(|c| data.subset(c).and_then(|s| build_objective(&s)))
        .collect::<Result<_>>()?;
    Ok(parts
        .iter()
        .fold(QuadraticObjective::zero(data.d()), |acc, p| acc.merge(p)))
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Untruncated loss `sum_i f(t_i, w)` for the given task.
pub fn true_loss(data: &NormalizedDataset, omega: &ModelParams, task: Task) -> Result<f64> {
    check_dim(data.d(), omega.d())?;
    Ok(match task {
        Task::Linear => data
            .records()
            .map(|(x, y)| {
                let r = y - omega.dot(x);
                r * r
            })
            .sum(),
        Task::Logistic => data
            .records()
            .map(|(x, y)| {
                let s = omega.dot(x);
                softplus(s) - y * s
            })
            .sum(),
    })
}

/// Gradient of [`true_loss`] for the logistic task.
pub fn logistic_loss_gradient(data: &NormalizedDataset, omega: &ModelParams) -> Result<Vec<f64>> {
    check_dim(data.d(), omega.d())?;
    let mut g = vec![0.0; data.d()];
    for (x, y) in data.records() {
        let r = crate::dataset::sigmoid(omega.dot(x)) - y;
        g.iter_mut().zip(x).for_each(|(gj, xj)| *gj += r * xj);
    }
    Ok(g)
}

fn expect_task(data: &NormalizedDataset, task: Task) -> Result<()> {
    if data.task() == task {
        Ok(())
    } else {
        Err(FmError::Data(format!("expected a {task} dataset, got {}", data.task())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::FmRng;
    use proptest::prelude::*;

    pub(crate) fn toy() -> NormalizedDataset {
        NormalizedDataset::new(1, vec![1.0, 0.9, -0.5], vec![0.4, 0.3, -1.0], Task::Linear).unwrap()
    }

    fn random_data(n: usize, d: usize, task: Task, seed: u64) -> NormalizedDataset {
        let mut rng = FmRng::from_seed(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let row: Vec<f64> = (0..d).map(|_| rng.uniform() * 2.0 - 1.0).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            x.extend(row.iter().map(|v| v / norm));
            y.push(match task {
                Task::Linear => rng.uniform() * 2.0 - 1.0,
                Task::Logistic => (rng.uniform() < 0.5) as u8 as f64,
            });
        }
        NormalizedDataset::new(d, x, y, task).unwrap()
    }

    fn random_omega(d: usize, rng: &mut FmRng) -> ModelParams {
        ModelParams((0..d).map(|_| rng.uniform() * 6.0 - 3.0).collect())
    }

    #[test]
    fn toy_linear_coefficients() {
        let obj = build_linear_objective(&toy()).unwrap();
        assert!((obj.c0() - 1.25).abs() <= 1e-12);
        assert!((obj.linear()[0] + 2.34).abs() <= 1e-12);
        assert!((obj.m_at(0, 0) - 2.06).abs() <= 1e-12);
    }

    #[test]
    fn zero_tuple() {
        let data = NormalizedDataset::new(1, vec![0.0], vec![0.0], Task::Linear).unwrap();
        assert_eq!(build_linear_objective(&data).unwrap(), QuadraticObjective::zero(1));
    }

    #[test]
    fn linear_build_matches_brute_force() {
        let data = random_data(5, 3, Task::Linear, 11);
        let obj = build_linear_objective(&data).unwrap();
        let mut rng = FmRng::from_seed(12);
        for _ in 0..10 {
            let w = random_omega(3, &mut rng);
            let direct: f64 = (0..5)
                .map(|i| {
                    let x = data.row(i);
                    let r = data.target(i) - (x[0] * w.0[0] + x[1] * w.0[1] + x[2] * w.0[2]);
                    r * r
                })
                .sum();
            assert!((obj.evaluate(&w).unwrap() - direct).abs() <= 1e-10);
        }
    }

    #[test]
    fn null_cost_gives_zero_objective() {
        let g: AffineMap = Arc::new(|x, _, w| {
            w.copy_from_slice(x);
            0.3
        });
        let decomp = CostDecomposition::new(vec![CostComponent {
            g,
            expansion_point: 1.0,
            derivatives: [0.0; 3],
        }])
        .unwrap();
        let obj = build_taylor_objective(&decomp, &random_data(7, 2, Task::Linear, 1)).unwrap();
        assert_eq!(obj, QuadraticObjective::zero(2));
    }

    #[test]
    fn single_tuple_logistic_expansion() {
        // log 2 + w/2 + w^2/8 - w
        let data = NormalizedDataset::new(1, vec![1.0], vec![1.0], Task::Logistic).unwrap();
        let ln2 = std::f64::consts::LN_2;
        for obj in [
            build_taylor_objective(&CostDecomposition::logistic(), &data).unwrap(),
            build_logistic_taylor_objective(&data).unwrap(),
        ] {
            assert_eq!(obj.c0(), ln2);
            assert_eq!(obj.linear(), &[-0.5]);
            assert_eq!(obj.quadratic(), &[0.125]);
            for w in [-2.0, 0.0, 0.7] {
                let v = obj.evaluate(&ModelParams(vec![w])).unwrap();
                assert!((v - (ln2 + w / 2.0 + w * w / 8.0 - w)).abs() < 1e-15);
            }
        }
        let data0 = NormalizedDataset::new(1, vec![1.0], vec![0.0], Task::Logistic).unwrap();
        assert_eq!(build_logistic_taylor_objective(&data0).unwrap().linear(), &[0.5]);
    }

    #[test]
    fn generic_taylor_matches_logistic_closed_form() {
        let data = random_data(300, 6, Task::Logistic, 4);
        let a = build_taylor_objective(&CostDecomposition::logistic(), &data).unwrap();
        let b = build_logistic_taylor_objective(&data).unwrap();
        assert!((a.c0() - b.c0()).abs() <= 1e-12 * b.c0().abs());
        for (p, q) in a.linear().iter().zip(b.linear()) {
            assert!((p - q).abs() <= 1e-12 * (1.0 + q.abs()));
        }
        assert_eq!(a.quadratic(), b.quadratic());
    }

    #[test]
    fn generic_taylor_nonzero_expansion_point() {
        // f(z) = z^2 expanded anywhere is exact, so g = x.w - y recovers least squares.
        let g: AffineMap = Arc::new(|x, y, w| {
            w.copy_from_slice(x);
            -y
        });
        let decomp = CostDecomposition::new(vec![CostComponent {
            g,
            expansion_point: 0.7,
            derivatives: [0.49, 1.4, 2.0],
        }])
        .unwrap();
        let data = random_data(20, 3, Task::Linear, 8);
        let t = build_taylor_objective(&decomp, &data).unwrap();
        let exact = build_linear_objective(&data).unwrap();
        let mut rng = FmRng::from_seed(3);
        for _ in 0..5 {
            let w = random_omega(3, &mut rng);
            let (p, q) = (t.evaluate(&w).unwrap(), exact.evaluate(&w).unwrap());
            assert!((p - q).abs() <= 1e-10 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn logistic_objective_at_zero() {
        let data = random_data(37, 4, Task::Logistic, 2);
        let obj = build_logistic_taylor_objective(&data).unwrap();
        let z = ModelParams::zeros(4);
        let n_ln2 = 37.0 * std::f64::consts::LN_2;
        assert!((obj.evaluate(&z).unwrap() - n_ln2).abs() < 1e-12);
        assert!((true_loss(&data, &z, Task::Logistic).unwrap() - n_ln2).abs() < 1e-12);
    }

    #[test]
    fn evaluate_toy_at_minimizer() {
        let obj = build_linear_objective(&toy()).unwrap();
        let w = ModelParams(vec![117.0 / 206.0]);
        let expected = 1.25 - 2.34 * 2.34 / (4.0 * 2.06);
        assert!((obj.evaluate(&w).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.585_485).abs() < 1e-6);
        assert!(obj.gradient(&w).unwrap()[0].abs() < 1e-12);
        let direct = true_loss(&toy(), &w, Task::Linear).unwrap();
        assert!((direct - expected).abs() < 1e-12);
    }

    #[test]
    fn evaluate_basics() {
        let obj = build_linear_objective(&random_data(4, 3, Task::Linear, 0)).unwrap();
        assert_eq!(obj.evaluate(&ModelParams::zeros(3)).unwrap(), obj.c0());
        assert_eq!(obj.gradient(&ModelParams::zeros(3)).unwrap(), obj.linear());
        assert_eq!(QuadraticObjective::zero(2).evaluate(&ModelParams(vec![3.0, -1.0])).unwrap(), 0.0);
        assert!(matches!(
            obj.evaluate(&ModelParams::zeros(2)),
            Err(FmError::Dimension { expected: 3, got: 2 })
        ));
        assert!(obj.gradient(&ModelParams::zeros(4)).is_err());
    }

    #[test]
    fn logistic_true_loss_far_from_origin() {
        let data = NormalizedDataset::new(1, vec![1.0], vec![1.0], Task::Logistic).unwrap();
        let v = true_loss(&data, &ModelParams(vec![10.0]), Task::Logistic).unwrap();
        let expected = (1.0 + 10f64.exp()).ln() - 10.0;
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 4.54e-5).abs() < 1e-7);
    }

    #[test]
    fn from_parts_mirrors_upper() {
        let obj = QuadraticObjective::from_parts(0.0, vec![0.0, 0.0], vec![1.0, 2.0, 9.0, 3.0]).unwrap();
        assert_eq!(obj.m_at(1, 0), 2.0);
        assert!(QuadraticObjective::from_parts(f64::NAN, vec![0.0], vec![1.0]).is_err());
        assert!(QuadraticObjective::from_parts(0.0, vec![0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn task_mismatch_rejected() {
        assert!(build_linear_objective(&random_data(3, 2, Task::Logistic, 0)).is_err());
        assert!(build_logistic_taylor_objective(&toy()).is_err());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn chunked_build_matches_serial() {
        let data = random_data(1000, 4, Task::Linear, 21);
        let a = build_objective(&data).unwrap();
        let b = build_objective_parallel(&data, 97).unwrap();
        for (p, q) in a.quadratic().iter().zip(b.quadratic()) {
            assert!((p - q).abs() < 1e-10);
        }
        assert!((a.c0() - b.c0()).abs() < 1e-10);
    }

    fn central_difference(obj: &QuadraticObjective, w: &ModelParams, h: f64) -> Vec<f64> {
        (0..w.d())
            .map(|j| {
                let mut p = w.clone();
                let mut m = w.clone();
                p.0[j] += h;
                m.0[j] -= h;
                (obj.evaluate(&p).unwrap() - obj.evaluate(&m).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn builds_are_symmetric_and_gradients_match_fd(
            n in 1usize..40, d in 1usize..7, seed in any::<u64>(), logistic in any::<bool>()
        ) {
            let task = if logistic { Task::Logistic } else { Task::Linear };
            let data = random_data(n, d, task, seed);
            let obj = build_objective(&data).unwrap();
            for j in 0..d {
                for l in 0..d {
                    prop_assert_eq!(obj.m_at(j, l).to_bits(), obj.m_at(l, j).to_bits());
                }
            }
            let mut rng = FmRng::from_seed(seed ^ 0xABCD);
            let w = random_omega(d, &mut rng);
            let g = obj.gradient(&w).unwrap();
            let fd = central_difference(&obj, &w, 1e-5);
            let scale = g.iter().map(|v| v.abs()).fold(1.0, f64::max);
            for (p, q) in g.iter().zip(&fd) {
                prop_assert!((p - q).abs() <= 1e-6 * scale, "{} vs {}", p, q);
            }
        }

        #[test]
        fn linear_build_is_exact(n in 1usize..60, d in 1usize..6, seed in any::<u64>()) {
            let data = random_data(n, d, Task::Linear, seed);
            let obj = build_linear_objective(&data).unwrap();
            let mut rng = FmRng::from_seed(seed.wrapping_add(1));
            let w = random_omega(d, &mut rng);
            let v = obj.evaluate(&w).unwrap();
            let t = true_loss(&data, &w, Task::Linear).unwrap();
            prop_assert!((v - t).abs() <= n as f64 * 1e-10 * (1.0 + t.abs()));
        }
    }
}
