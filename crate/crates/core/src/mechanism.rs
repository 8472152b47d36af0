//! Coefficient perturbation.
//!
//! Every coefficient of the degree-two objective (the constant, the `d`
//! linear coefficients and the `d(d+1)/2` upper-triangular matrix entries)
//! receives independent `Lap(delta / epsilon)` noise. Draws are taken in the
//! fixed order constant, `a_1..a_d`, then the upper triangle row-major, so a
//! trace of `(seed, scale, draws)` is enough to replay a release.

use serde::{Deserialize, Serialize};

use crate::dataset::NormalizedDataset;
use crate::error::{check_dim, FmError, Result};
use crate::polyobj::{build_objective, ModelParams, QuadraticObjective};
use crate::rng::FmRng;
use crate::solver::{solve_pipeline, PipelineOutcome, RepairReport, Strategy};
use crate::Task;

/// Relative slack when comparing budget amounts, so that `2 * eps` fits a
/// budget of `2 * eps` despite rounding.
const BUDGET_SLACK: f64 = 1e-12;

/// Total privacy allowance and the amount spent so far.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    consumed: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || epsilon.is_nan() {
            return Err(FmError::Config(format!("epsilon must be positive (got {epsilon})")));
        }
        Ok(Self { epsilon, consumed: 0.0 })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn consumed(&self) -> f64 {
        self.consumed
    }

    pub fn remaining(&self) -> f64 {
        (self.epsilon - self.consumed).max(0.0)
    }

    pub fn can_spend(&self, amount: f64) -> bool {
        self.consumed + amount <= self.epsilon * (1.0 + BUDGET_SLACK)
    }

    /// Record `amount` as spent, or fail without changing anything.
    pub fn charge(&mut self, amount: f64) -> Result<()> {
        if !self.can_spend(amount) {
            return Err(FmError::BudgetExhausted {
                requested: amount,
                remaining: self.remaining(),
            });
        }
        self.consumed = (self.consumed + amount).min(self.epsilon);
        Ok(())
    }
}

/// L1 sensitivity of the coefficient vector for a task and dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    delta: f64,
    task: Task,
    d: usize,
}

impl Sensitivity {
    pub fn for_task(task: Task, d: usize) -> Result<Self> {
        match task {
            Task::Linear => sensitivity_linear(d),
            Task::Logistic => sensitivity_logistic(d),
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn d(&self) -> usize {
        self.d
    }
}

fn check_d(d: usize) -> Result<()> {
    if d == 0 {
        Err(FmError::Config("dimension must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// `2 (d + 1)^2`.
pub fn sensitivity_linear(d: usize) -> Result<Sensitivity> {
    check_d(d)?;
    let k = d as f64 + 1.0;
    Ok(Sensitivity {
        delta: 2.0 * k * k,
        task: Task::Linear,
        d,
    })
}

/// `d^2 / 4 + 3 d`, independent of the number of records.
pub fn sensitivity_logistic(d: usize) -> Result<Sensitivity> {
    check_d(d)?;
    let d_f = d as f64;
    Ok(Sensitivity {
        delta: d_f * d_f / 4.0 + 3.0 * d_f,
        task: Task::Logistic,
        d,
    })
}

/// One draw from `Lap(0, scale)` by inverting the CDF at `u` uniform on
/// `(-1/2, 1/2)`: `-scale * sign(u) * ln(1 - 2|u|)`.
pub fn laplace_sample(scale: f64, rng: &mut FmRng) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(FmError::Numeric(format!("Laplace scale must be positive and finite (got {scale})")));
    }
    loop {
        let u = rng.uniform() - 0.5;
        // u == -0.5 would give ln(0)
        if u > -0.5 {
            return Ok(-scale * u.signum() * (1.0 - 2.0 * u.abs()).ln());
        }
    }
}

/// Audit record of one perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTrace {
    pub seed: u64,
    pub scale: f64,
    pub draws: usize,
    pub epsilon: f64,
}

/// Number of independently perturbed coefficients: `1 + d + d(d+1)/2`.
pub fn coefficient_count(d: usize) -> usize {
    1 + d + d * (d + 1) / 2
}

/// Add `Lap(delta / epsilon)` to every coefficient and charge `epsilon`.
/// The budget is checked before any randomness is consumed.
pub fn perturb_objective(
    obj: &QuadraticObjective,
    sens: &Sensitivity,
    epsilon: f64,
    budget: &mut PrivacyBudget,
    rng: &mut FmRng,
) -> Result<(QuadraticObjective, NoiseTrace)> {
    check_dim(sens.d, obj.d())?;
    if !(epsilon > 0.0) || epsilon.is_nan() {
        return Err(FmError::Config(format!("epsilon must be positive (got {epsilon})")));
    }
    budget.charge(epsilon)?;
    let scale = sens.delta / epsilon;
    let d = obj.d();
    let mut noisy = obj.clone();
    let mut draws = 0;
    let mut next = |rng: &mut FmRng| {
        draws += 1;
        laplace_sample(scale, rng)
    };
    noisy.add_c0(next(rng)?);
    for j in 0..d {
        noisy.add_linear(j, next(rng)?);
    }
    for j in 0..d {
        for l in j..d {
            noisy.add_upper(j, l, next(rng)?);
        }
    }
    debug_assert_eq!(draws, coefficient_count(d));
    Ok((
        noisy,
        NoiseTrace {
            seed: rng.seed(),
            scale,
            draws,
            epsilon,
        },
    ))
}

/// L1 distance between coefficient vectors over distinct monomials: the
/// constant, each `w_j`, each `w_j^2`, and each `w_j w_l` (`j < l`) with its
/// full coefficient `2 M[j][l]`.
pub fn coefficient_l1_distance(lhs: &QuadraticObjective, rhs: &QuadraticObjective) -> Result<f64> {
    check_dim(lhs.d(), rhs.d())?;
    let d = lhs.d();
    let mut dist = (lhs.c0() - rhs.c0()).abs();
    dist += lhs.linear().iter().zip(rhs.linear()).map(|(p, q)| (p - q).abs()).sum::<f64>();
    for j in 0..d {
        dist += (lhs.m_at(j, j) - rhs.m_at(j, j)).abs();
        for l in j + 1..d {
            dist += 2.0 * (lhs.m_at(j, l) - rhs.m_at(j, l)).abs();
        }
    }
    Ok(dist)
}

/// Training options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmOptions {
    pub strategy: Strategy,
    /// Overrides the default regularization constant.
    pub lambda: Option<f64>,
}

impl Default for FmOptions {
    fn default() -> Self {
        Self {
            strategy: Strategy::RegularizeTrim,
            lambda: None,
        }
    }
}

/// Result of one private fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmOutcome {
    pub omega: ModelParams,
    pub traces: Vec<NoiseTrace>,
    pub repair: RepairReport,
    pub epsilon_spent: f64,
}

/// Build the task objective, perturb it and minimize the repaired result.
///
/// Spends `epsilon` from `budget`, or `2 * epsilon` when the rerun strategy
/// has to draw a second noisy objective.
pub fn fm_train(
    data: &NormalizedDataset,
    epsilon: f64,
    budget: &mut PrivacyBudget,
    rng: &mut FmRng,
    options: &FmOptions,
) -> Result<FmOutcome> {
    let obj = build_objective(data)?;
    let sens = Sensitivity::for_task(data.task(), data.d())?;
    fm_train_objective(&obj, &sens, epsilon, budget, rng, options)
}

/// [`fm_train`] on an already built objective.
pub fn fm_train_objective(
    obj: &QuadraticObjective,
    sens: &Sensitivity,
    epsilon: f64,
    budget: &mut PrivacyBudget,
    rng: &mut FmRng,
    options: &FmOptions,
) -> Result<FmOutcome> {
    let start = budget.consumed();
    let mut traces = Vec::with_capacity(2);
    let (noisy, trace) = perturb_objective(obj, sens, epsilon, budget, rng)?;
    traces.push(trace);
    let outcome = match solve_pipeline(&noisy, sens, epsilon, options.strategy, options.lambda)? {
        PipelineOutcome::Solved(omega, repair) => (omega, repair),
        PipelineOutcome::NeedsRerun(_) => {
            let (noisy, trace) = perturb_objective(obj, sens, epsilon, budget, rng)?;
            traces.push(trace);
            match solve_pipeline(&noisy, sens, epsilon, options.strategy, options.lambda)? {
                PipelineOutcome::Solved(omega, mut repair) => {
                    repair.reran = true;
                    (omega, repair)
                }
                PipelineOutcome::NeedsRerun(_) => {
                    return Err(FmError::Degenerate(
                        "noisy objective unbounded after one rerun; rerun budget is capped at 2 epsilon".into(),
                    ))
                }
            }
        }
    };
    Ok(FmOutcome {
        omega: outcome.0,
        traces,
        repair: outcome.1,
        epsilon_spent: budget.consumed() - start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::NormalizedDataset;
    use crate::polyobj::build_linear_objective;

    #[test]
    fn sensitivity_values() {
        assert_eq!(sensitivity_linear(1).unwrap().delta(), 8.0);
        assert_eq!(sensitivity_linear(3).unwrap().delta(), 32.0);
        assert_eq!(sensitivity_linear(14).unwrap().delta(), 450.0);
        assert_eq!(sensitivity_logistic(2).unwrap().delta(), 7.0);
        assert_eq!(sensitivity_logistic(4).unwrap().delta(), 16.0);
        assert_eq!(sensitivity_logistic(14).unwrap().delta(), 91.0);
        assert!(sensitivity_linear(0).is_err());
    }

    #[test]
    fn laplace_rejects_bad_scale() {
        let mut rng = FmRng::from_seed(0);
        assert!(laplace_sample(0.0, &mut rng).is_err());
        assert!(laplace_sample(-1.0, &mut rng).is_err());
        assert!(laplace_sample(f64::NAN, &mut rng).is_err());
        assert_eq!(rng.uniform_draws(), 0);
    }

    #[test]
    fn laplace_deterministic() {
        let mut a = FmRng::from_seed(5);
        let mut b = FmRng::from_seed(5);
        for _ in 0..50 {
            assert_eq!(
                laplace_sample(2.0, &mut a).unwrap().to_bits(),
                laplace_sample(2.0, &mut b).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn laplace_moments() {
        let mut rng = FmRng::from_seed(2024);
        let n = 200_000;
        let (mut sum, mut abs, mut sq) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = laplace_sample(1.5, &mut rng).unwrap();
            sum += x;
            abs += x.abs();
            sq += x * x;
        }
        let n = n as f64;
        assert!((sum / n).abs() < 5.0 * (2.0f64).sqrt() * 1.5 / n.sqrt());
        assert!((abs / n - 1.5).abs() < 0.02 * 1.5);
        assert!((sq / n - 2.0 * 1.5 * 1.5).abs() < 0.05 * 4.5);
    }

    fn toy() -> QuadraticObjective {
        let data = NormalizedDataset::new(1, vec![1.0, 0.9, -0.5], vec![0.4, 0.3, -1.0], Task::Linear).unwrap();
        build_linear_objective(&data).unwrap()
    }

    #[test]
    fn near_noiseless_perturbation() {
        let obj = toy();
        let sens = sensitivity_linear(1).unwrap();
        let mut budget = PrivacyBudget::new(1e12).unwrap();
        let (noisy, trace) = perturb_objective(&obj, &sens, 1e12, &mut budget, &mut FmRng::from_seed(3)).unwrap();
        assert!((noisy.c0() - obj.c0()).abs() < 1e-6);
        assert!((noisy.linear()[0] - obj.linear()[0]).abs() < 1e-6);
        assert!((noisy.m_at(0, 0) - obj.m_at(0, 0)).abs() < 1e-6);
        assert_eq!(trace.draws, 3);
        assert_eq!(trace.seed, 3);
        assert_eq!(budget.consumed(), 1e12);
    }

    #[test]
    fn draw_count_and_symmetry() {
        let obj = QuadraticObjective::zero(2);
        let sens = sensitivity_linear(2).unwrap();
        let mut budget = PrivacyBudget::new(1.0).unwrap();
        let mut rng = FmRng::from_seed(9);
        let (noisy, trace) = perturb_objective(&obj, &sens, 1.0, &mut budget, &mut rng).unwrap();
        assert_eq!(rng.uniform_draws(), 6);
        assert_eq!(trace.draws, 6);
        assert_eq!(noisy.m_at(0, 1), noisy.m_at(1, 0));
        assert_eq!(trace.scale, 18.0);
    }

    #[test]
    fn draw_order_is_constant_linear_upper_triangle() {
        let obj = QuadraticObjective::zero(3);
        let sens = sensitivity_linear(3).unwrap();
        let mut budget = PrivacyBudget::new(1.0).unwrap();
        let (noisy, _) = perturb_objective(&obj, &sens, 1.0, &mut budget, &mut FmRng::from_seed(4)).unwrap();
        let mut replay = FmRng::from_seed(4);
        let mut draw = || laplace_sample(32.0, &mut replay).unwrap();
        assert_eq!(noisy.c0(), draw());
        for j in 0..3 {
            assert_eq!(noisy.linear()[j], draw());
        }
        for j in 0..3 {
            for l in j..3 {
                assert_eq!(noisy.m_at(j, l), draw());
            }
        }
    }

    #[test]
    fn same_seed_same_noise() {
        let obj = toy();
        let sens = sensitivity_linear(1).unwrap();
        let run = || {
            let mut b = PrivacyBudget::new(1.0).unwrap();
            perturb_objective(&obj, &sens, 1.0, &mut b, &mut FmRng::from_seed(10)).unwrap().0
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn insufficient_budget_fails_before_sampling() {
        let obj = toy();
        let sens = sensitivity_linear(1).unwrap();
        let mut budget = PrivacyBudget::new(1.0).unwrap();
        let mut rng = FmRng::from_seed(1);
        perturb_objective(&obj, &sens, 0.6, &mut budget, &mut rng).unwrap();
        let draws = rng.uniform_draws();
        let err = perturb_objective(&obj, &sens, 0.6, &mut budget, &mut rng).unwrap_err();
        assert!(matches!(err, FmError::BudgetExhausted { .. }));
        assert_eq!(rng.uniform_draws(), draws);
        assert!((budget.consumed() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let mut budget = PrivacyBudget::new(1.0).unwrap();
        let sens = sensitivity_linear(2).unwrap();
        assert!(perturb_objective(&toy(), &sens, 1.0, &mut budget, &mut FmRng::from_seed(0)).is_err());
        assert_eq!(budget.consumed(), 0.0);
    }

    #[test]
    fn budget_rules() {
        assert!(PrivacyBudget::new(0.0).is_err());
        assert!(PrivacyBudget::new(f64::NAN).is_err());
        let mut b = PrivacyBudget::new(1.6).unwrap();
        b.charge(0.8).unwrap();
        b.charge(0.8).unwrap();
        assert_eq!(b.remaining(), 0.0);
        assert!(b.charge(1e-6).is_err());
    }

    #[test]
    fn l1_distance_basics() {
        let a = toy();
        assert_eq!(coefficient_l1_distance(&a, &a).unwrap(), 0.0);
        let b = QuadraticObjective::from_parts(a.c0() + 1.25, a.linear().to_vec(), a.quadratic().to_vec()).unwrap();
        assert!((coefficient_l1_distance(&a, &b).unwrap() - 1.25).abs() < 1e-15);
        let c = QuadraticObjective::from_parts(0.0, vec![0.0, 0.0], vec![0.0, 0.5, 0.5, 0.0]).unwrap();
        assert_eq!(coefficient_l1_distance(&c, &QuadraticObjective::zero(2)).unwrap(), 1.0);
        assert!(coefficient_l1_distance(&a, &c).is_err());
    }

    #[test]
    fn toy_train_noiseless() {
        let data = NormalizedDataset::new(1, vec![1.0, 0.9, -0.5], vec![0.4, 0.3, -1.0], Task::Linear).unwrap();
        let mut budget = PrivacyBudget::new(1e12).unwrap();
        let out = fm_train(&data, 1e12, &mut budget, &mut FmRng::from_seed(0), &FmOptions::default()).unwrap();
        assert!((out.omega.0[0] - 117.0 / 206.0).abs() < 1e-4);
        assert_eq!(out.epsilon_spent, 1e12);
    }

    #[test]
    fn train_is_deterministic() {
        let spec = crate::dataset::SynthSpec {
            n: 500,
            d: 4,
            task: Task::Linear,
            omega: vec![0.5, -0.5, 1.0, 0.0],
            noise: 0.1,
        };
        let data = crate::dataset::synth_generate(&spec, 1).unwrap();
        let run = || {
            let mut b = PrivacyBudget::new(0.8).unwrap();
            fm_train(&data, 0.8, &mut b, &mut FmRng::from_seed(6), &FmOptions::default()).unwrap()
        };
        assert_eq!(run(), run());
    }
}
