//! Tabular ingestion, normalization against public bounds, target encoding,
//! fold assignment and synthetic data.
//!
//! Bounds are always declared by the caller. Nothing here estimates a bound
//! from the data, and values outside the declared bounds are rejected rather
//! than clamped.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FmError, Result};
use crate::rng::FmRng;
use crate::Task;

/// Slack on the unit-ball constraint to absorb rounding in the normalization.
pub const NORM_SLACK: f64 = 1e-12;

/// A numeric table before normalization. One column is the target.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    column_names: Vec<String>,
    rows: Vec<Vec<f64>>,
    target_index: usize,
}

impl RawDataset {
    pub fn new(column_names: Vec<String>, rows: Vec<Vec<f64>>, target_index: usize) -> Result<Self> {
        let width = column_names.len();
        if width < 2 {
            return Err(FmError::Data(format!(
                "need at least one feature and one target column, got {width} column(s)"
            )));
        }
        if target_index >= width {
            return Err(FmError::Data(format!(
                "target index {target_index} out of range for {width} columns"
            )));
        }
        if rows.is_empty() {
            return Err(FmError::Data("empty table".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(FmError::Data(format!(
                    "row {} has {} values, expected {width}",
                    i + 1,
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(FmError::Data(format!("non-finite value at (row {}, col {})", i + 1, j + 1)));
            }
        }
        Ok(Self {
            column_names,
            rows,
            target_index,
        })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Number of feature columns.
    pub fn d(&self) -> usize {
        self.column_names.len() - 1
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.feature_columns().map(|c| self.column_names[c].as_str()).collect()
    }

    fn feature_columns(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.column_names.len()).filter(move |&c| c != self.target_index)
    }

    /// Feature values of row `i`, target column removed.
    pub fn features(&self, i: usize) -> Vec<f64> {
        self.feature_columns().map(|c| self.rows[i][c]).collect()
    }

    pub fn target(&self, i: usize) -> f64 {
        self.rows[i][self.target_index]
    }
}

/// Parse a comma-separated table with one header row. Rows and columns in
/// error messages are 1-based, the header being row 0.
pub fn parse_table(text: &str, target_index: usize) -> Result<RawDataset> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| FmError::Data("empty table".into()))?;
    let column_names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let width = column_names.len();

    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row_no = i + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(FmError::Data(format!(
                "malformed row {row_no}: {} cells, header has {width}",
                cells.len()
            )));
        }
        let mut row = Vec::with_capacity(width);
        for (j, cell) in cells.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(FmError::MissingValue { row: row_no, col: j + 1 });
            }
            let v: f64 = cell.parse().map_err(|_| {
                FmError::Data(format!("non-numeric value `{cell}` at (row {row_no}, col {})", j + 1))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    RawDataset::new(column_names, rows, target_index)
}

pub fn load_table(path: impl AsRef<Path>, target_index: usize) -> Result<RawDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| FmError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_table(&text, target_index)
}

/// Public per-feature domain bounds `[lower_j, upper_j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl AttributeBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(FmError::Config(format!(
                "bounds need matching non-empty lower/upper lists (got {} and {})",
                lower.len(),
                upper.len()
            )));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(FmError::Config(format!(
                    "bounds for feature {j} must be finite with lower < upper (got [{lo}, {hi}])"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
    }

    pub fn d(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
}

/// Map every feature into `[0, 1/sqrt(d)]` so each row has L2 norm at most one.
/// Returns the n×d matrix row-major.
pub fn normalize_features(raw: &RawDataset, bounds: &AttributeBounds) -> Result<Vec<f64>> {
    let d = raw.d();
    if bounds.d() != d {
        return Err(FmError::Config(format!(
            "{} feature bounds declared for {d} feature columns",
            bounds.d()
        )));
    }
    let root_d = (d as f64).sqrt();
    let names = raw.feature_names();
    let mut out = Vec::with_capacity(raw.n() * d);
    for i in 0..raw.n() {
        for (j, x) in raw.features(i).into_iter().enumerate() {
            let (lo, hi) = (bounds.lower[j], bounds.upper[j]);
            if x < lo || x > hi {
                return Err(FmError::Data(format!(
                    "value {x} of `{}` at row {} outside declared bounds [{lo}, {hi}]",
                    names[j],
                    i + 1
                )));
            }
            out.push((x - lo) / ((hi - lo) * root_d));
        }
    }
    Ok(out)
}

/// How the raw target column becomes a regression target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum TargetEncoding {
    /// Affine map of `[lower, upper]` onto `[-1, 1]`.
    Linear { lower: f64, upper: f64 },
    /// `y > threshold` becomes 1, everything else 0.
    Logistic { threshold: f64 },
}

impl TargetEncoding {
    pub fn task(&self) -> Task {
        match self {
            TargetEncoding::Linear { .. } => Task::Linear,
            TargetEncoding::Logistic { .. } => Task::Logistic,
        }
    }

    pub fn encode(&self, y: f64) -> Result<f64> {
        match *self {
            TargetEncoding::Linear { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(FmError::Config(format!(
                        "target bounds must be finite with lower < upper (got [{lower}, {upper}])"
                    )));
                }
                if y < lower || y > upper {
                    return Err(FmError::Data(format!(
                        "target {y} outside declared bounds [{lower}, {upper}]"
                    )));
                }
                Ok(2.0 * (y - lower) / (upper - lower) - 1.0)
            }
            TargetEncoding::Logistic { threshold } => {
                if !threshold.is_finite() {
                    return Err(FmError::Config("threshold must be finite".into()));
                }
                Ok(if y > threshold { 1.0 } else { 0.0 })
            }
        }
    }
}

pub fn encode_target(raw: &RawDataset, encoding: &TargetEncoding) -> Result<Vec<f64>> {
    (0..raw.n())
        .map(|i| {
            encoding.encode(raw.target(i)).map_err(|e| match e {
                FmError::Data(msg) => FmError::Data(format!("row {}: {msg}", i + 1)),
                other => other,
            })
        })
        .collect()
}

/// Normalize features and encode the target in one step.
pub fn normalize(raw: &RawDataset, bounds: &AttributeBounds, encoding: &TargetEncoding) -> Result<NormalizedDataset> {
    let features = normalize_features(raw, bounds)?;
    let targets = encode_target(raw, encoding)?;
    NormalizedDataset::new(raw.d(), features, targets, encoding.task())
}

/// Accept a table whose features and target already satisfy the domain
/// constraints (row norm at most one, target in the task's domain).
pub fn from_prenormalized(raw: &RawDataset, task: Task) -> Result<NormalizedDataset> {
    let features = (0..raw.n()).flat_map(|i| raw.features(i)).collect();
    let targets = (0..raw.n()).map(|i| raw.target(i)).collect();
    NormalizedDataset::new(raw.d(), features, targets, task)
}

/// Records `(x_i, y_i)` with `||x_i||_2 <= 1` and a task-specific target domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedDataset {
    d: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
    task: Task,
}

impl NormalizedDataset {
    pub fn new(d: usize, features: Vec<f64>, targets: Vec<f64>, task: Task) -> Result<Self> {
        if d == 0 {
            return Err(FmError::Data("dimension must be at least 1".into()));
        }
        if targets.is_empty() {
            return Err(FmError::Data("empty dataset".into()));
        }
        if features.len() != targets.len() * d {
            return Err(FmError::Data(format!(
                "{} feature values do not form {} rows of width {d}",
                features.len(),
                targets.len()
            )));
        }
        for (i, (row, &y)) in features.chunks_exact(d).zip(&targets).enumerate() {
            if row.iter().any(|v| !v.is_finite()) || !y.is_finite() {
                return Err(FmError::Data(format!("non-finite value in record {i}")));
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1.0 + NORM_SLACK {
                return Err(FmError::Data(format!("record {i} has feature norm {norm} > 1")));
            }
            let ok = match task {
                Task::Linear => (-1.0..=1.0).contains(&y),
                Task::Logistic => y == 0.0 || y == 1.0,
            };
            if !ok {
                return Err(FmError::Data(format!("record {i} has target {y} outside the {task} domain")));
            }
        }
        Ok(Self {
            d,
            features,
            targets,
            task,
        })
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Iterate `(x_i, y_i)`.
    pub fn records(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.features.chunks_exact(self.d).zip(self.targets.iter().copied())
    }

    /// Records at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n() {
                return Err(FmError::Data(format!("record index {i} out of range (n = {})", self.n())));
            }
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Self::new(self.d, features, targets, self.task)
    }

    /// Keep only the listed feature columns, rescaled by `sqrt(d / d')` so a
    /// coordinate range of `[0, 1/sqrt(d)]` becomes `[0, 1/sqrt(d')]`. Fails if
    /// a rescaled row leaves the unit ball.
    pub fn select_attributes(&self, columns: &[usize]) -> Result<Self> {
        if columns.is_empty() {
            return Err(FmError::Config("attribute subset must not be empty".into()));
        }
        if let Some(&c) = columns.iter().find(|&&c| c >= self.d) {
            return Err(FmError::Config(format!("attribute index {c} out of range (d = {})", self.d)));
        }
        let scale = (self.d as f64 / columns.len() as f64).sqrt();
        let features = self
            .features
            .chunks_exact(self.d)
            .flat_map(|row| columns.iter().map(move |&c| row[c] * scale))
            .collect();
        Self::new(columns.len(), features, self.targets.clone(), self.task)
    }

    /// Keep `round(rate * n)` records (at least one) chosen by a seeded
    /// shuffle; original order is preserved among the kept records.
    pub fn subsample(&self, rate: f64, rng: &mut FmRng) -> Result<Self> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(FmError::Config(format!("sampling rate {rate} must lie in (0, 1]")));
        }
        let keep = ((rate * self.n() as f64).round() as usize).clamp(1, self.n());
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.shuffle(rng);
        idx.truncate(keep);
        idx.sort_unstable();
        self.subset(&idx)
    }

    /// Comma-separated text with header `x1,...,xd,y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (1..=self.d).map(|j| format!("x{j}")).chain(["y".to_string()]).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for (x, y) in self.records() {
            let cells: Vec<String> = x.iter().chain(std::iter::once(&y)).map(|v| format!("{v:?}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Assignment of records to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    k: usize,
    assignment: Vec<usize>,
    seed: u64,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }
}

/// Shuffle record indices and deal them round-robin into `k` folds, so fold
/// sizes differ by at most one.
pub fn kfold_split(data: &NormalizedDataset, k: usize, seed: u64) -> Result<FoldPlan> {
    kfold_split_n(data.n(), k, seed)
}

pub fn kfold_split_n(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(FmError::Config(format!("fold count k = {k} must be at least 2")));
    }
    if k > n {
        return Err(FmError::Config(format!("fold count k = {k} exceeds record count n = {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut FmRng::from_seed(seed));
    let mut assignment = vec![0; n];
    for (pos, &rec) in perm.iter().enumerate() {
        assignment[rec] = pos % k;
    }
    Ok(FoldPlan { k, assignment, seed })
}

/// Parameters of a synthetic regression population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub task: Task,
    /// True model; length `d`.
    pub omega: Vec<f64>,
    /// Standard deviation of additive Gaussian noise (linear task only).
    #[serde(default)]
    pub noise: f64,
}

/// Features are i.i.d. uniform on `[-1, 1]` per coordinate, divided by
/// `sqrt(d)`. Linear targets are `clamp(x.omega + noise, -1, 1)`; logistic
/// targets are Bernoulli with success probability `sigmoid(x.omega)`.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<NormalizedDataset> {
    let SynthSpec { n, d, task, ref omega, noise } = *spec;
    if n == 0 || d == 0 {
        return Err(FmError::Config(format!("synthetic n and d must be at least 1 (got n = {n}, d = {d})")));
    }
    if omega.len() != d || omega.iter().any(|w| !w.is_finite()) {
        return Err(FmError::Config(format!(
            "synthetic omega must have {d} finite entries (got {})",
            omega.len()
        )));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(FmError::Config(format!("synthetic noise {noise} must be finite and non-negative")));
    }
    let mut rng = FmRng::from_seed(seed);
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let root_d = (d as f64).sqrt();
    let mut features = Vec::with_capacity(n * d);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let start = features.len();
        for _ in 0..d {
            features.push((2.0 * rng.uniform() - 1.0) / root_d);
        }
        let score: f64 = features[start..].iter().zip(omega).map(|(x, w)| x * w).sum();
        let y = match task {
            Task::Linear => {
                let eps = if noise > 0.0 { noise * gauss.sample(&mut rng) } else { 0.0 };
                (score + eps).clamp(-1.0, 1.0)
            }
            Task::Logistic => {
                if rng.uniform() < sigmoid(score) {
                    1.0
                } else {
                    0.0
                }
            }
        };
        targets.push(y);
    }
    NormalizedDataset::new(d, features, targets, task)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(rows: Vec<Vec<f64>>, target: usize) -> RawDataset {
        let names = (0..rows[0].len()).map(|j| format!("c{j}")).collect();
        RawDataset::new(names, rows, target).unwrap()
    }

    #[test]
    fn parse_three_rows() {
        let t = parse_table("x,y\n1,0.4\n0.9,0.3\n-0.5,-1\n", 1).unwrap();
        assert_eq!((t.n(), t.d()), (3, 1));
        assert_eq!(t.features(2), vec![-0.5]);
        assert_eq!(t.target(0), 0.4);
    }

    #[test]
    fn parse_blank_cell() {
        let err = parse_table("a,b,c\n1,2,3\n4,,6\n", 2).unwrap_err();
        assert!(matches!(err, FmError::MissingValue { row: 2, col: 2 }));
        assert!(err.to_string().contains("missing value at (row 2, col 2)"));
    }

    #[test]
    fn parse_header_only() {
        let err = parse_table("a,b\n", 1).unwrap_err();
        assert!(err.to_string().contains("empty table"), "{err}");
        assert!(parse_table("", 0).unwrap_err().to_string().contains("empty table"));
    }

    #[test]
    fn parse_rejects_text_and_ragged_rows() {
        assert!(parse_table("a,b\n1,x\n", 1).unwrap_err().to_string().contains("non-numeric"));
        assert!(parse_table("a,b\n1,2,3\n", 1).unwrap_err().to_string().contains("malformed row 1"));
    }

    #[test]
    fn normalize_substitution() {
        let r = raw(vec![vec![100.0, 0.0, 0.0, 0.0, 5.0]], 4);
        let b = AttributeBounds::from_pairs(&[(0.0, 100.0); 4]).unwrap();
        let x = normalize_features(&r, &b).unwrap();
        assert_eq!(x, vec![0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_endpoints() {
        let b = AttributeBounds::from_pairs(&[(-3.0, 7.0), (2.0, 4.0)]).unwrap();
        let lo = normalize_features(&raw(vec![vec![-3.0, 2.0, 0.0]], 2), &b).unwrap();
        assert_eq!(lo, vec![0.0, 0.0]);
        let hi = normalize_features(&raw(vec![vec![7.0, 4.0, 0.0]], 2), &b).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((hi[0] - s).abs() < 1e-15 && (hi[1] - s).abs() < 1e-15);
        assert!((hi.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_rejects_out_of_bounds() {
        let b = AttributeBounds::from_pairs(&[(0.0, 1.0)]).unwrap();
        let err = normalize_features(&raw(vec![vec![1.5, 0.0]], 1), &b).unwrap_err();
        assert!(err.to_string().contains("outside declared bounds"));
    }

    #[test]
    fn bounds_validation() {
        assert!(AttributeBounds::from_pairs(&[(1.0, 1.0)]).is_err());
        assert!(AttributeBounds::from_pairs(&[(0.0, f64::INFINITY)]).is_err());
        assert!(AttributeBounds::new(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn linear_target_encoding() {
        let enc = TargetEncoding::Linear { lower: 10.0, upper: 30.0 };
        assert_eq!(enc.encode(10.0).unwrap(), -1.0);
        assert_eq!(enc.encode(30.0).unwrap(), 1.0);
        assert_eq!(enc.encode(20.0).unwrap(), 0.0);
        assert!(enc.encode(31.0).is_err());
    }

    #[test]
    fn logistic_threshold_tie_maps_to_zero() {
        let enc = TargetEncoding::Logistic { threshold: 5.0 };
        assert_eq!(enc.encode(5.0).unwrap(), 0.0);
        assert_eq!(enc.encode(5.0 + 1e-9).unwrap(), 1.0);
        assert_eq!(enc.encode(-1e9).unwrap(), 0.0);
    }

    #[test]
    fn normalized_dataset_invariants() {
        assert!(NormalizedDataset::new(2, vec![0.9, 0.9], vec![0.0], Task::Linear).is_err());
        assert!(NormalizedDataset::new(1, vec![0.5], vec![0.5], Task::Logistic).is_err());
        assert!(NormalizedDataset::new(1, vec![0.5], vec![1.5], Task::Linear).is_err());
        assert!(NormalizedDataset::new(1, vec![], vec![], Task::Linear).is_err());
        assert!(NormalizedDataset::new(1, vec![1.0], vec![-1.0], Task::Linear).is_ok());
    }

    fn toy(n: usize) -> NormalizedDataset {
        NormalizedDataset::new(1, vec![0.0; n], vec![0.0; n], Task::Linear).unwrap()
    }

    #[test]
    fn kfold_sizes() {
        let p = kfold_split(&toy(10), 5, 3).unwrap();
        assert_eq!(p.fold_sizes(), vec![2; 5]);
        let mut s = kfold_split(&toy(11), 5, 3).unwrap().fold_sizes();
        s.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(s, vec![3, 2, 2, 2, 2]);
    }

    #[test]
    fn kfold_deterministic_and_checked() {
        assert_eq!(kfold_split(&toy(50), 5, 9).unwrap(), kfold_split(&toy(50), 5, 9).unwrap());
        assert_ne!(kfold_split(&toy(50), 5, 9).unwrap(), kfold_split(&toy(50), 5, 10).unwrap());
        assert!(kfold_split(&toy(4), 5, 0).is_err());
        assert!(kfold_split(&toy(4), 1, 0).is_err());
    }

    #[test]
    fn synth_zero_model_gives_zero_targets() {
        let spec = SynthSpec { n: 100, d: 3, task: Task::Linear, omega: vec![0.0; 3], noise: 0.0 };
        let data = synth_generate(&spec, 1).unwrap();
        assert!(data.targets().iter().all(|&y| y == 0.0));
    }

    #[test]
    fn synth_logistic_zero_model_is_balanced() {
        let n = 20_000;
        let spec = SynthSpec { n, d: 4, task: Task::Logistic, omega: vec![0.0; 4], noise: 0.0 };
        let data = synth_generate(&spec, 5).unwrap();
        let mean = data.targets().iter().sum::<f64>() / n as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!((mean - 0.5).abs() <= 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn synth_is_reproducible() {
        let spec = SynthSpec { n: 200, d: 5, task: Task::Linear, omega: vec![0.3; 5], noise: 0.1 };
        let a = synth_generate(&spec, 77).unwrap();
        let b = synth_generate(&spec, 77).unwrap();
        assert!(a.features().iter().zip(b.features()).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert!(a.targets().iter().zip(b.targets()).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert_ne!(a, synth_generate(&spec, 78).unwrap());
    }

    #[test]
    fn subsample_count() {
        let mut rng = FmRng::from_seed(0);
        assert_eq!(toy(1000).subsample(0.5, &mut rng).unwrap().n(), 500);
        assert!(toy(10).subsample(0.0, &mut rng).is_err());
    }

    #[test]
    fn select_attributes_rescales() {
        let d = 4;
        let x = vec![0.5; 4];
        let data = NormalizedDataset::new(d, x, vec![0.0], Task::Linear).unwrap();
        let sub = data.select_attributes(&[0]).unwrap();
        assert!((sub.row(0)[0] - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn normalized_rows_in_unit_ball(
            d in 1usize..8,
            seed in any::<u64>(),
        ) {
            let mut rng = FmRng::from_seed(seed);
            let bounds: Vec<(f64, f64)> = (0..d)
                .map(|_| {
                    let lo = rng.uniform() * 200.0 - 100.0;
                    (lo, lo + 0.1 + rng.uniform() * 50.0)
                })
                .collect();
            let rows: Vec<Vec<f64>> = (0..20)
                .map(|_| {
                    bounds.iter().map(|&(lo, hi)| lo + rng.uniform() * (hi - lo))
                        .chain([0.0]).collect()
                })
                .collect();
            let r = raw(rows, d);
            let x = normalize_features(&r, &AttributeBounds::from_pairs(&bounds).unwrap()).unwrap();
            for row in x.chunks(d) {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!(norm <= 1.0 + 1e-12);
                let cap = 1.0 / (d as f64).sqrt() + 1e-15;
                prop_assert!(row.iter().all(|&v| (0.0..=cap).contains(&v)));
            }
        }

        #[test]
        fn linear_encoding_is_order_preserving(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let enc = TargetEncoding::Linear { lower: -50.0, upper: 50.0 };
            let (ea, eb) = (enc.encode(a).unwrap(), enc.encode(b).unwrap());
            if a < b { prop_assert!(ea < eb); }
            prop_assert!((-1.0..=1.0).contains(&ea));
        }

        #[test]
        fn kfold_is_a_partition(n in 2usize..200, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let plan = kfold_split_n(n, k, seed).unwrap();
            let mut seen = vec![0u8; n];
            for f in 0..k {
                for i in plan.test_indices(f) { seen[i] += 1; }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes = plan.fold_sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
