//! Deterministic synthetic datasets, a strict CSV loader, and seeded
//! minibatch plans. Every generator is a pure function of its seed.
//!
//! CSV contract: comma-separated, mandatory header row, decimal floats,
//! no quoting, UTF-8, LF line endings. The loader enforces exactly this
//! and reports parse failures with their line and column.

use crate::autodiff::{GradError, Tensor};
use crate::models::{Targets, Task};
use crate::rng::SplitMix64;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("two-moons needs an even sample count, got {0}")]
    OddSampleCount(usize),
    #[error("sample count must be positive")]
    EmptyDataset,
    #[error("noise level must be non-negative, got {0}")]
    NegativeNoise(f64),
    #[error("true_w must have length {expected}, got {actual}")]
    BadTrueWeights { expected: usize, actual: usize },
    #[error("eigenvalues must be positive, got {0}")]
    NonPositiveEigenvalue(f64),
    #[error("batch_size must be in 1..={n}, got {batch_size}")]
    BadBatchSize { batch_size: usize, n: usize },
    #[error("{path}: line 1 looks like data, expected a header row")]
    MissingHeader { path: String },
    #[error("{path}: file is empty")]
    EmptyFile { path: String },
    #[error("{path}: no data rows after the header")]
    NoRows { path: String },
    #[error("{path}: line {line}, column `{column}`: cannot parse `{value}` as a number")]
    ParseError { path: String, line: usize, column: String, value: String },
    #[error("{path}: line {line} has {actual} fields, header has {expected}")]
    FieldCount { path: String, line: usize, expected: usize, actual: usize },
    #[error("{path}: target column `{column}` not found in header")]
    MissingTargetColumn { path: String, column: String },
    #[error("{path}: line {line}: class label must be a non-negative integer, got `{value}`")]
    BadClassLabel { path: String, line: usize, value: String },
    #[error("{path}: binary task allows labels 0 and 1, found {label} on line {line}")]
    BinaryLabelOutOfRange { path: String, line: usize, label: usize },
    #[error("classification needs exactly one target column, got {0}")]
    MultiTargetClassification(usize),
    #[error("eval fraction must lie in [0, 1), got {0}")]
    BadSplitFraction(f64),
    #[error(transparent)]
    Tensor(#[from] GradError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

/// Feature matrix plus targets for one task.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub task: Task,
    pub features: Tensor,
    pub targets: Targets,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn num_classes(&self) -> Option<usize> {
        match &self.targets {
            Targets::Classes(labels) => labels.iter().max().map(|m| m + 1),
            Targets::Values(_) => None,
        }
    }

    /// Rows `indices` as a (features, targets) pair, gathered in the given
    /// order.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Targets) {
        let d = self.feature_dim();
        let mut rows = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            rows.extend_from_slice(&self.features.data()[i * d..(i + 1) * d]);
        }
        let features = Tensor::matrix(indices.len(), d, rows).expect("valid rows");
        let targets = match &self.targets {
            Targets::Classes(labels) => {
                Targets::Classes(indices.iter().map(|&i| labels[i]).collect())
            }
            Targets::Values(values) => {
                let t = values.shape()[1];
                let mut out = Vec::with_capacity(indices.len() * t);
                for &i in indices {
                    out.extend_from_slice(&values.data()[i * t..(i + 1) * t]);
                }
                Targets::Values(Tensor::matrix(indices.len(), t, out).expect("valid rows"))
            }
        };
        (features, targets)
    }

    /// Split into (train, eval) by a seeded shuffle; `fraction` of the rows
    /// (rounded down, at least leaving one train row) become the eval set.
    /// Both halves keep ascending row order.
    pub fn split_eval(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(DataError::BadSplitFraction(fraction));
        }
        let n = self.len();
        let n_eval = ((n as f64) * fraction) as usize;
        let mut indices: Vec<usize> = (0..n).collect();
        // Dedicated stream tag so the split never aliases a batch plan.
        SplitMix64::derived(seed, u64::MAX).shuffle(&mut indices);
        let (eval_idx, train_idx) = indices.split_at(n_eval);
        let mut train: Vec<usize> = train_idx.to_vec();
        let mut eval: Vec<usize> = eval_idx.to_vec();
        train.sort_unstable();
        eval.sort_unstable();
        let take = |name: &str, idx: &[usize]| {
            let (features, targets) = self.gather(idx);
            Dataset {
                name: format!("{}[{name}]", self.name),
                task: self.task,
                features,
                targets,
            }
        };
        Ok((take("train", &train), take("eval", &eval)))
    }
}

/// Two interleaved half-circles, `n/2` points each: class 0 at
/// `(cos t, sin t)`, class 1 at `(1 - cos t, 0.5 - sin t)`, `t` evenly
/// spaced over `[0, pi]` inclusive. Gaussian noise of scale `sigma` is
/// added per coordinate (x then y, class 0 block first) from a stream
/// seeded with `seed`.
pub fn gen_two_moons(n: usize, sigma: f64, seed: u64) -> Result<Dataset, DataError> {
    if n == 0 {
        return Err(DataError::EmptyDataset);
    }
    if !n.is_multiple_of(2) {
        return Err(DataError::OddSampleCount(n));
    }
    if sigma < 0.0 {
        return Err(DataError::NegativeNoise(sigma));
    }
    let m = n / 2;
    let mut rng = SplitMix64::new(seed);
    let theta = |i: usize| {
        if m == 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (m - 1) as f64
        }
    };
    let mut features = Vec::with_capacity(2 * n);
    for i in 0..m {
        let t = theta(i);
        features.push(t.cos() + sigma * rng.gaussian());
        features.push(t.sin() + sigma * rng.gaussian());
    }
    for i in 0..m {
        let t = theta(i);
        features.push(1.0 - t.cos() + sigma * rng.gaussian());
        features.push(0.5 - t.sin() + sigma * rng.gaussian());
    }
    let mut labels = vec![0usize; m];
    labels.resize(n, 1);
    Ok(Dataset {
        name: format!("two_moons(n={n}, sigma={sigma}, seed={seed})"),
        task: Task::Binary,
        features: Tensor::matrix(n, 2, features)?,
        targets: Targets::Classes(labels),
    })
}

/// Linear regression data: features uniform in `[-1, 1]^d` (sampled row by
/// row), targets `x . true_w + true_b + sigma * gaussian` (noise drawn per
/// row after all features, from the same stream).
pub fn gen_linear_regression(
    n: usize,
    d: usize,
    sigma: f64,
    seed: u64,
    true_w: &[f64],
    true_b: f64,
) -> Result<Dataset, DataError> {
    if n == 0 || d == 0 {
        return Err(DataError::EmptyDataset);
    }
    if sigma < 0.0 {
        return Err(DataError::NegativeNoise(sigma));
    }
    if true_w.len() != d {
        return Err(DataError::BadTrueWeights { expected: d, actual: true_w.len() });
    }
    let mut rng = SplitMix64::new(seed);
    let features: Vec<f64> = (0..n * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let targets: Vec<f64> = (0..n)
        .map(|i| {
            let x = &features[i * d..(i + 1) * d];
            let dot: f64 = x.iter().zip(true_w).map(|(a, b)| a * b).sum();
            dot + true_b + sigma * rng.gaussian()
        })
        .collect();
    Ok(Dataset {
        name: format!("linreg(n={n}, d={d}, sigma={sigma}, seed={seed})"),
        task: Task::Regression,
        features: Tensor::matrix(n, d, features)?,
        targets: Targets::Values(Tensor::matrix(n, 1, targets)?),
    })
}

/// The quadratic bowl `L(w) = 0.5 sum lambda_i w_i^2`: closed-form loss,
/// gradient, and gradient flow. This is the testbed where optimizer steps
/// and ODE integrators can be compared exactly.
#[derive(Debug, Clone)]
pub struct QuadraticBowl {
    eigenvalues: Vec<f64>,
}

impl QuadraticBowl {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self, DataError> {
        if eigenvalues.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        if let Some(&bad) = eigenvalues.iter().find(|&&l| !(l > 0.0)) {
            return Err(DataError::NonPositiveEigenvalue(bad));
        }
        Ok(QuadraticBowl { eigenvalues })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        0.5 * w
            .iter()
            .zip(&self.eigenvalues)
            .map(|(wi, li)| li * wi * wi)
            .sum::<f64>()
    }

    /// `grad_i = lambda_i * w_i`, in exactly this product order so that a
    /// full-batch optimizer step matches the integrator bit for bit.
    pub fn grad(&self, w: &[f64]) -> Vec<f64> {
        w.iter().zip(&self.eigenvalues).map(|(wi, li)| li * wi).collect()
    }

    /// Exact gradient flow: `w_i(t) = w_i(0) e^(-lambda_i t)`.
    pub fn flow(&self, w0: &[f64], t: f64) -> Vec<f64> {
        w0.iter()
            .zip(&self.eigenvalues)
            .map(|(wi, li)| wi * (-(li * t)).exp())
            .collect()
    }
}

/// A seeded minibatch schedule: the permutation drawn for `(seed, epoch)`
/// is a pure function of both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
    pub epoch: usize,
}

/// Index slices for one epoch: a seeded permutation of `0..n` cut into
/// consecutive chunks of `batch_size` (the final chunk may be short), so
/// every index appears exactly once. Each chunk is then put in ascending
/// order; membership stays random while the within-batch gather order is
/// canonical, which makes the full-batch case coincide with whole-dataset
/// evaluation exactly.
pub fn batches(dataset: &Dataset, plan: &BatchPlan) -> Result<Vec<Vec<usize>>, DataError> {
    batch_indices(dataset.len(), plan)
}

pub fn batch_indices(n: usize, plan: &BatchPlan) -> Result<Vec<Vec<usize>>, DataError> {
    if plan.batch_size == 0 || plan.batch_size > n {
        return Err(DataError::BadBatchSize { batch_size: plan.batch_size, n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    SplitMix64::derived(plan.seed, plan.epoch as u64).shuffle(&mut perm);
    Ok(perm
        .chunks(plan.batch_size)
        .map(|chunk| {
            let mut slice = chunk.to_vec();
            slice.sort_unstable();
            slice
        })
        .collect())
}

/// Write a dataset in the strict CSV format: feature columns `x1..xd`,
/// target columns `y` (classes) or `y1..yt` (values).
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut out = Vec::new();
    let d = dataset.feature_dim();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    match &dataset.targets {
        Targets::Classes(_) => header.push("y".to_string()),
        Targets::Values(v) => {
            let t = v.shape()[1];
            if t == 1 {
                header.push("y".to_string());
            } else {
                header.extend((1..=t).map(|i| format!("y{i}")));
            }
        }
    }
    writeln!(out, "{}", header.join(",")).expect("vec write");
    for i in 0..dataset.len() {
        let mut fields: Vec<String> = dataset.features.data()[i * d..(i + 1) * d]
            .iter()
            .map(|x| format!("{x}"))
            .collect();
        match &dataset.targets {
            Targets::Classes(labels) => fields.push(format!("{}", labels[i])),
            Targets::Values(v) => {
                let t = v.shape()[1];
                fields.extend(v.data()[i * t..(i + 1) * t].iter().map(|x| format!("{x}")));
            }
        }
        writeln!(out, "{}", fields.join(",")).expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Load a dataset from the strict CSV format. `target_columns` name the
/// target fields; every other column becomes a feature, in header order.
/// Classification tasks take exactly one target column holding
/// non-negative integer labels.
pub fn load_csv(path: &Path, task: Task, target_columns: &[&str]) -> Result<Dataset, DataError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header_line = match lines.next() {
        Some(h) if !h.trim().is_empty() => h,
        _ => return Err(DataError::EmptyFile { path: display }),
    };
    let header: Vec<&str> = header_line.split(',').map(str::trim).collect();
    if header.iter().all(|f| f.parse::<f64>().is_ok()) {
        return Err(DataError::MissingHeader { path: display });
    }
    let mut target_idx = Vec::with_capacity(target_columns.len());
    for col in target_columns {
        match header.iter().position(|h| h == col) {
            Some(i) => target_idx.push(i),
            None => {
                return Err(DataError::MissingTargetColumn {
                    path: display,
                    column: (*col).to_string(),
                })
            }
        }
    }
    if matches!(task, Task::Binary | Task::Multiclass) && target_idx.len() != 1 {
        return Err(DataError::MultiTargetClassification(target_idx.len()));
    }
    let feature_idx: Vec<usize> =
        (0..header.len()).filter(|i| !target_idx.contains(i)).collect();

    let mut features = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for (lineno, line) in lines.enumerate() {
        let line_num = lineno + 2; // 1-based, after the header
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != header.len() {
            return Err(DataError::FieldCount {
                path: display,
                line: line_num,
                expected: header.len(),
                actual: fields.len(),
            });
        }
        let parse = |idx: usize| -> Result<f64, DataError> {
            fields[idx].parse::<f64>().map_err(|_| DataError::ParseError {
                path: display.clone(),
                line: line_num,
                column: header[idx].to_string(),
                value: fields[idx].to_string(),
            })
        };
        for &i in &feature_idx {
            features.push(parse(i)?);
        }
        match task {
            Task::Regression => {
                for &i in &target_idx {
                    values.push(parse(i)?);
                }
            }
            Task::Binary | Task::Multiclass => {
                let raw = parse(target_idx[0])?;
                if raw < 0.0 || raw.fract() != 0.0 {
                    return Err(DataError::BadClassLabel {
                        path: display,
                        line: line_num,
                        value: fields[target_idx[0]].to_string(),
                    });
                }
                let label = raw as usize;
                if task == Task::Binary && label > 1 {
                    return Err(DataError::BinaryLabelOutOfRange {
                        path: display,
                        line: line_num,
                        label,
                    });
                }
                labels.push(label);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(DataError::NoRows { path: display });
    }
    let targets = match task {
        Task::Regression => {
            Targets::Values(Tensor::matrix(rows, target_idx.len(), values)?)
        }
        Task::Binary | Task::Multiclass => Targets::Classes(labels),
    };
    Ok(Dataset {
        name: display,
        task,
        features: Tensor::matrix(rows, feature_idx.len(), features)?,
        targets,
    })
}
