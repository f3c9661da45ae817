//! The training loop: seeded data, seeded init, per-epoch batch plans,
//! optimizer dispatch with switch-epoch scheduling, and metrics collection.

use super::{io_err, Fnv1a, HarnessError};
use crate::autodiff::Tensor;
use crate::data::{self, BatchPlan, Dataset, QuadraticBowl};
use crate::harness::config::{TaskSpec, TrainConfig};
use crate::models::{MlpModel, Task, Targets};
use crate::optim::{optimizer_step, OptimError, ParamState};
use std::path::Path;
use std::time::Instant;

/// One epoch of metrics. `wall_seconds` is excluded from the determinism
/// contract, which is why it is the last CSV column.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_metric: f64,
    pub steps: u64,
    pub wall_seconds: f64,
}

/// Everything one run produces. The batch-plan and initial-parameter
/// hashes prove matched settings across method comparisons.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub task: String,
    pub method: String,
    pub rows: Vec<MetricsRow>,
    pub batch_plan_hash: u64,
    pub init_param_hash: u64,
}

impl RunRecord {
    pub fn final_train_loss(&self) -> f64 {
        self.rows.last().expect("at least one epoch").train_loss
    }

    pub fn final_eval_metric(&self) -> f64 {
        self.rows.last().expect("at least one epoch").eval_metric
    }

    /// Fixed schema: `epoch,train_loss,eval_metric,steps,wall_seconds`.
    /// Floats are printed shortest-roundtrip, so equal values give equal
    /// bytes. LF line endings.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("epoch,train_loss,eval_metric,steps,wall_seconds\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.6}\n",
                row.epoch, row.train_loss, row.eval_metric, row.steps, row.wall_seconds
            ));
        }
        out
    }
}

pub fn write_metrics_csv(record: &RunRecord, path: &Path) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
        }
    }
    std::fs::write(path, record.to_csv_string()).map_err(|e| io_err(path, e))
}

fn hash_params(params: &[&Tensor]) -> u64 {
    let mut h = Fnv1a::new();
    for p in params {
        for &x in p.data() {
            h.update_u64(x.to_bits());
        }
    }
    h.finish()
}

/// Execute a training config. Pure apart from wall-clock timing: identical
/// configs give identical records (and therefore identical CSV bytes,
/// wall-clock column aside).
pub fn run_training(config: &TrainConfig) -> Result<RunRecord, HarnessError> {
    match &config.task {
        TaskSpec::Quadratic { eigenvalues, w0 } => train_quadratic(config, eigenvalues, w0),
        _ => train_mlp(config),
    }
}

/// Quadratic-bowl runs use the analytic gradient and take exactly one
/// full-batch step per epoch, which keeps them directly comparable to the
/// ODE integrators.
fn train_quadratic(
    config: &TrainConfig,
    eigenvalues: &[f64],
    w0: &[f64],
) -> Result<RunRecord, HarnessError> {
    let bowl = QuadraticBowl::new(eigenvalues.to_vec())?;
    let mut w = Tensor::new(vec![w0.len()], w0.to_vec()).map_err(crate::data::DataError::from)?;
    let init_param_hash = hash_params(&[&w]);
    let mut states = vec![ParamState::new(&w)];
    let mut rows = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let start = Instant::now();
        let loss = bowl.loss(w.data());
        if !loss.is_finite() {
            return Err(HarnessError::Divergence { epoch });
        }
        let grad = bowl.grad(w.data());
        step_params(config, &mut [&mut w], &[grad], epoch, &mut states)?;
        let eval = bowl.loss(w.data());
        if !eval.is_finite() {
            return Err(HarnessError::Divergence { epoch });
        }
        rows.push(MetricsRow {
            epoch,
            train_loss: loss,
            eval_metric: eval,
            steps: (epoch + 1) as u64,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(RunRecord {
        task: config.task.name().to_string(),
        method: config.optimizer.method.name().to_string(),
        rows,
        batch_plan_hash: Fnv1a::new().finish(),
        init_param_hash,
    })
}

fn step_params(
    config: &TrainConfig,
    params: &mut [&mut Tensor],
    grads: &[Vec<f64>],
    epoch: usize,
    states: &mut [ParamState],
) -> Result<(), HarnessError> {
    optimizer_step(&config.optimizer, params, grads, epoch, states).map_err(|e| match e {
        // A non-finite gradient mid-run is the divergence path, not a
        // programming error.
        OptimError::NonFiniteGradient { .. } => HarnessError::Divergence { epoch },
        other => HarnessError::Optim(other),
    })
}

fn build_dataset(config: &TrainConfig) -> Result<Dataset, HarnessError> {
    Ok(match &config.task {
        TaskSpec::TwoMoons { n, noise } => data::gen_two_moons(*n, *noise, config.data_seed)?,
        TaskSpec::LinReg { n, dim, noise, true_w, true_b } => {
            data::gen_linear_regression(*n, *dim, *noise, config.data_seed, true_w, *true_b)?
        }
        TaskSpec::Quadratic { .. } => unreachable!("quadratic runs have no dataset"),
    })
}

fn train_mlp(config: &TrainConfig) -> Result<RunRecord, HarnessError> {
    let full = build_dataset(config)?;
    let (train_set, eval_set) = if config.eval_split > 0.0 {
        let (t, e) = full.split_eval(config.eval_split, config.data_seed)?;
        (t, Some(e))
    } else {
        (full, None)
    };

    let out_dim = match train_set.task {
        Task::Regression => match &train_set.targets {
            Targets::Values(v) => v.shape()[1],
            Targets::Classes(_) => unreachable!("regression has value targets"),
        },
        Task::Binary => 2,
        Task::Multiclass => train_set.num_classes().unwrap_or(2),
    };
    let mut layer_sizes = vec![train_set.feature_dim()];
    layer_sizes.extend_from_slice(&config.hidden);
    layer_sizes.push(out_dim);

    let mut model = MlpModel::init(&layer_sizes, config.activation, train_set.task, config.init_seed)?;
    let init_param_hash = hash_params(&model.parameters());
    let mut states: Vec<ParamState> =
        model.parameters().iter().map(|p| ParamState::new(p)).collect();

    let mut plan_hash = Fnv1a::new();
    let mut rows = Vec::with_capacity(config.epochs);
    let mut steps = 0u64;
    for epoch in 0..config.epochs {
        let start = Instant::now();
        let plan = BatchPlan { batch_size: config.batch_size, seed: config.data_seed, epoch };
        let slices = data::batches(&train_set, &plan)?;
        plan_hash.update_u64(epoch as u64);
        for slice in &slices {
            for &i in slice {
                plan_hash.update_u64(i as u64);
            }
        }

        let mut weighted_loss = 0.0;
        for slice in &slices {
            let (bx, bt) = train_set.gather(slice);
            let loss = model.loss_and_grad(&bx, &bt)?;
            if !loss.is_finite() {
                return Err(HarnessError::Divergence { epoch });
            }
            weighted_loss += loss * slice.len() as f64;
            let grads = model.gradients().expect("loss_and_grad fills every slot");
            step_params(config, &mut model.parameters_mut(), &grads, epoch, &mut states)?;
            steps += 1;
        }
        let train_loss = weighted_loss / train_set.len() as f64;

        let eval_on = eval_set.as_ref().unwrap_or(&train_set);
        let eval_metric = evaluate(&model, eval_on)?;
        if !eval_metric.is_finite() {
            return Err(HarnessError::Divergence { epoch });
        }
        rows.push(MetricsRow {
            epoch,
            train_loss,
            eval_metric,
            steps,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(RunRecord {
        task: config.task.name().to_string(),
        method: config.optimizer.method.name().to_string(),
        rows,
        batch_plan_hash: plan_hash.finish(),
        init_param_hash,
    })
}

/// Accuracy for classification, MSE for regression.
fn evaluate(model: &MlpModel, dataset: &Dataset) -> Result<f64, HarnessError> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    let (bx, bt) = dataset.gather(&all);
    Ok(match &bt {
        Targets::Classes(labels) => model.accuracy(&bx, labels)?,
        Targets::Values(_) => model.loss_value(&bx, &bt)?,
    })
}
