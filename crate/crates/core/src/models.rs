//! Multilayer perceptrons over the autodiff tape, with deterministic
//! Glorot-uniform initialization.

use crate::autodiff::{finite_difference_gradient, GradError, Tape, Tensor, Var};
use crate::rng::SplitMix64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("need at least 2 layer sizes, got {0}")]
    TooFewLayers(usize),
    #[error("layer sizes must be positive, got {sizes:?}")]
    NonPositiveLayer { sizes: Vec<usize> },
    #[error("{task:?} task expects {expected}, got {actual}")]
    TaskTargetMismatch {
        task: Task,
        expected: &'static str,
        actual: &'static str,
    },
    #[error("batch has {actual} columns, model expects {expected}")]
    BadInputWidth { expected: usize, actual: usize },
    #[error("parameter count mismatch: model has {expected} tensors, got {actual}")]
    BadParameterCount { expected: usize, actual: usize },
    #[error(transparent)]
    Grad(#[from] GradError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Binary,
    Multiclass,
}

/// Targets for one batch: float values for regression, class indices for
/// classification (binary classification uses two logits).
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Values(Tensor),
    Classes(Vec<usize>),
}

/// Fully connected network: alternating affine layers and activations,
/// no activation after the final layer (raw outputs / logits).
#[derive(Debug, Clone)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    activation: Activation,
    task: Task,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

impl MlpModel {
    /// Weights are Glorot-uniform, `U(-sqrt(6/(fan_in+fan_out)), +...)`,
    /// drawn layer by layer in row-major order from a [`SplitMix64`] stream
    /// seeded with `seed`; biases start at zero. Identical seeds give
    /// bit-identical parameters.
    pub fn init(
        layer_sizes: &[usize],
        activation: Activation,
        task: Task,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if layer_sizes.len() < 2 {
            return Err(ModelError::TooFewLayers(layer_sizes.len()));
        }
        if layer_sizes.contains(&0) {
            return Err(ModelError::NonPositiveLayer { sizes: layer_sizes.to_vec() });
        }
        let mut rng = SplitMix64::new(seed);
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.uniform(-bound, bound))
                .collect();
            weights.push(Tensor::matrix(fan_in, fan_out, data)?.with_requires_grad());
            biases.push(Tensor::zeros(&[fan_out])?.with_requires_grad());
        }
        Ok(MlpModel {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            task,
            weights,
            biases,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// Parameters in the fixed order `w0, b0, w1, b1, ...`; optimizer state
    /// and gradient collections index into this order.
    pub fn parameters(&self) -> Vec<&Tensor> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    /// Overwrite all parameters (same order as [`MlpModel::parameters`]).
    pub fn set_parameters(&mut self, params: &[Tensor]) -> Result<(), ModelError> {
        let mut current = self.parameters_mut();
        if params.len() != current.len() {
            return Err(ModelError::BadParameterCount {
                expected: current.len(),
                actual: params.len(),
            });
        }
        for (dst, src) in current.iter_mut().zip(params) {
            if dst.shape() != src.shape() {
                return Err(ModelError::Grad(GradError::ShapeMismatch {
                    op: "set_parameters",
                    lhs: dst.shape().to_vec(),
                    rhs: src.shape().to_vec(),
                }));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for p in self.parameters_mut() {
            p.clear_grad();
        }
    }

    /// Forward pass on an existing tape. Returns the output var and the
    /// leaf vars of the parameters (same order as `parameters()`).
    pub fn forward(&self, tape: &mut Tape, batch: &Tensor) -> Result<(Var, Vec<Var>), ModelError> {
        if batch.shape().len() != 2 || batch.shape()[1] != self.layer_sizes[0] {
            return Err(ModelError::BadInputWidth {
                expected: self.layer_sizes[0],
                actual: *batch.shape().last().unwrap_or(&0),
            });
        }
        let mut param_vars = Vec::with_capacity(2 * self.weights.len());
        let mut h = tape.leaf(batch);
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let wv = tape.leaf(w);
            let bv = tape.leaf(b);
            param_vars.push(wv);
            param_vars.push(bv);
            let z = tape.matmul(h, wv)?;
            h = tape.add_bias(z, bv)?;
            if i != last {
                h = match self.activation {
                    Activation::Relu => tape.relu(h),
                    Activation::Tanh => tape.tanh(h),
                };
            }
        }
        Ok((h, param_vars))
    }

    /// Forward pass values only, row-major `[batch x output_dim]`. Values
    /// may be non-finite for diverged parameters; callers decide.
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let (out, _) = self.forward(&mut tape, batch)?;
        Ok(tape.value(out).to_vec())
    }

    /// Minibatch mean loss: MSE for regression, softmax cross-entropy for
    /// classification.
    pub fn loss(
        &self,
        tape: &mut Tape,
        batch: &Tensor,
        targets: &Targets,
    ) -> Result<(Var, Vec<Var>), ModelError> {
        let (out, param_vars) = self.forward(tape, batch)?;
        let loss = match (self.task, targets) {
            (Task::Regression, Targets::Values(t)) => {
                let tv = tape.leaf(t);
                tape.mse_loss(out, tv)?
            }
            (Task::Binary | Task::Multiclass, Targets::Classes(labels)) => {
                tape.softmax_cross_entropy(out, labels)?
            }
            (task, Targets::Values(_)) => {
                return Err(ModelError::TaskTargetMismatch {
                    task,
                    expected: "class indices",
                    actual: "float values",
                })
            }
            (task, Targets::Classes(_)) => {
                return Err(ModelError::TaskTargetMismatch {
                    task,
                    expected: "float values",
                    actual: "class indices",
                })
            }
        };
        Ok((loss, param_vars))
    }

    /// Loss value without touching gradients.
    pub fn loss_value(&self, batch: &Tensor, targets: &Targets) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let (loss, _) = self.loss(&mut tape, batch, targets)?;
        Ok(tape.value(loss)[0])
    }

    /// Forward + backward: fills the `grad` slot of every parameter and
    /// returns the loss value. Parameters untouched by the loss get zeros.
    pub fn loss_and_grad(&mut self, batch: &Tensor, targets: &Targets) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let (loss, param_vars) = self.loss(&mut tape, batch, targets)?;
        let value = tape.value(loss)[0];
        let mut grads = tape.backward(loss)?;
        for (p, var) in self.parameters_mut().into_iter().zip(param_vars) {
            let g = grads.take(var).unwrap_or_else(|| vec![0.0; p.len()]);
            p.set_grad(g);
        }
        Ok(value)
    }

    /// Gradients collected in parameter order; call after `loss_and_grad`.
    pub fn gradients(&self) -> Option<Vec<Vec<f64>>> {
        self.parameters()
            .iter()
            .map(|p| p.grad().map(<[f64]>::to_vec))
            .collect()
    }

    /// Fraction of rows whose argmax logit equals the label.
    pub fn accuracy(&self, batch: &Tensor, labels: &[usize]) -> Result<f64, ModelError> {
        let out = self.predict(batch)?;
        let k = self.output_dim();
        let hits = out
            .chunks(k)
            .zip(labels)
            .filter(|(row, &label)| {
                let argmax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap();
                argmax == label
            })
            .count();
        Ok(hits as f64 / labels.len() as f64)
    }

    /// Max relative finite-difference error over all parameter coordinates,
    /// using the mixed tolerance `|ad - fd| / max(1, |ad|, |fd|)`.
    pub fn gradient_check(
        &mut self,
        batch: &Tensor,
        targets: &Targets,
        h: f64,
    ) -> Result<f64, ModelError> {
        self.loss_and_grad(batch, targets)?;
        let ad: Vec<Vec<f64>> = self.gradients().expect("grads just computed");
        let params: Vec<Tensor> = self.parameters().into_iter().cloned().collect();
        let probe = self.clone();
        let targets = targets.clone();
        let batch = batch.clone();
        let fd = finite_difference_gradient(
            move |ps: &[Tensor]| {
                let mut m = probe.clone();
                m.set_parameters(ps).expect("same shapes");
                m.loss_value(&batch, &targets).expect("loss is evaluable")
            },
            &params,
            h,
        );
        let mut worst = 0.0_f64;
        for (ga, gf) in ad.iter().zip(&fd) {
            for (&a, &f) in ga.iter().zip(gf) {
                let rel = (a - f).abs() / 1.0_f64.max(a.abs()).max(f.abs());
                worst = worst.max(rel);
            }
        }
        Ok(worst)
    }
}
