//! Gradient correctness audit: random MLP configurations whose tape
//! gradients are checked coordinate-by-coordinate against the central
//! finite-difference oracle.

use super::{map_items, HarnessError};
use crate::autodiff::{finite_difference_gradient, Tensor};
use crate::models::{Activation, MlpModel, Targets, Task};
use crate::rng::SplitMix64;

const FD_STEP: f64 = 1e-5;
const PASS_THRESHOLD: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradcheckCase {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub task: Task,
    pub batch: usize,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub cases: Vec<GradcheckCase>,
    pub max_rel_error: f64,
    pub passed: bool,
}

impl std::fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, c) in self.cases.iter().enumerate() {
            writeln!(
                f,
                "case {i}: layers {:?} {:?} {:?} batch {}: max rel error {:.3e}",
                c.layer_sizes, c.activation, c.task, c.batch, c.rel_error
            )?;
        }
        writeln!(f, "max relative error over all cases: {:.3e}", self.max_rel_error)?;
        write!(f, "gradcheck {}", if self.passed { "PASS" } else { "FAIL" })
    }
}

/// Check 10 random MLP configurations; passes iff the worst mixed relative
/// error `|ad - fd| / max(1, |ad|, |fd|)` stays below 1e-5.
pub fn run_gradcheck(seed: u64) -> Result<GradcheckReport, HarnessError> {
    run_gradcheck_with_corruption(seed, 0.0)
}

/// Detector-sensitivity hook: `corruption` is added to the first tape
/// gradient coordinate of every case before comparison, so any nonzero
/// value must flip the report to FAIL.
pub fn run_gradcheck_with_corruption(
    seed: u64,
    corruption: f64,
) -> Result<GradcheckReport, HarnessError> {
    let case_seeds: Vec<u64> = (0..10).map(|i| (seed, i as u64)).map(|(s, i)| {
        SplitMix64::derived(s, i).next_u64()
    }).collect();
    let results = map_items(&case_seeds, |&cs| run_case(cs, corruption));
    let mut cases = Vec::with_capacity(results.len());
    for r in results {
        cases.push(r?);
    }
    let max_rel_error = cases.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport { cases, passed: max_rel_error < PASS_THRESHOLD, max_rel_error })
}

fn run_case(case_seed: u64, corruption: f64) -> Result<GradcheckCase, HarnessError> {
    let mut rng = SplitMix64::new(case_seed);
    let task = match rng.next_below(3) {
        0 => Task::Regression,
        1 => Task::Binary,
        _ => Task::Multiclass,
    };
    let activation = if rng.next_below(2) == 0 { Activation::Relu } else { Activation::Tanh };
    let d_in = 2 + rng.next_below(4) as usize;
    let depth = rng.next_below(3) as usize;
    let mut layer_sizes = vec![d_in];
    for _ in 0..depth {
        layer_sizes.push(2 + rng.next_below(7) as usize);
    }
    let d_out = match task {
        Task::Regression => 1 + rng.next_below(3) as usize,
        Task::Binary => 2,
        Task::Multiclass => 3 + rng.next_below(3) as usize,
    };
    layer_sizes.push(d_out);
    let batch = 2 + rng.next_below(5) as usize;

    let features: Vec<f64> = (0..batch * d_in).map(|_| rng.gaussian()).collect();
    let bx = Tensor::matrix(batch, d_in, features).expect("finite gaussians");
    let bt = match task {
        Task::Regression => Targets::Values(
            Tensor::matrix(batch, d_out, (0..batch * d_out).map(|_| rng.gaussian()).collect())
                .expect("finite gaussians"),
        ),
        _ => Targets::Classes((0..batch).map(|_| rng.next_below(d_out as u64) as usize).collect()),
    };

    let mut model = MlpModel::init(&layer_sizes, activation, task, rng.next_u64())?;
    model.loss_and_grad(&bx, &bt)?;
    let mut ad = model.gradients().expect("grads just computed");
    ad[0][0] += corruption;

    let params: Vec<Tensor> = model.parameters().into_iter().cloned().collect();
    let probe = model.clone();
    let fd = finite_difference_gradient(
        move |ps: &[Tensor]| {
            let mut m = probe.clone();
            m.set_parameters(ps).expect("same shapes");
            m.loss_value(&bx, &bt).expect("loss evaluable near the base point")
        },
        &params,
        FD_STEP,
    );

    let mut rel_error = 0.0_f64;
    for (ga, gf) in ad.iter().zip(&fd) {
        for (&a, &f) in ga.iter().zip(gf) {
            rel_error = rel_error.max((a - f).abs() / 1.0_f64.max(a.abs()).max(f.abs()));
        }
    }
    Ok(GradcheckCase { layer_sizes, activation, task, batch, rel_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_seed_passes() {
        let report = run_gradcheck(0).unwrap();
        assert_eq!(report.cases.len(), 10);
        assert!(report.passed, "max rel error {}", report.max_rel_error);
        assert!(report.max_rel_error < 1e-5);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let report = run_gradcheck_with_corruption(0, 1e-3).unwrap();
        assert!(!report.passed, "corruption must trip the detector");
    }

    #[test]
    fn constant_loss_has_vanishing_errors() {
        // Zero parameters + relu head: the loss surface is flat in the
        // last-layer weights feeding from dead units; both sides agree on 0.
        let mut model =
            MlpModel::init(&[2, 3, 1], Activation::Relu, Task::Regression, 1).unwrap();
        let zeros: Vec<Tensor> = model
            .parameters()
            .iter()
            .map(|p| Tensor::zeros(p.shape()).unwrap())
            .collect();
        model.set_parameters(&zeros).unwrap();
        let bx = Tensor::matrix(2, 2, vec![0.4, -0.2, 0.1, 0.9]).unwrap();
        let bt = Targets::Values(Tensor::matrix(2, 1, vec![0.0, 0.0]).unwrap());
        model.loss_and_grad(&bx, &bt).unwrap();
        let ad = model.gradients().unwrap();
        for g in ad.iter().flatten() {
            assert!(g.abs() < 1e-12);
        }
        let params: Vec<Tensor> = model.parameters().into_iter().cloned().collect();
        let probe = model.clone();
        let fd = finite_difference_gradient(
            move |ps: &[Tensor]| {
                let mut m = probe.clone();
                m.set_parameters(ps).unwrap();
                m.loss_value(&bx, &bt).unwrap()
            },
            &params,
            1e-5,
        );
        for g in fd.iter().flatten() {
            assert!(g.abs() < 1e-9);
        }
    }
}
