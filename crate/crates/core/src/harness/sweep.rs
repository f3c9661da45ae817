//! Multi-seed paired comparisons under the matched-settings protocol:
//! for each seed, two methods train from the same initialization on the
//! same batch schedule, and the paired final losses are tabulated.

use super::{map_items, map_items_seq, HarnessError};
use crate::harness::config::TrainConfig;
use crate::harness::train::{run_training, RunRecord};
use crate::optim::Method;
use std::fmt;

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub seed: u64,
    pub final_loss_a: f64,
    pub final_loss_b: f64,
    pub final_metric_a: f64,
    pub final_metric_b: f64,
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub method_a: &'static str,
    pub method_b: &'static str,
    pub rows: Vec<SweepRow>,
    pub mean_final_loss_a: f64,
    pub mean_final_loss_b: f64,
}

impl SweepSummary {
    /// Ratio of mean final losses, b over a.
    pub fn mean_loss_ratio(&self) -> f64 {
        self.mean_final_loss_b / self.mean_final_loss_a
    }
}

impl fmt::Display for SweepSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>12} {:>14} {:>14} {:>10} {:>10} {:>10}",
            "seed",
            format!("loss[{}]", self.method_a),
            format!("loss[{}]", self.method_b),
            format!("m[{}]", self.method_a),
            format!("m[{}]", self.method_b),
            "ratio"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>12} {:>14.6e} {:>14.6e} {:>10.4} {:>10.4} {:>10.4}",
                r.seed,
                r.final_loss_a,
                r.final_loss_b,
                r.final_metric_a,
                r.final_metric_b,
                r.final_loss_b / r.final_loss_a
            )?;
        }
        writeln!(
            f,
            "{:>12} {:>14.6e} {:>14.6e} {:>21} {:>10.4}",
            "mean",
            self.mean_final_loss_a,
            self.mean_final_loss_b,
            "",
            self.mean_loss_ratio()
        )
    }
}

fn run_pair(
    base: &TrainConfig,
    method_a: Method,
    method_b: Method,
    seed: u64,
) -> Result<(RunRecord, RunRecord), HarnessError> {
    let mut config = base.clone();
    config.data_seed = seed;
    config.init_seed = seed;
    config.output = None;
    let mut cfg_a = config.clone();
    cfg_a.optimizer.method = method_a;
    let mut cfg_b = config;
    cfg_b.optimizer.method = method_b;
    let ra = run_training(&cfg_a)?;
    let rb = run_training(&cfg_b)?;
    if ra.batch_plan_hash != rb.batch_plan_hash || ra.init_param_hash != rb.init_param_hash {
        return Err(HarnessError::MatchedSettings {
            detail: format!(
                "seed {seed}: plan {:#x}/{:#x}, init {:#x}/{:#x}",
                ra.batch_plan_hash, rb.batch_plan_hash, ra.init_param_hash, rb.init_param_hash
            ),
        });
    }
    Ok((ra, rb))
}

fn summarize(
    method_a: Method,
    method_b: Method,
    seeds: &[u64],
    outcomes: Vec<Result<(RunRecord, RunRecord), HarnessError>>,
) -> Result<SweepSummary, HarnessError> {
    let mut rows = Vec::with_capacity(seeds.len());
    for (seed, outcome) in seeds.iter().zip(outcomes) {
        let (ra, rb) = outcome?;
        rows.push(SweepRow {
            seed: *seed,
            final_loss_a: ra.final_train_loss(),
            final_loss_b: rb.final_train_loss(),
            final_metric_a: ra.final_eval_metric(),
            final_metric_b: rb.final_eval_metric(),
        });
    }
    let n = rows.len() as f64;
    Ok(SweepSummary {
        method_a: method_a.name(),
        method_b: method_b.name(),
        mean_final_loss_a: rows.iter().map(|r| r.final_loss_a).sum::<f64>() / n,
        mean_final_loss_b: rows.iter().map(|r| r.final_loss_b).sum::<f64>() / n,
        rows,
    })
}

/// Run the paired comparison over all seeds; seeds are independent runs
/// and execute on the rayon pool under the `parallel` feature.
pub fn run_seed_sweep(
    base: &TrainConfig,
    method_a: Method,
    method_b: Method,
    seeds: &[u64],
) -> Result<SweepSummary, HarnessError> {
    let outcomes = map_items(seeds, |&seed| run_pair(base, method_a, method_b, seed));
    summarize(method_a, method_b, seeds, outcomes)
}

/// Sequential twin of [`run_seed_sweep`], kept for the benchmark suite.
pub fn run_seed_sweep_seq(
    base: &TrainConfig,
    method_a: Method,
    method_b: Method,
    seeds: &[u64],
) -> Result<SweepSummary, HarnessError> {
    let outcomes = map_items_seq(seeds, |&seed| run_pair(base, method_a, method_b, seed));
    summarize(method_a, method_b, seeds, outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_train_config_str;

    fn base() -> TrainConfig {
        let text = "task = two_moons\nmethod = sgd\nlearning_rate = 0.05\nepochs = 4\n\
                    batch_size = 10\ndata_seed = 0\ninit_seed = 0\nhidden = 8\nnoise = 0.15\nn = 60\n";
        parse_train_config_str(text).unwrap().0
    }

    #[test]
    fn sweep_produces_one_row_per_seed() {
        let summary = run_seed_sweep(&base(), Method::Sgd, Method::TmSgd, &[1, 2, 3]).unwrap();
        assert_eq!(summary.rows.len(), 3);
        assert!(summary.mean_final_loss_a > 0.0);
        assert!(summary.mean_loss_ratio().is_finite());
        let shown = summary.to_string();
        assert!(shown.contains("loss[sgd]"), "{shown}");
        assert!(shown.contains("mean"));
    }

    #[test]
    fn parallel_and_sequential_sweeps_agree_exactly() {
        let b = base();
        let par = run_seed_sweep(&b, Method::Sgd, Method::TmSgd, &[5, 6]).unwrap();
        let seq = run_seed_sweep_seq(&b, Method::Sgd, Method::TmSgd, &[5, 6]).unwrap();
        for (x, y) in par.rows.iter().zip(&seq.rows) {
            assert_eq!(x.final_loss_a.to_bits(), y.final_loss_a.to_bits());
            assert_eq!(x.final_loss_b.to_bits(), y.final_loss_b.to_bits());
        }
    }
}
