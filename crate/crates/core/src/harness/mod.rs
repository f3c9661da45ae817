//! Config-driven experiment harness: training comparisons, ODE benchmarks,
//! gradient checks, and run comparison, all writing the fixed CSV schema
//! `epoch,train_loss,eval_metric,steps,wall_seconds`.
//!
//! Reproducibility contract: rerunning any config yields a byte-identical
//! CSV except for the wall-clock column, which is why that column sits
//! last. Matched-settings comparisons are verifiable by the batch-plan and
//! initial-parameter hashes logged with every run.

mod compare;
mod config;
mod gradcheck;
mod odebench;
mod sweep;
mod train;

pub use compare::{compare_runs, read_metrics_csv, Comparison};
pub use config::{
    parse_bench_config, parse_bench_config_str, parse_train_config, parse_train_config_str,
    BenchConfig, ConfigError, TaskSpec, TrainConfig,
};
pub use gradcheck::{run_gradcheck, run_gradcheck_with_corruption, GradcheckCase, GradcheckReport};
pub use odebench::{run_odebench, BenchReport, BenchRow};
pub use sweep::{run_seed_sweep, run_seed_sweep_seq, SweepRow, SweepSummary};
pub use train::{run_training, write_metrics_csv, MetricsRow, RunRecord};

use crate::data::DataError;
use crate::models::ModelError;
use crate::ode::OdeError;
use crate::optim::OptimError;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: line {line}: {message}")]
    MetricsParse { path: String, line: usize, message: String },
    #[error("epoch counts differ: {a} vs {b}")]
    MismatchedEpochs { a: usize, b: usize },
    #[error("matched-settings violation: {detail}")]
    MatchedSettings { detail: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

impl HarnessError {
    /// Process exit code: 0 is success, 2 config error, 3 divergence,
    /// 4 I/O error, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Divergence { .. } => 3,
            HarnessError::Io { .. } | HarnessError::MetricsParse { .. } => 4,
            _ => 1,
        }
    }
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io { path: path.display().to_string(), source }
}

/// FNV-1a, used for the batch-plan and parameter hashes so they are
/// stable across platforms and builds.
pub(crate) struct Fnv1a(u64);

impl Fnv1a {
    pub fn new() -> Self {
        Fnv1a(0xCBF2_9CE4_8422_2325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100_0000_01B3);
        }
    }

    pub fn update_u64(&mut self, x: u64) {
        self.update(&x.to_le_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// Ordered parallel map over independent work items; falls back to a plain
/// loop without the `parallel` feature. Output order always matches input
/// order, so results never depend on scheduling.
#[cfg(feature = "parallel")]
pub(crate) fn map_items<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_items<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

pub(crate) fn map_items_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}
