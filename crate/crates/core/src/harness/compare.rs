//! Pairwise comparison of metrics CSVs: final losses and metrics, the
//! final-loss ratio, and per-epoch loss deltas.

use super::{io_err, HarnessError, MetricsRow};
use std::fmt;
use std::path::Path;

const HEADER: &str = "epoch,train_loss,eval_metric,steps,wall_seconds";

/// Parse a metrics CSV written by a training run.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        Some((_, h)) => {
            return Err(HarnessError::MetricsParse {
                path: display,
                line: 1,
                message: format!("expected header `{HEADER}`, got `{h}`"),
            })
        }
        None => {
            return Err(HarnessError::MetricsParse {
                path: display,
                line: 1,
                message: "file is empty".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(HarnessError::MetricsParse {
                path: display,
                line: idx + 1,
                message: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let parse_err = |msg: String| HarnessError::MetricsParse {
            path: display.clone(),
            line: idx + 1,
            message: msg,
        };
        rows.push(MetricsRow {
            epoch: fields[0]
                .parse()
                .map_err(|_| parse_err(format!("bad epoch `{}`", fields[0])))?,
            train_loss: fields[1]
                .parse()
                .map_err(|_| parse_err(format!("bad train_loss `{}`", fields[1])))?,
            eval_metric: fields[2]
                .parse()
                .map_err(|_| parse_err(format!("bad eval_metric `{}`", fields[2])))?,
            steps: fields[3]
                .parse()
                .map_err(|_| parse_err(format!("bad steps `{}`", fields[3])))?,
            wall_seconds: fields[4]
                .parse()
                .map_err(|_| parse_err(format!("bad wall_seconds `{}`", fields[4])))?,
        });
    }
    if rows.is_empty() {
        return Err(HarnessError::MetricsParse {
            path: display,
            line: 2,
            message: "no data rows".into(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub epochs: usize,
    pub final_train_loss_a: f64,
    pub final_train_loss_b: f64,
    pub final_eval_metric_a: f64,
    pub final_eval_metric_b: f64,
    /// Final train loss of b divided by a's.
    pub loss_ratio: f64,
    /// `loss_b - loss_a` per epoch.
    pub per_epoch_loss_delta: Vec<f64>,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "epochs: {}", self.epochs)?;
        writeln!(
            f,
            "final train loss: a = {}, b = {}",
            self.final_train_loss_a, self.final_train_loss_b
        )?;
        writeln!(
            f,
            "final eval metric: a = {}, b = {}",
            self.final_eval_metric_a, self.final_eval_metric_b
        )?;
        writeln!(f, "final loss ratio b/a: {}", self.loss_ratio)?;
        writeln!(f, "per-epoch loss delta (b - a):")?;
        for (epoch, delta) in self.per_epoch_loss_delta.iter().enumerate() {
            writeln!(f, "  epoch {epoch}: {delta}")?;
        }
        Ok(())
    }
}

/// Compare two runs; both files must hold the same number of epochs.
pub fn compare_runs(csv_a: &Path, csv_b: &Path) -> Result<Comparison, HarnessError> {
    let a = read_metrics_csv(csv_a)?;
    let b = read_metrics_csv(csv_b)?;
    if a.len() != b.len() {
        return Err(HarnessError::MismatchedEpochs { a: a.len(), b: b.len() });
    }
    let last_a = a.last().expect("non-empty");
    let last_b = b.last().expect("non-empty");
    Ok(Comparison {
        epochs: a.len(),
        final_train_loss_a: last_a.train_loss,
        final_train_loss_b: last_b.train_loss,
        final_eval_metric_a: last_a.eval_metric,
        final_eval_metric_b: last_b.eval_metric,
        loss_ratio: last_b.train_loss / last_a.train_loss,
        per_epoch_loss_delta: a
            .iter()
            .zip(&b)
            .map(|(x, y)| y.train_loss - x.train_loss)
            .collect(),
    })
}
