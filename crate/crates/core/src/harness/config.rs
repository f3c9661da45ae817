//! Flat `key = value` experiment configs: one pair per line, `#` comments,
//! UTF-8. Unknown and duplicate keys are rejected; every error names the
//! offending key (and line, for malformed values).

use crate::models::Activation;
use crate::optim::{Method, MultistepCoefficients, OptimError, OptimizerConfig};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("missing required key `{key}`")]
    MissingKey { key: &'static str },
    #[error("line {line}: key `{key}`: cannot parse `{value}` as {expected}")]
    TypeError { line: usize, key: String, value: String, expected: &'static str },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` is not valid for task {task}")]
    KeyNotForTask { line: usize, key: String, task: &'static str },
    #[error("line {line}: key `{key}` is only valid for {methods}")]
    KeyNotForMethod { line: usize, key: String, methods: &'static str },
    #[error("{0}")]
    Invalid(String),
    #[error("learning_rate must be positive")]
    NonPositiveLearningRate,
    #[error(transparent)]
    Optim(#[from] OptimError),
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct KvMap {
    entries: BTreeMap<String, Entry>,
}

impl KvMap {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Malformed { line, text: content.to_string() });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Malformed { line, text: content.to_string() });
            }
            if entries.contains_key(&key) {
                return Err(ConfigError::DuplicateKey { line, key });
            }
            entries.insert(key, Entry { value, line, used: false });
        }
        Ok(KvMap { entries })
    }

    fn take_raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn take<T: std::str::FromStr>(
        &mut self,
        key: &'static str,
        expected: &'static str,
    ) -> Result<Option<T>, ConfigError> {
        match self.take_raw(key) {
            None => Ok(None),
            Some((value, line)) => value.parse::<T>().map(Some).map_err(|_| {
                ConfigError::TypeError { line, key: key.to_string(), value, expected }
            }),
        }
    }

    fn require<T: std::str::FromStr>(
        &mut self,
        key: &'static str,
        expected: &'static str,
    ) -> Result<T, ConfigError> {
        self.take(key, expected)?.ok_or(ConfigError::MissingKey { key })
    }

    fn take_f64_list(&mut self, key: &'static str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.take_raw(key) {
            None => Ok(None),
            Some((value, line)) => value
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map(Some)
                .map_err(|_| ConfigError::TypeError {
                    line,
                    key: key.to_string(),
                    value,
                    expected: "comma-separated floats",
                }),
        }
    }

    fn take_usize_list(&mut self, key: &'static str) -> Result<Option<Vec<usize>>, ConfigError> {
        match self.take_raw(key) {
            None => Ok(None),
            Some((value, line)) => value
                .split(',')
                .map(|f| f.trim().parse::<usize>())
                .collect::<Result<Vec<usize>, _>>()
                .map(Some)
                .map_err(|_| ConfigError::TypeError {
                    line,
                    key: key.to_string(),
                    value,
                    expected: "comma-separated positive integers",
                }),
        }
    }

    fn reject_unused(&self) -> Result<(), ConfigError> {
        if let Some((key, entry)) = self.entries.iter().find(|(_, e)| !e.used) {
            return Err(ConfigError::UnknownKey { line: entry.line, key: key.clone() });
        }
        Ok(())
    }

    /// Line of a key that was consumed (for task/method scoping errors).
    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map(|e| e.line).unwrap_or(0)
    }
}

/// Task selection plus its generator parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskSpec {
    TwoMoons { n: usize, noise: f64 },
    LinReg { n: usize, dim: usize, noise: f64, true_w: Vec<f64>, true_b: f64 },
    Quadratic { eigenvalues: Vec<f64>, w0: Vec<f64> },
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::TwoMoons { .. } => "two_moons",
            TaskSpec::LinReg { .. } => "linreg",
            TaskSpec::Quadratic { .. } => "quadratic",
        }
    }
}

/// A fully validated training experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub task: TaskSpec,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub data_seed: u64,
    pub init_seed: u64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub eval_split: f64,
    pub output: Option<PathBuf>,
}

impl TrainConfig {
    /// Default output file name when the config does not set one.
    pub fn default_output_name(&self) -> String {
        format!(
            "{}_{}_seed{}.csv",
            self.task.name(),
            self.optimizer.method.name(),
            self.data_seed
        )
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
}

/// Parse and validate a training config; returns the config plus warnings
/// (currently only the switch-epoch-beyond-run notice).
pub fn parse_train_config(path: &Path) -> Result<(TrainConfig, Vec<String>), ConfigError> {
    parse_train_config_str(&read(path)?)
}

pub fn parse_train_config_str(text: &str) -> Result<(TrainConfig, Vec<String>), ConfigError> {
    let mut kv = KvMap::parse(text)?;
    let mut warnings = Vec::new();

    let (task_name, task_line) = kv
        .take_raw("task")
        .ok_or(ConfigError::MissingKey { key: "task" })?;
    let (method_name, method_line) = kv
        .take_raw("method")
        .ok_or(ConfigError::MissingKey { key: "method" })?;

    let learning_rate: f64 = kv.require("learning_rate", "a float")?;
    if !(learning_rate > 0.0) {
        return Err(ConfigError::NonPositiveLearningRate);
    }
    let epochs: usize = kv.require("epochs", "a positive integer")?;
    if epochs == 0 {
        return Err(ConfigError::Invalid("epochs must be at least 1".into()));
    }
    let batch_size: usize = kv.require("batch_size", "a positive integer")?;
    let data_seed: u64 = kv.require("data_seed", "a 64-bit integer")?;
    let init_seed: u64 = kv.require("init_seed", "a 64-bit integer")?;

    let momentum = kv.take::<f64>("momentum", "a float")?;
    let coefficients = kv.take_f64_list("coefficients")?;
    let switch_epoch = kv.take::<usize>("switch_epoch", "a non-negative integer")?.unwrap_or(0);
    let weight_decay = kv.take::<f64>("weight_decay", "a float")?.unwrap_or(0.0);
    let hidden = kv.take_usize_list("hidden")?.unwrap_or_default();
    let activation = match kv.take_raw("activation") {
        None => Activation::Relu,
        Some((v, line)) => match v.as_str() {
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            _ => {
                return Err(ConfigError::TypeError {
                    line,
                    key: "activation".into(),
                    value: v,
                    expected: "relu or tanh",
                })
            }
        },
    };
    let eval_split = kv.take::<f64>("eval_split", "a float in [0, 1)")?.unwrap_or(0.0);
    if !(0.0..1.0).contains(&eval_split) {
        return Err(ConfigError::Invalid(format!(
            "eval_split must lie in [0, 1), got {eval_split}"
        )));
    }
    let output = kv.take_raw("output").map(|(v, _)| PathBuf::from(v));

    // Task-scoped keys.
    let n = kv.take::<usize>("n", "a positive integer")?;
    let noise = kv.take::<f64>("noise", "a non-negative float")?;
    let dim = kv.take::<usize>("dim", "a positive integer")?;
    let true_w = kv.take_f64_list("true_w")?;
    let true_b = kv.take::<f64>("true_b", "a float")?;
    let eigenvalues = kv.take_f64_list("eigenvalues")?;
    let w0 = kv.take_f64_list("w0")?;

    let reject_for_task = |kv: &KvMap,
                           task: &'static str,
                           key: &str,
                           present: bool|
     -> Result<(), ConfigError> {
        if present {
            Err(ConfigError::KeyNotForTask { line: kv.line_of(key), key: key.into(), task })
        } else {
            Ok(())
        }
    };

    let task = match task_name.as_str() {
        "two_moons" => {
            reject_for_task(&kv, "two_moons", "dim", dim.is_some())?;
            reject_for_task(&kv, "two_moons", "true_w", true_w.is_some())?;
            reject_for_task(&kv, "two_moons", "true_b", true_b.is_some())?;
            reject_for_task(&kv, "two_moons", "eigenvalues", eigenvalues.is_some())?;
            reject_for_task(&kv, "two_moons", "w0", w0.is_some())?;
            TaskSpec::TwoMoons { n: n.unwrap_or(200), noise: noise.unwrap_or(0.0) }
        }
        "linreg" => {
            reject_for_task(&kv, "linreg", "eigenvalues", eigenvalues.is_some())?;
            reject_for_task(&kv, "linreg", "w0", w0.is_some())?;
            let dim = dim.unwrap_or(2);
            let true_w = true_w.unwrap_or_else(|| vec![1.0; dim]);
            if true_w.len() != dim {
                return Err(ConfigError::Invalid(format!(
                    "true_w has {} entries, dim is {dim}",
                    true_w.len()
                )));
            }
            TaskSpec::LinReg {
                n: n.unwrap_or(200),
                dim,
                noise: noise.unwrap_or(0.0),
                true_w,
                true_b: true_b.unwrap_or(0.0),
            }
        }
        "quadratic" => {
            reject_for_task(&kv, "quadratic", "n", n.is_some())?;
            reject_for_task(&kv, "quadratic", "noise", noise.is_some())?;
            reject_for_task(&kv, "quadratic", "dim", dim.is_some())?;
            reject_for_task(&kv, "quadratic", "true_w", true_w.is_some())?;
            reject_for_task(&kv, "quadratic", "true_b", true_b.is_some())?;
            reject_for_task(&kv, "quadratic", "hidden", !hidden.is_empty())?;
            reject_for_task(&kv, "quadratic", "eval_split", eval_split != 0.0)?;
            let eigenvalues = eigenvalues.unwrap_or_else(|| vec![1.0]);
            let mut w0 = w0.unwrap_or_else(|| vec![1.0]);
            if w0.len() == 1 && eigenvalues.len() > 1 {
                w0 = vec![w0[0]; eigenvalues.len()];
            }
            if w0.len() != eigenvalues.len() {
                return Err(ConfigError::Invalid(format!(
                    "w0 has {} entries, eigenvalues has {}",
                    w0.len(),
                    eigenvalues.len()
                )));
            }
            TaskSpec::Quadratic { eigenvalues, w0 }
        }
        other => {
            return Err(ConfigError::TypeError {
                line: task_line,
                key: "task".into(),
                value: other.to_string(),
                expected: "two_moons, linreg, or quadratic",
            })
        }
    };

    let method = match method_name.as_str() {
        "sgd" => Method::Sgd,
        "sgd_m" => Method::SgdM,
        "tm_sgd" => Method::TmSgd,
        "tm_sgd_m" => Method::TmSgdM,
        "generic" => {
            let c = coefficients
                .as_ref()
                .ok_or(ConfigError::MissingKey { key: "coefficients" })?;
            if c.len() != 4 {
                return Err(ConfigError::Invalid(format!(
                    "coefficients needs exactly 4 values (a1,a2,a3,b), got {}",
                    c.len()
                )));
            }
            Method::Generic(MultistepCoefficients::new(c[0], c[1], c[2], c[3])?)
        }
        other => {
            return Err(ConfigError::TypeError {
                line: method_line,
                key: "method".into(),
                value: other.to_string(),
                expected: "sgd, sgd_m, tm_sgd, tm_sgd_m, or generic",
            })
        }
    };
    if coefficients.is_some() && !matches!(method, Method::Generic(_)) {
        return Err(ConfigError::KeyNotForMethod {
            line: kv.line_of("coefficients"),
            key: "coefficients".into(),
            methods: "method generic",
        });
    }
    if momentum.is_some() && !method.uses_momentum() {
        return Err(ConfigError::KeyNotForMethod {
            line: kv.line_of("momentum"),
            key: "momentum".into(),
            methods: "methods sgd_m and tm_sgd_m",
        });
    }
    if method.uses_momentum() && momentum.is_none() {
        return Err(ConfigError::MissingKey { key: "momentum" });
    }

    kv.reject_unused()?;

    if switch_epoch >= epochs && matches!(method, Method::TmSgd | Method::TmSgdM | Method::Generic(_))
    {
        warnings.push(format!(
            "switch_epoch {switch_epoch} >= epochs {epochs}: the run never leaves the SGD phase"
        ));
    }

    let optimizer = OptimizerConfig {
        method,
        learning_rate,
        momentum: momentum.unwrap_or(0.0),
        switch_epoch,
        weight_decay,
    }
    .validated()?;

    Ok((
        TrainConfig {
            task,
            optimizer,
            epochs,
            batch_size,
            data_seed,
            init_seed,
            hidden,
            activation,
            eval_split,
            output,
        },
        warnings,
    ))
}

/// ODE benchmark configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Halving step-size ladder for the order study.
    pub taus: Vec<f64>,
    /// Decay rates for the stability-limit table (all negative).
    pub lambdas: Vec<f64>,
    /// Problems to run: any subset of {decay, diag}.
    pub problems: Vec<String>,
    pub output: Option<PathBuf>,
}

pub fn parse_bench_config(path: &Path) -> Result<BenchConfig, ConfigError> {
    parse_bench_config_str(&read(path)?)
}

pub fn parse_bench_config_str(text: &str) -> Result<BenchConfig, ConfigError> {
    let mut kv = KvMap::parse(text)?;
    let taus = kv
        .take_f64_list("taus")?
        .unwrap_or_else(crate::ode::default_tau_ladder);
    let lambdas = kv.take_f64_list("lambdas")?.unwrap_or_else(|| vec![-0.5, -1.0, -2.0]);
    if let Some(&bad) = lambdas.iter().find(|&&l| !(l < 0.0)) {
        return Err(ConfigError::Invalid(format!("lambdas must be negative, got {bad}")));
    }
    let problems = match kv.take_raw("problems") {
        None => vec!["decay".to_string(), "diag".to_string()],
        Some((v, line)) => {
            let names: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
            for name in &names {
                if name != "decay" && name != "diag" {
                    return Err(ConfigError::TypeError {
                        line,
                        key: "problems".into(),
                        value: name.clone(),
                        expected: "a comma-separated subset of decay, diag",
                    });
                }
            }
            names
        }
    };
    let output = kv.take_raw("output").map(|(v, _)| PathBuf::from(v));
    kv.reject_unused()?;
    Ok(BenchConfig { taus, lambdas, problems, output })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
task = two_moons
method = sgd
learning_rate = 0.05
epochs = 3
batch_size = 10
data_seed = 1
init_seed = 2
";

    #[test]
    fn minimal_config_parses() {
        let (cfg, warnings) = parse_train_config_str(MINIMAL).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(cfg.task, TaskSpec::TwoMoons { n: 200, noise: 0.0 });
        assert_eq!(cfg.optimizer.method, Method::Sgd);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.default_output_name(), "two_moons_sgd_seed1.csv");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = format!("# experiment\n\n{MINIMAL}\nhidden = 16 # one hidden layer\n");
        let (cfg, _) = parse_train_config_str(&text).unwrap();
        assert_eq!(cfg.hidden, vec![16]);
    }

    #[test]
    fn negative_learning_rate_message() {
        let text = MINIMAL.replace("learning_rate = 0.05", "learning_rate = -0.1");
        let err = parse_train_config_str(&text).unwrap_err();
        assert!(err.to_string().contains("learning_rate must be positive"), "{err}");
    }

    #[test]
    fn missing_key_is_named() {
        let text = MINIMAL.replace("data_seed = 1\n", "");
        let err = parse_train_config_str(&text).unwrap_err();
        assert!(matches!(err, ConfigError::MissingKey { key: "data_seed" }));
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let text = format!("{MINIMAL}frobnicate = 7\n");
        let err = parse_train_config_str(&text).unwrap_err();
        match err {
            ConfigError::UnknownKey { key, line } => {
                assert_eq!(key, "frobnicate");
                assert_eq!(line, 8);
            }
            other => panic!("expected UnknownKey, got {other}"),
        }
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let text = format!("{MINIMAL}epochs = 4\n");
        assert!(matches!(
            parse_train_config_str(&text).unwrap_err(),
            ConfigError::DuplicateKey { .. }
        ));
    }

    #[test]
    fn type_error_names_line_and_key() {
        let text = MINIMAL.replace("epochs = 3", "epochs = soon");
        match parse_train_config_str(&text).unwrap_err() {
            ConfigError::TypeError { line, key, value, .. } => {
                assert_eq!(line, 4);
                assert_eq!(key, "epochs");
                assert_eq!(value, "soon");
            }
            other => panic!("expected TypeError, got {other}"),
        }
    }

    #[test]
    fn switch_beyond_epochs_warns_but_parses() {
        let text = format!(
            "{}switch_epoch = 75\n",
            MINIMAL.replace("method = sgd", "method = tm_sgd")
        );
        let (cfg, warnings) = parse_train_config_str(&text).unwrap();
        assert_eq!(cfg.optimizer.switch_epoch, 75);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("never leaves the SGD phase"));
    }

    #[test]
    fn momentum_scoping() {
        let text = format!("{MINIMAL}momentum = 0.9\n");
        assert!(matches!(
            parse_train_config_str(&text).unwrap_err(),
            ConfigError::KeyNotForMethod { .. }
        ));
        let text = MINIMAL.replace("method = sgd", "method = sgd_m");
        assert!(matches!(
            parse_train_config_str(&text).unwrap_err(),
            ConfigError::MissingKey { key: "momentum" }
        ));
        let text = format!("{}momentum = 0.9\n", MINIMAL.replace("method = sgd", "method = sgd_m"));
        let (cfg, _) = parse_train_config_str(&text).unwrap();
        assert_eq!(cfg.optimizer.momentum, 0.9);
    }

    #[test]
    fn generic_requires_consistent_coefficients() {
        let base = MINIMAL.replace("method = sgd", "method = generic");
        assert!(matches!(
            parse_train_config_str(&base).unwrap_err(),
            ConfigError::MissingKey { key: "coefficients" }
        ));
        let bad = format!("{base}coefficients = 1.5,-1,0.4,1\n");
        assert!(matches!(parse_train_config_str(&bad).unwrap_err(), ConfigError::Optim(_)));
        let good = format!("{base}coefficients = 1.5,-1,0.5,1\n");
        let (cfg, _) = parse_train_config_str(&good).unwrap();
        assert!(matches!(cfg.optimizer.method, Method::Generic(_)));
    }

    #[test]
    fn task_scoped_keys_are_enforced() {
        let text = format!("{MINIMAL}eigenvalues = 1.0\n");
        assert!(matches!(
            parse_train_config_str(&text).unwrap_err(),
            ConfigError::KeyNotForTask { .. }
        ));
        let quad = MINIMAL.replace("task = two_moons", "task = quadratic");
        let text = format!("{quad}noise = 0.1\n");
        assert!(matches!(
            parse_train_config_str(&text).unwrap_err(),
            ConfigError::KeyNotForTask { .. }
        ));
    }

    #[test]
    fn quadratic_broadcasts_w0() {
        let quad = MINIMAL.replace("task = two_moons", "task = quadratic");
        let text = format!("{quad}eigenvalues = 1.0,3.0\nw0 = 2.0\n");
        let (cfg, _) = parse_train_config_str(&text).unwrap();
        assert_eq!(
            cfg.task,
            TaskSpec::Quadratic { eigenvalues: vec![1.0, 3.0], w0: vec![2.0, 2.0] }
        );
    }

    #[test]
    fn bench_config_defaults() {
        let cfg = parse_bench_config_str("").unwrap();
        assert_eq!(cfg.taus.len(), 7);
        assert_eq!(cfg.lambdas, vec![-0.5, -1.0, -2.0]);
        assert_eq!(cfg.problems, vec!["decay", "diag"]);
    }

    #[test]
    fn bench_config_rejects_positive_lambda() {
        assert!(parse_bench_config_str("lambdas = -1.0,2.0\n").is_err());
    }
}
