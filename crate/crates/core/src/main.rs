//! Command-line front end: `train`, `odebench`, `gradcheck`, `compare`.
//!
//! Exit codes: 0 success, 1 generic failure (including a failing
//! gradcheck), 2 config error, 3 divergence, 4 I/O error.

use clap::{Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tmsgd::harness::{
    self, compare_runs, parse_bench_config, parse_train_config, run_gradcheck, run_odebench,
    run_training, write_metrics_csv, HarnessError,
};

#[derive(Parser)]
#[command(
    name = "tmsgd",
    about = "Multistep-SGD training harness and ODE integrator bench",
    version
)]
struct Cli {
    /// Directory that output files are resolved against.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Suppress progress output (warnings and errors still print).
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training experiment and write its metrics CSV.
    Train { config: PathBuf },
    /// Run the integrator benchmark (orders + stability limits).
    Odebench { config: PathBuf },
    /// Check tape gradients against finite differences on random MLPs.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare two metrics CSVs.
    Compare { csv_a: PathBuf, csv_b: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

/// Print without panicking when the reader hangs up (e.g. `| head`).
fn print_all(text: &str) {
    let stdout = std::io::stdout();
    let _ = stdout.lock().write_all(text.as_bytes());
    let _ = writeln!(stdout.lock());
}

fn resolve(out_dir: &Path, file: &Path) -> PathBuf {
    if file.is_absolute() {
        file.to_path_buf()
    } else {
        out_dir.join(file)
    }
}

fn run(cli: &Cli) -> Result<ExitCode, HarnessError> {
    match &cli.command {
        Command::Train { config } => {
            let (cfg, warnings) = parse_train_config(config)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            let record = run_training(&cfg)?;
            let name = cfg
                .output
                .clone()
                .unwrap_or_else(|| PathBuf::from(cfg.default_output_name()));
            let path = resolve(&cli.out, &name);
            write_metrics_csv(&record, &path)?;
            if !cli.quiet {
                eprintln!(
                    "run {} / {}: batch_plan_hash={:#018x} init_param_hash={:#018x}",
                    record.task, record.method, record.batch_plan_hash, record.init_param_hash
                );
                println!(
                    "{}: final train_loss {} eval_metric {} ({} epochs, {} steps)",
                    path.display(),
                    record.final_train_loss(),
                    record.final_eval_metric(),
                    record.rows.len(),
                    record.rows.last().map(|r| r.steps).unwrap_or(0)
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Odebench { config } => {
            let cfg = parse_bench_config(config)?;
            let report = run_odebench(&cfg)?;
            let name = cfg
                .output
                .clone()
                .unwrap_or_else(|| PathBuf::from("odebench.csv"));
            let path = resolve(&cli.out, &name);
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)
                        .map_err(|e| harness::HarnessError::Io {
                            path: path.display().to_string(),
                            source: e,
                        })?;
                }
            }
            std::fs::write(&path, report.to_csv_string()).map_err(|e| HarnessError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            if !cli.quiet {
                println!("{}: {} rows", path.display(), report.rows.len());
                for row in &report.rows {
                    if let harness::BenchRow::Order { method, problem, p } = row {
                        println!("  order[{method}, {problem}] = {p:.4}");
                    }
                }
                for row in &report.rows {
                    if let harness::BenchRow::Stability { method, lambda, limit } = row {
                        println!("  stability[{method}, lambda={lambda}] = {limit:.6}");
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { seed } => {
            let report = run_gradcheck(*seed)?;
            print_all(&report.to_string());
            if report.passed {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Compare { csv_a, csv_b } => {
            let comparison = compare_runs(csv_a, csv_b)?;
            print_all(&comparison.to_string());
            Ok(ExitCode::SUCCESS)
        }
    }
}
