//! Integrator benchmark: per-step-size global errors, fitted convergence
//! orders, and stability limits, emitted as one flat CSV.

use super::{map_items, HarnessError};
use crate::harness::config::BenchConfig;
use crate::ode::{
    estimate_order, euler_integrate, global_error, stability_limit, tm_integrate, IntegratorKind,
    OdeProblem, Trajectory,
};

#[derive(Debug, Clone, PartialEq)]
pub enum BenchRow {
    /// Global error of one (method, problem, tau) run.
    Error { method: &'static str, problem: String, tau: f64, error: f64 },
    /// Fitted order over the whole ladder.
    Order { method: &'static str, problem: String, p: f64 },
    /// Largest stable step size on `dx/dt = lambda x`.
    Stability { method: &'static str, lambda: f64, limit: f64 },
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// Schema: `kind,method,problem,parameter,value`. `parameter` holds tau
    /// for error rows, lambda for stability rows, and is empty for orders.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("kind,method,problem,parameter,value\n");
        for row in &self.rows {
            match row {
                BenchRow::Error { method, problem, tau, error } => {
                    out.push_str(&format!("error,{method},{problem},{tau},{error}\n"));
                }
                BenchRow::Order { method, problem, p } => {
                    out.push_str(&format!("order,{method},{problem},,{p}\n"));
                }
                BenchRow::Stability { method, lambda, limit } => {
                    out.push_str(&format!("stability,{method},linear,{lambda},{limit}\n"));
                }
            }
        }
        out
    }

    pub fn fitted_order(&self, method: &str, problem: &str) -> Option<f64> {
        self.rows.iter().find_map(|r| match r {
            BenchRow::Order { method: m, problem: p, p: order }
                if *m == method && p == problem =>
            {
                Some(*order)
            }
            _ => None,
        })
    }

    pub fn stability(&self, method: &str, lambda: f64) -> Option<f64> {
        self.rows.iter().find_map(|r| match r {
            BenchRow::Stability { method: m, lambda: l, limit }
                if *m == method && *l == lambda =>
            {
                Some(*limit)
            }
            _ => None,
        })
    }
}

fn make_problem(name: &str) -> OdeProblem {
    match name {
        "decay" => OdeProblem::linear(-1.0, 1.0, 1.0),
        "diag" => OdeProblem::linear_diag(vec![-1.0, -3.0], vec![1.0, 1.0], 1.0),
        other => unreachable!("config validation admits only decay/diag, got {other}"),
    }
}

fn integrate(kind: IntegratorKind, p: &OdeProblem, tau: f64) -> Result<Trajectory, crate::ode::OdeError> {
    match kind {
        IntegratorKind::Euler => euler_integrate(p, tau),
        IntegratorKind::TaylorMultistep => tm_integrate(p, tau),
    }
}

/// Run the full benchmark grid. Grid cells are independent, so they spread
/// over the rayon pool under the `parallel` feature; row order is fixed by
/// the config regardless.
pub fn run_odebench(config: &BenchConfig) -> Result<BenchReport, HarnessError> {
    let methods = [IntegratorKind::Euler, IntegratorKind::TaylorMultistep];
    let cells: Vec<(String, IntegratorKind)> = config
        .problems
        .iter()
        .flat_map(|p| methods.iter().map(move |m| (p.clone(), *m)))
        .collect();

    let results = map_items(&cells, |(problem_name, kind)| -> Result<Vec<BenchRow>, HarnessError> {
        let problem = make_problem(problem_name);
        let mut rows = Vec::with_capacity(config.taus.len() + 1);
        for &tau in &config.taus {
            let traj = integrate(*kind, &problem, tau)?;
            let error = global_error(&traj, &problem)?;
            rows.push(BenchRow::Error {
                method: kind.name(),
                problem: problem_name.clone(),
                tau,
                error,
            });
        }
        let estimate = estimate_order(|p, tau| integrate(*kind, p, tau), &problem, &config.taus)?;
        rows.push(BenchRow::Order {
            method: kind.name(),
            problem: problem_name.clone(),
            p: estimate.p,
        });
        Ok(rows)
    });

    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    for &lambda in &config.lambdas {
        for kind in methods {
            rows.push(BenchRow::Stability {
                method: kind.name(),
                lambda,
                limit: stability_limit(kind, lambda)?,
            });
        }
    }
    Ok(BenchReport { rows })
}
