//! Forward Euler and the three-term multistep integrator, plus the
//! numerical-analysis toolkit that verifies their properties: empirical
//! convergence order, zero-stability of the history polynomial, stability
//! limits on `dx/dt = lambda x`, and gradient-flow tracking error.
//!
//! The multistep scheme is the integrator twin of the optimizer update:
//! `x_{k+1} = 1.5 x_k - x_{k-1} + 0.5 x_{k-2} + tau f(x_k)`, bootstrapped
//! with two Euler steps. Its local truncation error is O(tau^3) (global
//! second order) against Euler's O(tau^2) (global first order), while its
//! stability interval on decaying linear problems is half of Euler's.

use crate::optim::MultistepCoefficients;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("time span [{t0}, {t_end}] is not a whole number of steps of {tau} (residual {residual:e})")]
    UnevenSpan { t0: f64, t_end: f64, tau: f64, residual: f64 },
    #[error("span must satisfy t_end > t0, got [{t0}, {t_end}]")]
    EmptySpan { t0: f64, t_end: f64 },
    #[error("multistep integration needs at least 3 steps, span/tau gives {steps}")]
    TooFewSteps { steps: usize },
    #[error("state became non-finite at step {step}")]
    NonFiniteState { step: usize },
    #[error("problem `{name}` has no exact solution")]
    MissingExact { name: String },
    #[error("order estimation needs at least 3 step sizes, got {0}")]
    TooFewTaus(usize),
    #[error("step sizes must halve: tau[{index}] = {tau} does not halve {prev}")]
    NotHalving { index: usize, tau: f64, prev: f64 },
    #[error("global error {error:e} at tau = {tau} is too small to fit an order (problem too easy)")]
    DegenerateError { tau: f64, error: f64 },
    #[error("stability_limit requires lambda < 0, got {0}")]
    NonNegativeLambda(f64),
    #[error("exact solution at t0 disagrees with x0 (max deviation {deviation:e})")]
    InconsistentInitialState { deviation: f64 },
    #[error("trajectory diverged at step {step}")]
    Instability { step: usize },
}

type Rhs = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type Exact = Box<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// An initial value problem `dx/dt = f(x)` on `[t0, t_end]`, with an
/// optional closed-form solution for error measurement.
pub struct OdeProblem {
    name: String,
    rhs: Rhs,
    exact: Option<Exact>,
    x0: Vec<f64>,
    t0: f64,
    t_end: f64,
}

impl std::fmt::Debug for OdeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OdeProblem")
            .field("name", &self.name)
            .field("dim", &self.x0.len())
            .field("t0", &self.t0)
            .field("t_end", &self.t_end)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl OdeProblem {
    pub fn new(
        name: impl Into<String>,
        rhs: Rhs,
        exact: Option<Exact>,
        x0: Vec<f64>,
        t0: f64,
        t_end: f64,
    ) -> Result<Self, OdeError> {
        if !(t_end > t0) {
            return Err(OdeError::EmptySpan { t0, t_end });
        }
        if let Some(exact) = &exact {
            let at0 = exact(t0);
            let deviation = at0
                .iter()
                .zip(&x0)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if deviation > 1e-12 {
                return Err(OdeError::InconsistentInitialState { deviation });
            }
        }
        Ok(OdeProblem { name: name.into(), rhs, exact, x0, t0, t_end })
    }

    /// Scalar linear problem `dx/dt = lambda x`, exact `x0 e^(lambda t)`.
    pub fn linear(lambda: f64, x0: f64, t_end: f64) -> Self {
        OdeProblem::new(
            format!("linear({lambda})"),
            Box::new(move |x| vec![lambda * x[0]]),
            Some(Box::new(move |t| vec![x0 * (lambda * t).exp()])),
            vec![x0],
            0.0,
            t_end,
        )
        .expect("valid by construction")
    }

    /// Diagonal linear system `dx_i/dt = lambda_i x_i`.
    pub fn linear_diag(lambdas: Vec<f64>, x0: Vec<f64>, t_end: f64) -> Self {
        assert_eq!(lambdas.len(), x0.len());
        let l = lambdas.clone();
        let (le, x0e) = (lambdas.clone(), x0.clone());
        OdeProblem::new(
            format!("diag({lambdas:?})"),
            Box::new(move |x| x.iter().zip(&l).map(|(xi, li)| li * xi).collect()),
            Some(Box::new(move |t| {
                x0e.iter().zip(&le).map(|(xi, li)| xi * (li * t).exp()).collect()
            })),
            x0,
            0.0,
            t_end,
        )
        .expect("valid by construction")
    }

    /// Gradient flow of the quadratic bowl `L(w) = 0.5 sum lambda_i w_i^2`:
    /// `dw_i/dt = -(lambda_i w_i)`, exact `w_i(0) e^(-lambda_i t)`.
    ///
    /// The right-hand side negates the product `lambda_i * w_i` exactly the
    /// way the optimizer applies the analytic gradient, so full-batch SGD
    /// with lr = tau reproduces Euler on this problem bit for bit.
    pub fn quadratic_flow(eigenvalues: Vec<f64>, w0: Vec<f64>, t_end: f64) -> Self {
        assert_eq!(eigenvalues.len(), w0.len());
        let l = eigenvalues.clone();
        let (le, w0e) = (eigenvalues.clone(), w0.clone());
        OdeProblem::new(
            format!("quadratic_flow({eigenvalues:?})"),
            Box::new(move |w| w.iter().zip(&l).map(|(wi, li)| -(li * wi)).collect()),
            Some(Box::new(move |t| {
                w0e.iter().zip(&le).map(|(wi, li)| wi * (-(li * t)).exp()).collect()
            })),
            w0,
            0.0,
            t_end,
        )
        .expect("valid by construction")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn rhs(&self, x: &[f64]) -> Vec<f64> {
        (self.rhs)(x)
    }

    pub fn exact_at(&self, t: f64) -> Option<Vec<f64>> {
        self.exact.as_ref().map(|e| e(t))
    }

    pub fn span(&self) -> (f64, f64) {
        (self.t0, self.t_end)
    }

    /// Number of uniform steps of `tau` covering the span; errors out if
    /// the span is not a whole multiple (silently adjusting the step would
    /// corrupt order estimates).
    fn step_count(&self, tau: f64) -> Result<usize, OdeError> {
        if !(tau > 0.0) {
            return Err(OdeError::NonPositiveStep(tau));
        }
        let span = self.t_end - self.t0;
        let steps = (span / tau).round();
        let residual = (steps * tau - span).abs();
        if steps < 1.0 || residual > 1e-9 * tau {
            return Err(OdeError::UnevenSpan { t0: self.t0, t_end: self.t_end, tau, residual });
        }
        Ok(steps as usize)
    }
}

/// Uniformly spaced iterates of one integration run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds at least x0")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorKind {
    Euler,
    TaylorMultistep,
}

impl IntegratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            IntegratorKind::Euler => "euler",
            IntegratorKind::TaylorMultistep => "tm",
        }
    }
}

fn check_finite(x: &[f64], step: usize) -> Result<(), OdeError> {
    if x.iter().any(|v| !v.is_finite()) {
        Err(OdeError::NonFiniteState { step })
    } else {
        Ok(())
    }
}

/// Forward Euler: `x_{k+1} = x_k + tau f(x_k)`.
pub fn euler_integrate(problem: &OdeProblem, tau: f64) -> Result<Trajectory, OdeError> {
    let steps = problem.step_count(tau)?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    let mut x = problem.x0.clone();
    states.push(x.clone());
    times.push(problem.t0);
    for k in 0..steps {
        let fx = problem.rhs(&x);
        for (xi, fi) in x.iter_mut().zip(&fx) {
            *xi += tau * fi;
        }
        check_finite(&x, k + 1)?;
        states.push(x.clone());
        times.push(problem.t0 + (k + 1) as f64 * tau);
    }
    Ok(Trajectory { times, states })
}

/// Three-term multistep scheme with the default coefficients; two forward
/// Euler steps populate the history first.
pub fn tm_integrate(problem: &OdeProblem, tau: f64) -> Result<Trajectory, OdeError> {
    multistep_integrate(problem, tau, &MultistepCoefficients::TAYLOR)
}

/// Generic three-term integrator
/// `x_{k+1} = a1 x_k + a2 x_{k-1} + a3 x_{k-2} + tau b f(x_k)`,
/// sharing the optimizer's combination kernel so the optimizer/integrator
/// correspondence is exact. Coefficients that read no history, e.g.
/// `(1, 0, 0, 1)`, reproduce [`euler_integrate`] without bootstrap.
pub fn multistep_integrate(
    problem: &OdeProblem,
    tau: f64,
    coeffs: &MultistepCoefficients,
) -> Result<Trajectory, OdeError> {
    let steps = problem.step_count(tau)?;
    let bootstrap = if coeffs.needs_history() { 2 } else { 0 };
    if steps < bootstrap + 1 {
        return Err(OdeError::TooFewSteps { steps });
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    let mut x = problem.x0.clone();
    let mut prev1 = x.clone();
    let mut prev2 = x.clone();
    states.push(x.clone());
    times.push(problem.t0);
    for k in 0..steps {
        let fx = problem.rhs(&x);
        if k < bootstrap {
            for i in 0..x.len() {
                let next = x[i] + tau * fx[i];
                prev2[i] = prev1[i];
                prev1[i] = x[i];
                x[i] = next;
            }
        } else {
            for i in 0..x.len() {
                let forcing = (tau * coeffs.b()) * fx[i];
                let next = coeffs.combine(x[i], prev1[i], prev2[i], forcing);
                prev2[i] = prev1[i];
                prev1[i] = x[i];
                x[i] = next;
            }
        }
        check_finite(&x, k + 1)?;
        states.push(x.clone());
        times.push(problem.t0 + (k + 1) as f64 * tau);
    }
    Ok(Trajectory { times, states })
}

/// Euclidean distance between the final state and `exact(t_end)`.
pub fn global_error(trajectory: &Trajectory, problem: &OdeProblem) -> Result<f64, OdeError> {
    let t_end = *trajectory.times.last().expect("non-empty trajectory");
    let exact = problem
        .exact_at(t_end)
        .ok_or_else(|| OdeError::MissingExact { name: problem.name.clone() })?;
    Ok(trajectory
        .final_state()
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Empirical convergence order from a halving ladder of step sizes.
#[derive(Debug, Clone)]
pub struct OrderEstimate {
    pub taus: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of log(error) against log(tau).
    pub p: f64,
}

/// Fit the global order of `integrate` on `problem` over `taus` (at least
/// three, each half the previous). A least-squares fit over the whole
/// ladder is less noise-sensitive than any single error ratio.
pub fn estimate_order<F>(
    integrate: F,
    problem: &OdeProblem,
    taus: &[f64],
) -> Result<OrderEstimate, OdeError>
where
    F: Fn(&OdeProblem, f64) -> Result<Trajectory, OdeError>,
{
    if taus.len() < 3 {
        return Err(OdeError::TooFewTaus(taus.len()));
    }
    for (i, pair) in taus.windows(2).enumerate() {
        if (pair[1] / pair[0] - 0.5).abs() > 1e-9 {
            return Err(OdeError::NotHalving { index: i + 1, tau: pair[1], prev: pair[0] });
        }
    }
    let mut errors = Vec::with_capacity(taus.len());
    for &tau in taus {
        let traj = integrate(problem, tau)?;
        let err = global_error(&traj, problem)?;
        if !(err > 1e-15) {
            return Err(OdeError::DegenerateError { tau, error: err });
        }
        errors.push(err);
    }
    let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    Ok(OrderEstimate { taus: taus.to_vec(), errors, p: sxy / sxx })
}

/// Standard halving ladder `2^-4 .. 2^-10`.
pub fn default_tau_ladder() -> Vec<f64> {
    (4..=10).map(|k| 0.5_f64.powi(k)).collect()
}

/// All roots of the monic cubic `z^3 + c2 z^2 + c1 z + c0` by Durand-Kerner
/// iteration, sorted by (re, im) for stable output. Residuals land at
/// machine precision for the well-separated cubics used here.
pub fn cubic_roots(c2: f64, c1: f64, c0: f64) -> [Complex64; 3] {
    let poly = |z: Complex64| ((z + c2) * z + c1) * z + c0;
    let seed = Complex64::new(0.4, 0.9);
    let mut roots = [seed, seed * seed, seed * seed * seed];
    for _ in 0..200 {
        let mut delta = 0.0_f64;
        for i in 0..3 {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..3 {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = poly(roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    roots.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    roots
}

/// Roots of the history polynomial of the default multistep scheme,
/// `rho(z) = z^3 - 1.5 z^2 + z - 0.5`. Consistency (`a1 + a2 + a3 = 1`)
/// forces the principal root 1; the two spurious roots have modulus
/// `sqrt(0.5)`, so the scheme is zero-stable.
pub fn characteristic_roots() -> [Complex64; 3] {
    history_roots(&MultistepCoefficients::TAYLOR)
}

/// Roots of `z^3 - a1 z^2 - a2 z - a3` for arbitrary coefficients.
pub fn history_roots(coeffs: &MultistepCoefficients) -> [Complex64; 3] {
    let (a1, a2, a3) = coeffs.a();
    cubic_roots(-a1, -a2, -a3)
}

fn max_root_modulus(kind: IntegratorKind, z: f64) -> f64 {
    match kind {
        // Characteristic root of Euler on dx/dt = lambda x: 1 + z.
        IntegratorKind::Euler => (1.0 + z).abs(),
        // Full characteristic polynomial of the multistep scheme:
        // zeta^3 - (1.5 + z) zeta^2 + zeta - 0.5.
        IntegratorKind::TaylorMultistep => cubic_roots(-(1.5 + z), 1.0, -0.5)
            .iter()
            .map(|r| r.norm())
            .fold(0.0, f64::max),
    }
}

/// Largest stable step size for `dx/dt = lambda x` (`lambda < 0`): the
/// supremum of `tau` such that every root of the method's characteristic
/// polynomial at `z = tau lambda` stays in the closed unit disk
/// (tolerance 1e-9 on the modulus). Bisection on `[0, 8/|lambda|]` down
/// to a 1e-6 interval.
pub fn stability_limit(kind: IntegratorKind, lambda: f64) -> Result<f64, OdeError> {
    if !(lambda < 0.0) {
        return Err(OdeError::NonNegativeLambda(lambda));
    }
    let stable = |tau: f64| max_root_modulus(kind, tau * lambda) <= 1.0 + 1e-9;
    let mut lo = 0.0;
    let mut hi = 8.0 / lambda.abs();
    debug_assert!(stable(lo) && !stable(hi));
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if stable(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Deviation of the discrete iterates from the exact gradient flow of
/// `L = 0.5 lambda w^2`: integrates `dw/dt = -(lambda w)` for `steps`
/// steps of `tau` and returns `|w_steps - w0 e^(-lambda steps tau)|`.
pub fn gradient_flow_tracking(
    lambda: f64,
    w0: f64,
    tau: f64,
    steps: usize,
    kind: IntegratorKind,
) -> Result<f64, OdeError> {
    let t_end = steps as f64 * tau;
    let problem = OdeProblem::quadratic_flow(vec![lambda], vec![w0], t_end);
    let traj = match kind {
        IntegratorKind::Euler => euler_integrate(&problem, tau),
        IntegratorKind::TaylorMultistep => tm_integrate(&problem, tau),
    }
    .map_err(|e| match e {
        OdeError::NonFiniteState { step } => OdeError::Instability { step },
        other => other,
    })?;
    let exact = w0 * (-(lambda * t_end)).exp();
    Ok((traj.final_state()[0] - exact).abs())
}
