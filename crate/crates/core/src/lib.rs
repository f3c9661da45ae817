//! Multistep gradient-descent optimizers, viewed through the lens of ODE
//! integration.
//!
//! Plain SGD is forward Euler applied to the gradient-flow equation
//! `dW/dt = -grad L(W)`. Replacing Euler with a three-term multistep
//! update, `W_{k+1} = 1.5 W_k - W_{k-1} + 0.5 W_{k-2} - lr * grad`, raises
//! the local truncation error from O(tau^2) to O(tau^3) at the cost of a
//! smaller stability interval. This crate provides:
//!
//! - [`autodiff`]: a reverse-mode tape over dense f64 tensors, with a
//!   finite-difference oracle,
//! - [`models`]: seeded MLPs for regression and classification,
//! - [`optim`]: SGD, SGD with momentum, their multistep variants, the
//!   generalized three-term update, and switch-epoch scheduling,
//! - [`ode`]: forward Euler and the multistep integrator plus order,
//!   zero-stability, and stability-limit analysis,
//! - [`data`]: deterministic synthetic datasets, CSV loading, and seeded
//!   minibatch plans,
//! - [`harness`]: config-driven training/benchmark runs writing CSV
//!   metrics, built for exact reproducibility.
//!
//! Everything is a pure function of explicit 64-bit seeds; rerunning any
//! configuration on the same platform yields bit-identical results. With
//! the default `parallel` feature, independent runs and grid points spread
//! over a rayon pool without affecting any output.

// Validation sites use `!(x > 0.0)` so NaN fails closed; the suggested
// rewrite `x <= 0.0` would let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
pub mod harness;
pub mod models;
pub mod ode;
pub mod optim;
pub mod rng;
