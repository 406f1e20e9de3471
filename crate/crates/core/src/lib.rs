//! Decentralized stochastic optimisation with local updates.
//!
//! The crate simulates `n` nodes minimising `f(x) = (1/n) Σ f_i(x)` over a
//! communication graph and provides:
//!
//! - [`topology`]: static circulant gossip matrices, the random
//!   server-worker relay matrix and contraction-factor estimation;
//! - [`problems`]: heterogeneous ridge regression with a closed-form optimum
//!   and a smooth nonconvex logistic problem, both with additive Gaussian
//!   gradient noise;
//! - [`algorithms`]: spatio-temporal gradient tracking (ST-GT), FlexGT,
//!   DSGT (`tau = 1`), Scaffold⁺ and centralized SGD as round-stepped
//!   state machines;
//! - [`metrics`]: optimality gap, consensus error, tracking residual and the
//!   Lyapunov function;
//! - [`harness`]: configs, seeded experiment runs, CSV traces and the CLI.

pub mod algorithms;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod problems;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};
