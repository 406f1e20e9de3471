//! Scaffold⁺: Scaffold with a tunable global-control stepsize `γ_c`.
//!
//! `γ_c = |S_r|/n` gives the original Scaffold; `γ_c = 1` turns the server
//! into a relay between consecutive sampled sets and makes the method a
//! gradient-tracking scheme over a random network.

use nalgebra::{DMatrix, DVector};

use super::{guard, row_mean};
use crate::error::{Error, Result};
use crate::problems::{noisy_gradient_into, GradOracle};
use crate::rng::NodeStreams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaffoldPlan {
    pub tau: usize,
    /// Server stepsize `γ_g`.
    pub gamma_g: f64,
    /// Local stepsize `γ_l`.
    pub gamma_l: f64,
    /// Global control stepsize `γ_c` (may be zero).
    pub gamma_c: f64,
    pub rounds: usize,
}

impl ScaffoldPlan {
    pub fn validate(&self) -> Result<()> {
        if self.tau < 1 {
            return Err(Error::Plan(format!("tau must be >= 1, got {}", self.tau)));
        }
        if !(self.gamma_g > 0.0 && self.gamma_l > 0.0 && self.gamma_c >= 0.0) {
            return Err(Error::Plan(format!(
                "need gamma_g > 0, gamma_l > 0, gamma_c >= 0; got {}, {}, {}",
                self.gamma_g, self.gamma_l, self.gamma_c
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaffoldState {
    /// Server model `x`.
    pub x_server: DVector<f64>,
    /// Global control `c`.
    pub c_server: DVector<f64>,
    /// Worker models `x_i` (`n × p`); a worker keeps its last local model
    /// `x_{i,k+1/2}` until it is sampled again.
    pub workers: DMatrix<f64>,
    /// Local controls `c_i` (`n × p`).
    pub controls: DMatrix<f64>,
    /// Last round in which each worker was sampled.
    pub last_sampled: Vec<Option<usize>>,
    /// Last stochastic gradient drawn by each worker.
    pub last_grad: DMatrix<f64>,
    /// Within-round gradient averages of the workers sampled in the last
    /// round (other rows are stale).
    pub round_grad_avg: DMatrix<f64>,
    pub round: usize,
}

impl ScaffoldState {
    /// All workers start at `x0` with zero local and global controls, so the
    /// first tracking variable is `c + g − c_i = g`. No gradients are drawn.
    pub fn init<O: GradOracle + ?Sized>(problem: &O, x0: &[f64]) -> Result<Self> {
        problem.check_point(x0)?;
        let (n, p) = (problem.num_nodes(), problem.dim());
        let x = DVector::from_column_slice(x0);
        Ok(Self {
            workers: DMatrix::from_fn(n, p, |_, k| x[k]),
            x_server: x,
            c_server: DVector::zeros(p),
            controls: DMatrix::zeros(n, p),
            last_sampled: vec![None; n],
            last_grad: DMatrix::zeros(n, p),
            round_grad_avg: DMatrix::zeros(n, p),
            round: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.workers.nrows()
    }

    /// Tracking variables `y_i = c + g_i − c_i` built from each worker's
    /// most recent gradient.
    pub fn tracking(&self) -> DMatrix<f64> {
        let (n, p) = self.workers.shape();
        DMatrix::from_fn(n, p, |i, k| {
            self.c_server[k] + self.last_grad[(i, k)] - self.controls[(i, k)]
        })
    }

    pub fn mean_worker(&self) -> Vec<f64> {
        row_mean(&self.workers)
    }
}

/// Runs one Scaffold⁺ round for the sampled workers `sampled`.
pub fn scaffold_plus_round<O: GradOracle + ?Sized>(
    state: &mut ScaffoldState,
    sampled: &[usize],
    plan: &ScaffoldPlan,
    problem: &O,
    streams: &mut NodeStreams,
) -> Result<()> {
    plan.validate()?;
    let (n, p) = state.workers.shape();
    if sampled.is_empty() {
        return Err(Error::Plan("sampled worker set is empty".into()));
    }
    if let Some(&bad) = sampled.iter().find(|&&i| i >= n) {
        return Err(Error::NodeOutOfRange { node: bad, n });
    }
    let (tau, gamma_l) = (plan.tau as f64, plan.gamma_l);
    let x = state.x_server.clone();
    let c = state.c_server.clone();
    let mut model_delta = DVector::zeros(p);
    let mut control_delta = DVector::zeros(p);
    let mut xi = vec![0.0; p];
    let mut gi = vec![0.0; p];
    let mut gsum = vec![0.0; p];
    for &i in sampled {
        xi.copy_from_slice(x.as_slice());
        gsum.fill(0.0);
        for _ in 0..plan.tau {
            noisy_gradient_into(problem, i, &xi, streams.node(i), &mut gi);
            for k in 0..p {
                xi[k] -= gamma_l * (c[k] + gi[k] - state.controls[(i, k)]);
                gsum[k] += gi[k];
            }
        }
        for k in 0..p {
            let c_old = state.controls[(i, k)];
            let c_new = c_old - c[k] + (x[k] - xi[k]) / (tau * gamma_l);
            model_delta[k] += xi[k] - x[k];
            control_delta[k] += c_new - c_old;
            state.controls[(i, k)] = c_new;
            state.workers[(i, k)] = xi[k];
            state.last_grad[(i, k)] = gi[k];
            state.round_grad_avg[(i, k)] = gsum[k] / tau;
        }
        state.last_sampled[i] = Some(state.round);
    }
    let s = sampled.len() as f64;
    state.x_server += model_delta * (plan.gamma_g / s);
    state.c_server += control_delta * (plan.gamma_c / s);
    state.round += 1;
    guard(
        &DMatrix::from_column_slice(p, 1, state.x_server.as_slice()),
        state.round,
    )?;
    guard(&state.workers, state.round)
}
