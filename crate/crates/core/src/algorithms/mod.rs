//! Round-stepped optimisers sharing one oracle and topology interface.
//!
//! Every state machine advances exactly one communication round per call and
//! consumes exactly `tau` gradient draws from each participating node's
//! stream, so runs fed the same [`NodeStreams`](crate::rng::NodeStreams)
//! are comparable draw for draw.

mod centralized;
mod scaffold;
mod stgt;

pub use centralized::centralized_sgd_round;
pub use scaffold::{scaffold_plus_round, ScaffoldPlan, ScaffoldState};
pub(crate) use stgt::row_mean;
pub use stgt::{flexgt_round, stgt_round, stgt_round_per_node, StgtState};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Norm beyond which an iterate is treated as divergent.
pub const BLOWUP_NORM: f64 = 1e12;

/// Which gradients enter the running average subtracted at a round boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RoundAverage {
    /// All `tau` gradients of the round, including the one drawn at the
    /// round-start iterate. Keeps the tracking identity exact.
    #[default]
    IncludeRoundStart,
    /// Only the `tau − 1` gradients drawn during the local phase.
    ExcludeRoundStart,
}

/// Schedule for the gradient-tracking methods and centralized SGD.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundPlan {
    pub tau: usize,
    pub gamma: f64,
    pub rounds: usize,
    pub round_average: RoundAverage,
}

impl RoundPlan {
    pub fn new(tau: usize, gamma: f64, rounds: usize) -> Self {
        Self {
            tau,
            gamma,
            rounds,
            round_average: RoundAverage::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau < 1 {
            return Err(Error::Plan(format!("tau must be >= 1, got {}", self.tau)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Plan(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

pub(crate) fn guard(x: &DMatrix<f64>, round: usize) -> Result<()> {
    let norm = x.norm();
    if !norm.is_finite() || norm > BLOWUP_NORM {
        return Err(Error::Divergence { round });
    }
    Ok(())
}

pub(crate) fn check_shape(x: &DMatrix<f64>, n: usize, p: usize) -> Result<()> {
    if x.shape() != (n, p) {
        return Err(Error::Dimension {
            expected: format!("{n}x{p}"),
            got: format!("{}x{}", x.nrows(), x.ncols()),
        });
    }
    Ok(())
}
