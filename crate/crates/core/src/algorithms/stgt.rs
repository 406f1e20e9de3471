//! Spatio-temporal gradient tracking and the FlexGT baseline.

use nalgebra::DMatrix;

use super::{check_shape, guard, RoundAverage, RoundPlan};
use crate::error::{Error, Result};
use crate::problems::{noisy_gradient_into, stacked_noisy_gradients, GradOracle};
use crate::rng::NodeStreams;
use crate::topology::WeightMatrix;

/// Stacked node state shared by ST-GT and FlexGT (`n × p` each).
#[derive(Clone, Debug, PartialEq)]
pub struct StgtState {
    /// Node models `X_k`.
    pub x: DMatrix<f64>,
    /// Tracking variables `Y_k`.
    pub y: DMatrix<f64>,
    /// Most recent stochastic gradients `G_k`.
    pub g: DMatrix<f64>,
    /// Gradient sum of the current round; after a round completes it holds
    /// the sum that was used at that round's boundary.
    pub gsum: DMatrix<f64>,
    /// Snapshot `X_{rτ}` of the last round start.
    pub x_round_start: DMatrix<f64>,
    /// Temporal tracking variable `Z` of the last completed ST-GT round.
    pub z: Option<DMatrix<f64>>,
    pub round: usize,
    pub inner: usize,
}

impl StgtState {
    /// Draws one gradient per node at `x0` and sets `Y_0 = G_0`.
    pub fn init<O: GradOracle + ?Sized>(
        problem: &O,
        x0: DMatrix<f64>,
        streams: &mut NodeStreams,
    ) -> Result<Self> {
        let (n, p) = (problem.num_nodes(), problem.dim());
        check_shape(&x0, n, p)?;
        if streams.len() != n {
            return Err(Error::Dimension {
                expected: format!("{n} node streams"),
                got: streams.len().to_string(),
            });
        }
        let g = stacked_noisy_gradients(problem, &x0, streams);
        Ok(Self {
            y: g.clone(),
            gsum: g.clone(),
            g,
            x_round_start: x0.clone(),
            x: x0,
            z: None,
            round: 0,
            inner: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Row average `x̄`.
    pub fn mean_model(&self) -> Vec<f64> {
        row_mean(&self.x)
    }

    fn check(&self, w: &WeightMatrix, plan: &RoundPlan) -> Result<()> {
        plan.validate()?;
        if w.n() != self.n() {
            return Err(Error::Dimension {
                expected: format!("{}x{} mixing matrix", self.n(), self.n()),
                got: format!("{}x{}", w.n(), w.n()),
            });
        }
        Ok(())
    }

    fn start_round(&mut self, plan: &RoundPlan) {
        self.x_round_start.copy_from(&self.x);
        match plan.round_average {
            RoundAverage::IncludeRoundStart => self.gsum.copy_from(&self.g),
            RoundAverage::ExcludeRoundStart => self.gsum.fill(0.0),
        }
        self.inner = 0;
    }

    /// `X ← X − γY`, draw `G'`, `Y ← Y + G' − G`. Returns nothing; the
    /// new gradients are folded into `gsum`.
    fn local_step<O: GradOracle + ?Sized>(
        &mut self,
        gamma: f64,
        problem: &O,
        streams: &mut NodeStreams,
    ) {
        self.x -= &self.y * gamma;
        let g_new = stacked_noisy_gradients(problem, &self.x, streams);
        self.y += &g_new - &self.g;
        self.gsum += &g_new;
        self.g = g_new;
        self.inner += 1;
    }
}

pub(crate) fn row_mean(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows() as f64;
    m.column_iter().map(|c| c.sum() / n).collect()
}

/// Advances ST-GT by one communication round in stacked (matrix) form:
/// `τ − 1` local tracking steps followed by one spatial mixing of the
/// round-start model and the temporal tracking variable `Z`.
pub fn stgt_round<O: GradOracle + ?Sized>(
    state: &mut StgtState,
    w: &WeightMatrix,
    plan: &RoundPlan,
    problem: &O,
    streams: &mut NodeStreams,
) -> Result<()> {
    state.check(w, plan)?;
    let (tau, gamma) = (plan.tau as f64, plan.gamma);
    state.start_round(plan);
    for _ in 0..plan.tau - 1 {
        state.local_step(gamma, problem, streams);
    }
    let x0 = &state.x_round_start;
    let z = (x0 - &state.x + &state.y * gamma) / (gamma * tau);
    state.x = w.mix(&(x0 - &z * (tau * gamma)));
    let g_new = stacked_noisy_gradients(problem, &state.x, streams);
    state.y = w.mix(&z) + &g_new - &state.gsum / tau;
    state.g = g_new;
    state.z = Some(z);
    state.round += 1;
    guard(&state.x, state.round)?;
    guard(&state.y, state.round)
}

/// ST-GT written node by node with explicit neighbour sums. Must agree with
/// [`stgt_round`] up to rounding.
pub fn stgt_round_per_node<O: GradOracle + ?Sized>(
    state: &mut StgtState,
    w: &WeightMatrix,
    plan: &RoundPlan,
    problem: &O,
    streams: &mut NodeStreams,
) -> Result<()> {
    state.check(w, plan)?;
    let (n, p) = state.x.shape();
    let (tau, gamma) = (plan.tau as f64, plan.gamma);
    let row = |m: &DMatrix<f64>, i: usize| -> Vec<f64> { m.row(i).iter().copied().collect() };

    let mut x_start = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut running = Vec::with_capacity(n);
    let mut last_g = Vec::with_capacity(n);
    for i in 0..n {
        let x_init = row(&state.x, i);
        let mut x = x_init.clone();
        let mut y = row(&state.y, i);
        let mut g = row(&state.g, i);
        let mut g_tilde = match plan.round_average {
            RoundAverage::IncludeRoundStart => g.clone(),
            RoundAverage::ExcludeRoundStart => vec![0.0; p],
        };
        let mut g_next = vec![0.0; p];
        for _ in 0..plan.tau - 1 {
            for k in 0..p {
                x[k] -= gamma * y[k];
            }
            noisy_gradient_into(problem, i, &x, streams.node(i), &mut g_next);
            for k in 0..p {
                y[k] += g_next[k] - g[k];
                g_tilde[k] += g_next[k];
            }
            std::mem::swap(&mut g, &mut g_next);
        }
        z.push(
            (0..p)
                .map(|k| (x_init[k] - x[k] + gamma * y[k]) / (gamma * tau))
                .collect::<Vec<_>>(),
        );
        x_start.push(x_init);
        running.push(g_tilde);
        last_g.push(g);
    }

    let mut x_new = DMatrix::zeros(n, p);
    let mut y_new = DMatrix::zeros(n, p);
    let mut g_new = DMatrix::zeros(n, p);
    let mut gi = vec![0.0; p];
    for i in 0..n {
        let mut xi = vec![0.0; p];
        let mut yi = vec![0.0; p];
        for (j, wij) in w.neighbors(i) {
            for k in 0..p {
                xi[k] += wij * (x_start[j][k] - tau * gamma * z[j][k]);
                yi[k] += wij * z[j][k];
            }
        }
        noisy_gradient_into(problem, i, &xi, streams.node(i), &mut gi);
        for k in 0..p {
            x_new[(i, k)] = xi[k];
            y_new[(i, k)] = yi[k] + gi[k] - running[i][k] / tau;
            g_new[(i, k)] = gi[k];
        }
    }

    state.x_round_start = DMatrix::from_fn(n, p, |i, k| x_start[i][k]);
    state.gsum = DMatrix::from_fn(n, p, |i, k| running[i][k]);
    state.z = Some(DMatrix::from_fn(n, p, |i, k| z[i][k]));
    state.x = x_new;
    state.y = y_new;
    state.g = g_new;
    state.inner = plan.tau - 1;
    state.round += 1;
    guard(&state.x, state.round)?;
    guard(&state.y, state.round)
}

/// Gradient tracking with local updates that communicates `Y` at the round
/// start rather than the temporal average:
/// `X' = W(X_{rτ} − γ Σ_t Y_{rτ+t})`, `Y' = W Y_{rτ} + G' − G_{rτ}`.
pub fn flexgt_round<O: GradOracle + ?Sized>(
    state: &mut StgtState,
    w: &WeightMatrix,
    plan: &RoundPlan,
    problem: &O,
    streams: &mut NodeStreams,
) -> Result<()> {
    state.check(w, plan)?;
    let gamma = plan.gamma;
    state.start_round(plan);
    let y_start = state.y.clone();
    let g_start = state.g.clone();
    let mut y_sum = state.y.clone();
    for _ in 0..plan.tau - 1 {
        state.local_step(gamma, problem, streams);
        y_sum += &state.y;
    }
    state.x = w.mix(&(&state.x_round_start - y_sum * gamma));
    let g_new = stacked_noisy_gradients(problem, &state.x, streams);
    state.y = w.mix(&y_start) + &g_new - g_start;
    state.g = g_new;
    state.z = None;
    state.round += 1;
    guard(&state.x, state.round)?;
    guard(&state.y, state.round)
}
