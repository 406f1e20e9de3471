//! Per-round diagnostics evaluated at communication boundaries.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::problems::GradOracle;

/// Weights of the consensus and tracking terms in the Lyapunov function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovCoeffs {
    pub c_x: f64,
    pub c_y: f64,
}

impl LyapunovCoeffs {
    /// `c_x = 80γτL / (n(1−ρ))`, `c_y = 3556γ³τ³L / (n(1−ρ)³)`.
    pub fn new(gamma: f64, tau: usize, l: f64, n: usize, rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::Plan(format!(
                "contraction factor {rho} outside [0, 1)"
            )));
        }
        let gt = gamma * tau as f64;
        let gap = 1.0 - rho;
        let n = n as f64;
        Ok(Self {
            c_x: 80.0 * gt * l / (n * gap),
            c_y: 3556.0 * gt.powi(3) * l / (n * gap.powi(3)),
        })
    }

    pub fn zero() -> Self {
        Self { c_x: 0.0, c_y: 0.0 }
    }
}

/// `‖X − 1x̄‖²` (squared Frobenius norm).
pub fn consensus_error(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows() as f64;
    x.column_iter()
        .map(|col| {
            let mean = col.sum() / n;
            col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        })
        .sum()
}

/// `‖Υ‖²` with `Υ = Y − G − 1∇f(x̄)ᵀ + ∇F(1x̄)`.
pub fn tracking_residual<O: GradOracle + ?Sized>(
    y: &DMatrix<f64>,
    g: &DMatrix<f64>,
    xbar: &[f64],
    problem: &O,
) -> f64 {
    let (n, p) = y.shape();
    let global = problem.global_gradient(xbar);
    let mut local = vec![0.0; p];
    let mut total = 0.0;
    for i in 0..n {
        problem.local_gradient(i, xbar, &mut local);
        for k in 0..p {
            let u = y[(i, k)] - g[(i, k)] - global[k] + local[k];
            total += u * u;
        }
    }
    total
}

/// `V = residual + c_x·consensus + c_y·tracking`, all inputs squared norms.
pub fn lyapunov(residual: f64, consensus: f64, tracking: f64, coeffs: &LyapunovCoeffs) -> f64 {
    residual + coeffs.c_x * consensus + coeffs.c_y * tracking
}

/// `‖x̄ − x*‖²`, available only when the oracle knows its optimum.
pub fn optimality_gap<O: GradOracle + ?Sized>(xbar: &[f64], problem: &O) -> Result<f64> {
    let opt = problem
        .optimum()
        .ok_or(Error::UnsupportedMetric("residual"))?;
    Ok(xbar
        .iter()
        .zip(opt.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// `(1/n) Σ_i ‖∇f_i(x̄)‖²`.
pub fn mean_iterate_grad_norm<O: GradOracle + ?Sized>(xbar: &[f64], problem: &O) -> f64 {
    let n = problem.num_nodes();
    let mut g = vec![0.0; problem.dim()];
    let mut total = 0.0;
    for i in 0..n {
        problem.local_gradient(i, xbar, &mut g);
        total += g.iter().map(|v| v * v).sum::<f64>();
    }
    total / n as f64
}

/// One row of diagnostics per communication round.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub round: usize,
    /// `‖x̄ − x*‖²`; `None` when the optimum is unknown.
    pub residual: Option<f64>,
    pub consensus: f64,
    pub tracking: f64,
    /// `None` when the optimum is unknown.
    pub lyapunov: Option<f64>,
    pub grad_norm: f64,
    pub fval: f64,
}

/// Stacked variables the metrics are computed from.
pub struct Snapshot<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a DMatrix<f64>,
    pub g: &'a DMatrix<f64>,
    /// Model the optimality gap and gradient norm are evaluated at.
    pub xbar: &'a [f64],
}

pub fn record<O: GradOracle + ?Sized>(
    round: usize,
    snap: &Snapshot<'_>,
    problem: &O,
    coeffs: &LyapunovCoeffs,
) -> TraceRecord {
    let residual = optimality_gap(snap.xbar, problem).ok();
    let consensus = consensus_error(snap.x);
    let tracking = tracking_residual(snap.y, snap.g, snap.xbar, problem);
    TraceRecord {
        round,
        residual,
        consensus,
        tracking,
        lyapunov: residual.map(|r| lyapunov(r, consensus, tracking, coeffs)),
        grad_norm: mean_iterate_grad_norm(snap.xbar, problem),
        fval: problem.value(snap.xbar),
    }
}
