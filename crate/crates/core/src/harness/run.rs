//! Seeded experiment execution.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::config::{sampled_count, Algo, ExperimentConfig, Problem};
use crate::algorithms::{
    centralized_sgd_round, flexgt_round, scaffold_plus_round, stgt_round, ScaffoldState, StgtState,
};
use crate::error::{Error, Result};
use crate::metrics::{record, LyapunovCoeffs, Snapshot, TraceRecord};
use crate::problems::GradOracle;
use crate::rng::{sampling_stream, NodeStreams};
use crate::topology::{build_static_matrix, sample_workers, WeightMatrix};

/// Trace of one seed. Rows stop at the last finite round when the run diverged.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    pub diverged_at: Option<usize>,
}

impl SeedRun {
    pub fn final_residual(&self) -> Option<f64> {
        if self.diverged_at.is_some() {
            return Some(f64::INFINITY);
        }
        self.records.last().and_then(|r| r.residual)
    }

    /// Mean residual over the last 20% of rounds (at least one round).
    pub fn steady_state(&self) -> Option<f64> {
        if self.diverged_at.is_some() {
            return Some(f64::INFINITY);
        }
        let rounds = self.records.len().saturating_sub(1);
        let tail = rounds.div_ceil(5).max(1).min(self.records.len());
        let window = &self.records[self.records.len() - tail..];
        let sum: Option<f64> = window.iter().map(|r| r.residual).sum();
        sum.map(|s| s / tail as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_residual: Option<f64>,
    pub steady_state: Option<f64>,
    pub diverged_at: Option<usize>,
}

/// Per-seed results with across-seed statistics over the non-divergent seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub seeds: Vec<SeedSummary>,
    pub final_mean: f64,
    pub final_std: f64,
    pub steady_mean: f64,
    pub steady_std: f64,
    pub diverged: usize,
}

impl RunSummary {
    pub fn from_runs(runs: &[SeedRun]) -> Self {
        let seeds: Vec<SeedSummary> = runs
            .iter()
            .map(|r| SeedSummary {
                seed: r.seed,
                final_residual: r.final_residual(),
                steady_state: r.steady_state(),
                diverged_at: r.diverged_at,
            })
            .collect();
        let clean = |f: fn(&SeedSummary) -> Option<f64>| -> Vec<f64> {
            seeds
                .iter()
                .filter(|s| s.diverged_at.is_none())
                .filter_map(f)
                .collect()
        };
        let (final_mean, final_std) = mean_std(&clean(|s| s.final_residual));
        let (steady_mean, steady_std) = mean_std(&clean(|s| s.steady_state));
        Self {
            diverged: seeds.iter().filter(|s| s.diverged_at.is_some()).count(),
            seeds,
            final_mean,
            final_std,
            steady_mean,
            steady_std,
        }
    }

    /// Standard error of the steady-state mean.
    pub fn steady_se(&self) -> f64 {
        let k = (self.seeds.len() - self.diverged) as f64;
        self.steady_std / k.sqrt()
    }
}

/// Sample mean and standard deviation; NaN when empty, zero spread for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRun>,
    pub summary: RunSummary,
}

impl Experiment {
    pub fn all_diverged(&self) -> bool {
        !self.runs.is_empty() && self.summary.diverged == self.runs.len()
    }
}

/// Everything shared by the seeds of one experiment.
struct Setup {
    problem: Problem,
    w: Option<WeightMatrix>,
    coeffs: LyapunovCoeffs,
}

fn setup(config: &ExperimentConfig) -> Result<Setup> {
    let problem = config.problem.build()?;
    let oracle = problem.oracle();
    let w = match config.algo {
        Algo::Stgt | Algo::FlexGt | Algo::Dsgt => Some(build_static_matrix(&config.topology)?),
        Algo::ScaffoldPlus | Algo::Centralized => None,
    };
    let coeffs = if oracle.optimum().is_some() {
        LyapunovCoeffs::new(
            config.plan.gamma,
            config.plan.tau,
            oracle.constants().l,
            oracle.num_nodes(),
            config.rho()?,
        )?
    } else {
        LyapunovCoeffs::zero()
    };
    Ok(Setup { problem, w, coeffs })
}

/// Runs every seed of `config` (in parallel) and summarises them.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    let setup = setup(config)?;
    let runs = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed_with(config, &setup, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(Experiment {
        summary: RunSummary::from_runs(&runs),
        config: config.clone(),
        runs,
    })
}

/// Runs one seed; the result depends only on `(config, seed)`.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    run_seed_with(config, &setup(config)?, seed)
}

fn run_seed_with(config: &ExperimentConfig, setup: &Setup, seed: u64) -> Result<SeedRun> {
    let oracle = setup.problem.oracle();
    let (n, p) = (oracle.num_nodes(), oracle.dim());
    let mut streams = NodeStreams::new(seed, n);
    let plan = config.plan;
    let mut records = Vec::with_capacity(plan.rounds + 1);
    let coeffs = &setup.coeffs;

    let mut diverged_at = None;
    match config.algo {
        Algo::Stgt | Algo::FlexGt | Algo::Dsgt => {
            let w = setup.w.as_ref().expect("static topology");
            let mut st = StgtState::init(oracle, DMatrix::zeros(n, p), &mut streams)?;
            records.push(stgt_record(0, &st, oracle, coeffs));
            for r in 1..=plan.rounds {
                let out = if config.algo == Algo::FlexGt {
                    flexgt_round(&mut st, w, &plan, oracle, &mut streams)
                } else {
                    stgt_round(&mut st, w, &plan, oracle, &mut streams)
                };
                if !advance(&mut records, out, || stgt_record(r, &st, oracle, coeffs))? {
                    diverged_at = Some(r);
                    break;
                }
            }
        }
        Algo::ScaffoldPlus => {
            let splan = config.scaffold_plan();
            let s = sampled_count(&config.topology);
            let mut sampler = sampling_stream(seed);
            let mut st = ScaffoldState::init(oracle, &vec![0.0; p])?;
            records.push(scaffold_record(0, &st, oracle, coeffs));
            for r in 1..=plan.rounds {
                let sampled = if s == n {
                    (0..n).collect()
                } else {
                    sample_workers(n, s, &mut sampler)
                };
                let out = scaffold_plus_round(&mut st, &sampled, &splan, oracle, &mut streams);
                if !advance(&mut records, out, || {
                    scaffold_record(r, &st, oracle, coeffs)
                })? {
                    diverged_at = Some(r);
                    break;
                }
            }
        }
        Algo::Centralized => {
            let mut x = DVector::zeros(p);
            records.push(centralized_record(0, &x, oracle, coeffs));
            for r in 1..=plan.rounds {
                let out = centralized_sgd_round(&mut x, &plan, oracle, &mut streams, r);
                if !advance(&mut records, out, || {
                    centralized_record(r, &x, oracle, coeffs)
                })? {
                    diverged_at = Some(r);
                    break;
                }
            }
        }
    }
    Ok(SeedRun {
        seed,
        records,
        diverged_at,
    })
}

/// Records the round on success; `Ok(false)` signals divergence.
fn advance(
    records: &mut Vec<TraceRecord>,
    out: Result<()>,
    rec: impl FnOnce() -> TraceRecord,
) -> Result<bool> {
    match out {
        Ok(()) => {
            records.push(rec());
            Ok(true)
        }
        Err(Error::Divergence { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

fn stgt_record(
    r: usize,
    st: &StgtState,
    oracle: &dyn GradOracle,
    c: &LyapunovCoeffs,
) -> TraceRecord {
    let xbar = st.mean_model();
    let snap = Snapshot {
        x: &st.x,
        y: &st.y,
        g: &st.g,
        xbar: &xbar,
    };
    record(r, &snap, oracle, c)
}

/// Residual and gradient norm at the server model; consensus over the workers.
fn scaffold_record(
    r: usize,
    st: &ScaffoldState,
    oracle: &dyn GradOracle,
    c: &LyapunovCoeffs,
) -> TraceRecord {
    let y = st.tracking();
    let snap = Snapshot {
        x: &st.workers,
        y: &y,
        g: &st.last_grad,
        xbar: st.x_server.as_slice(),
    };
    record(r, &snap, oracle, c)
}

fn centralized_record(
    r: usize,
    x: &DVector<f64>,
    oracle: &dyn GradOracle,
    c: &LyapunovCoeffs,
) -> TraceRecord {
    let n = oracle.num_nodes();
    let stacked = DMatrix::from_fn(n, x.len(), |_, k| x[k]);
    let zeros = DMatrix::zeros(n, x.len());
    let snap = Snapshot {
        x: &stacked,
        y: &zeros,
        g: &zeros,
        xbar: x.as_slice(),
    };
    record(r, &snap, oracle, c)
}
