//! Noise-free ST-GT on a ridge problem: the optimality gap decays linearly.

use nalgebra::DMatrix;
use stgt::algorithms::{stgt_round, RoundPlan, StgtState};
use stgt::metrics::optimality_gap;
use stgt::problems::{make_ridge, GradOracle};
use stgt::rng::NodeStreams;
use stgt::topology::{build_static_matrix, contraction_factor, TopologySpec};

fn main() -> stgt::Result<()> {
    let (n, p, tau) = (16, 5, 10);
    let prob = make_ridge(n, p, 1.0, 0.0, 1)?;
    let w = build_static_matrix(&TopologySpec::exponential(n, 3))?;
    let rho = contraction_factor(&w)?;
    let l = prob.constants().l;
    let gamma = 2.0 * (1.0 - rho).powi(2) / (tau as f64 * l);
    println!("rho = {rho:.4}, L = {l:.3}, gamma = {gamma:.3e}");

    let mut streams = NodeStreams::new(1, n);
    let mut st = StgtState::init(&prob, DMatrix::zeros(n, p), &mut streams)?;
    let plan = RoundPlan::new(tau, gamma, 400);
    for r in 1..=plan.rounds {
        stgt_round(&mut st, &w, &plan, &prob, &mut streams)?;
        if r % 50 == 0 {
            let gap = optimality_gap(&st.mean_model(), &prob)?;
            println!("round {r:>4}  |xbar - x*|^2 = {gap:.3e}");
        }
    }
    Ok(())
}
