//! Scaffold⁺ with full participation and unit server steps reproduces
//! ST-GT over the averaging matrix draw for draw.

use nalgebra::DMatrix;
use stgt::algorithms::{
    scaffold_plus_round, stgt_round, RoundPlan, ScaffoldPlan, ScaffoldState, StgtState,
};
use stgt::problems::make_ridge;
use stgt::rng::NodeStreams;
use stgt::topology::WeightMatrix;

fn main() -> stgt::Result<()> {
    let (n, p, tau, gamma) = (8, 4, 5, 0.02);
    let prob = make_ridge(n, p, 0.1, 0.1, 3)?;
    let x0 = vec![0.5; p];

    let mut sa = NodeStreams::new(9, n);
    let mut sb = NodeStreams::new(9, n);
    let mut st = StgtState::init(&prob, DMatrix::from_fn(n, p, |_, k| x0[k]), &mut sa)?;
    let mut sc = ScaffoldState::init(&prob, &x0)?;
    let plan = RoundPlan::new(tau, gamma, 25);
    let splan = ScaffoldPlan {
        tau,
        gamma_g: 1.0,
        gamma_l: gamma,
        gamma_c: 1.0,
        rounds: 25,
    };
    let w = WeightMatrix::averaging(n);
    let everyone: Vec<usize> = (0..n).collect();
    for r in 1..=plan.rounds {
        stgt_round(&mut st, &w, &plan, &prob, &mut sa)?;
        scaffold_plus_round(&mut sc, &everyone, &splan, &prob, &mut sb)?;
        let gap = (0..n)
            .flat_map(|i| (0..p).map(move |k| (i, k)))
            .map(|(i, k)| (st.x[(i, k)] - sc.x_server[k]).abs())
            .fold(0.0, f64::max);
        if r % 5 == 0 {
            println!("round {r:>3}  max |X - 1 x_server| = {gap:.2e}");
        }
    }
    Ok(())
}
