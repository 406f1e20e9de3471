//! ST-GT on the nonconvex logistic problem: the global gradient of the
//! averaged model goes to zero while local gradients stay heterogeneous.

use nalgebra::DMatrix;
use stgt::algorithms::{stgt_round, RoundPlan, StgtState};
use stgt::metrics::mean_iterate_grad_norm;
use stgt::problems::{make_nonconvex, GradOracle};
use stgt::rng::NodeStreams;
use stgt::topology::{build_static_matrix, TopologySpec};

fn main() -> stgt::Result<()> {
    let (n, p) = (8, 10);
    let prob = make_nonconvex(n, p, 50, 0.1, 0.01, 1)?;
    let w = build_static_matrix(&TopologySpec::exponential(n, 3))?;
    let plan = RoundPlan::new(10, 0.009, 1000);
    let mut streams = NodeStreams::new(1, n);
    let mut st = StgtState::init(&prob, DMatrix::zeros(n, p), &mut streams)?;
    println!("round       f(xbar)   |grad f(xbar)|^2   mean_i |grad f_i(xbar)|^2");
    for r in 0..=plan.rounds {
        if r > 0 {
            stgt_round(&mut st, &w, &plan, &prob, &mut streams)?;
        }
        if r % 100 == 0 {
            let x = st.mean_model();
            let g: f64 = prob.global_gradient(&x).iter().map(|v| v * v).sum();
            println!(
                "{r:>5}  {:>12.6}  {g:>17.3e}  {:>26.3e}",
                prob.value(&x),
                mean_iterate_grad_norm(&x, &prob)
            );
        }
    }
    Ok(())
}
