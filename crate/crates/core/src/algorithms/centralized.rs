use nalgebra::{DMatrix, DVector};

use super::{guard, RoundPlan};
use crate::error::Result;
use crate::problems::{noisy_gradient_into, GradOracle};
use crate::rng::NodeStreams;

/// `tau` steps of mini-batch SGD, `x ← x − γ (1/n) Σ_i g_i(x)`, with one
/// draw per node per step. `round` is the index reported on divergence.
pub fn centralized_sgd_round<O: GradOracle + ?Sized>(
    x: &mut DVector<f64>,
    plan: &RoundPlan,
    problem: &O,
    streams: &mut NodeStreams,
    round: usize,
) -> Result<()> {
    plan.validate()?;
    problem.check_point(x.as_slice())?;
    let (n, p) = (problem.num_nodes(), problem.dim());
    let mut g = vec![0.0; p];
    let mut avg = vec![0.0; p];
    for _ in 0..plan.tau {
        avg.fill(0.0);
        for i in 0..n {
            noisy_gradient_into(problem, i, x.as_slice(), streams.node(i), &mut g);
            avg.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        for k in 0..p {
            x[k] -= plan.gamma * avg[k] / n as f64;
        }
    }
    guard(&DMatrix::from_column_slice(p, 1, x.as_slice()), round)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{stgt_round, StgtState};
    use crate::problems::make_ridge;
    use crate::topology::WeightMatrix;

    #[test]
    fn noiseless_descent_is_monotone() {
        let prob = make_ridge(8, 5, 0.1, 0.0, 3).unwrap();
        let gamma = 1.0 / prob.constants().l;
        let mut x = DVector::from_element(5, 2.0);
        let mut streams = NodeStreams::new(0, 8);
        let mut last = prob.value(x.as_slice());
        for r in 0..50 {
            centralized_sgd_round(
                &mut x,
                &RoundPlan::new(1, gamma, 50),
                &prob,
                &mut streams,
                r,
            )
            .unwrap();
            let f = prob.value(x.as_slice());
            assert!(f <= last + 1e-15);
            last = f;
        }
    }

    #[test]
    fn single_node_matches_stgt() {
        let prob = make_ridge(1, 3, 0.1, 0.2, 5).unwrap();
        let plan = RoundPlan::new(4, 0.1, 10);
        let mut sa = NodeStreams::new(7, 1);
        let mut sb = NodeStreams::new(7, 1);
        let mut x = DVector::from_element(3, 0.3);
        let mut st = StgtState::init(&prob, DMatrix::from_element(1, 3, 0.3), &mut sb).unwrap();
        let w = WeightMatrix::identity(1);
        for r in 0..10 {
            centralized_sgd_round(&mut x, &plan, &prob, &mut sa, r).unwrap();
            stgt_round(&mut st, &w, &plan, &prob, &mut sb).unwrap();
            for k in 0..3 {
                assert!((x[k] - st.x[(0, k)]).abs() < 1e-12);
            }
        }
    }
}
