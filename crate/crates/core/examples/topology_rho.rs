//! Contraction factors of the built-in topologies.

use stgt::rng::sampling_stream;
use stgt::topology::{
    build_static_matrix, contraction_factor, estimate_contraction_factor, ServerWorkerSampler,
    TopologySpec,
};

fn main() -> stgt::Result<()> {
    let n = 32;
    for spec in [
        TopologySpec::complete(n),
        TopologySpec::ring(n),
        TopologySpec::exponential(n, 3),
        TopologySpec::exponential(n, 15),
    ] {
        let rho = contraction_factor(&build_static_matrix(&spec)?)?;
        println!("{:<28} rho = {rho:.6}", spec.to_string());
    }
    let mut rng = sampling_stream(0);
    for s in [4, 16, 32] {
        let mut sampler = ServerWorkerSampler::new(n, s)?;
        let est = estimate_contraction_factor(&mut sampler, 2000, &mut rng)?;
        let closed = ((n - s) as f64 / n as f64).powi(2);
        println!(
            "server-worker n={n} s={s:<3}      E|W-J|^2 = {:.4} ± {:.4}, |E[W]-J|^2 = {closed:.4}",
            est.mean, est.std_err
        );
    }
    Ok(())
}
