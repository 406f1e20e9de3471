//! Paired (tau, gamma) sweep at fixed gamma * tau: rounds needed to reach
//! a residual of 1e-3 barely move, so more local steps cost no extra
//! communication.

use std::path::Path;

use stgt::harness::{run_experiment, Document, ExperimentConfig};

fn main() -> stgt::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/tau_sweep.cfg");
    let text = std::fs::read_to_string(&path).map_err(|e| stgt::Error::io(&path, e))?;
    for (tau, gamma) in [("25", "0.8"), ("50", "0.4"), ("100", "0.2")] {
        let mut doc = Document::parse(&text)?;
        doc.set("tau", tau)?;
        doc.set("gamma", gamma)?;
        doc.set("seeds", "1..4")?;
        let exp = run_experiment(&ExperimentConfig::from_document(&doc)?)?;
        let hits: Vec<String> = exp
            .runs
            .iter()
            .map(|run| {
                run.records
                    .iter()
                    .find(|r| r.residual.is_some_and(|v| v <= 1e-3))
                    .map_or("-".into(), |r| r.round.to_string())
            })
            .collect();
        println!("tau {tau:>3}, gamma {gamma}: rounds to 1e-3 per seed {hits:?}");
    }
    Ok(())
}
