//! Steady-state error of ST-GT, Scaffold⁺ and FlexGT on the shipped
//! degree-3 / s = 4 and degree-15 / s = 16 configs.
//!
//! `cargo run --release --example method_comparison [seeds]`

use std::path::Path;

use stgt::harness::{run_experiment, Document, ExperimentConfig};

fn load(name: &str, seeds: &str) -> stgt::Result<ExperimentConfig> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name);
    let text = std::fs::read_to_string(&path).map_err(|e| stgt::Error::io(&path, e))?;
    let mut doc = Document::parse(&text)?;
    doc.set("seeds", seeds)?;
    ExperimentConfig::from_document(&doc)
}

fn main() -> stgt::Result<()> {
    let seeds = std::env::args().nth(1).unwrap_or_else(|| "1..10".into());
    for panel in [
        ["stgt_deg3.cfg", "scaffold_s4.cfg", "flexgt_deg3.cfg"],
        ["stgt_deg15.cfg", "scaffold_s16.cfg", "flexgt_deg15.cfg"],
    ] {
        for name in panel {
            let cfg = load(name, &seeds)?;
            let s = run_experiment(&cfg)?.summary;
            println!(
                "{name:<18} {:<26} steady {:.4e} ± {:.2e}",
                cfg.topology.to_string(),
                s.steady_mean,
                s.steady_se()
            );
        }
        println!();
    }
    Ok(())
}
