//! Runs a config and writes `seed_<k>.csv` plus `summary.csv`.
//!
//! `cargo run --example write_traces -- <config> <out-dir>`

use std::path::PathBuf;

use stgt::harness::{read_trace, run_experiment, write_traces, Document, ExperimentConfig};

fn main() -> stgt::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/stgt_deg3.cfg"));
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("stgt_traces"));

    let text = std::fs::read_to_string(&config).map_err(|e| stgt::Error::io(&config, e))?;
    let mut doc = Document::parse(&text)?;
    doc.set("seeds", "1,2")?;
    let exp = run_experiment(&ExperimentConfig::from_document(&doc)?)?;
    for path in write_traces(&exp, &out)? {
        println!("wrote {}", path.display());
    }
    let trace = read_trace(&out.join("seed_1.csv"))?;
    let last = trace.last().expect("at least the initial row");
    println!("seed 1, round {}: residual {:?}", last.round, last.residual);
    Ok(())
}
