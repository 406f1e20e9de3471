//! Experiment orchestration: configs, seeded runs, CSV traces and the CLI.

pub mod cli;
pub mod config;
pub mod run;
pub mod trace;

pub use cli::run_cli;
pub use config::{Algo, Document, ExperimentConfig, Problem, ProblemConfig};
pub use run::{run_experiment, run_seed, Experiment, RunSummary, SeedRun, SeedSummary};
pub use trace::{read_summary, read_trace, write_traces, SUMMARY_HEADER, TRACE_HEADER};
