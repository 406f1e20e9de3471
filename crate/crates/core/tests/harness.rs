use std::path::Path;

use stgt::harness::trace::trace_csv;
use stgt::harness::{run_experiment, run_seed, Document, ExperimentConfig};
use stgt::rng::keyed_stream;

fn load(name: &str, overrides: &[(&str, &str)]) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name);
    let mut doc = Document::parse(&std::fs::read_to_string(path).unwrap()).unwrap();
    for (k, v) in overrides {
        doc.set(k, v).unwrap();
    }
    ExperimentConfig::from_document(&doc).unwrap()
}

#[test]
fn seed_runs_are_pure_functions_of_config_and_seed() {
    let cfg = load("stgt_deg3.cfg", &[("rounds", "15"), ("seeds", "1..4")]);
    let exp = run_experiment(&cfg).unwrap();
    for run in &exp.runs {
        let again = run_seed(&cfg, run.seed).unwrap();
        assert_eq!(trace_csv(&again.records), trace_csv(&run.records));
    }
    assert_ne!(
        trace_csv(&exp.runs[0].records),
        trace_csv(&exp.runs[1].records)
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = load("scaffold_s4.cfg", &[("rounds", "10"), ("seeds", "1..6")]);
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_experiment(&cfg).unwrap());
    let many = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| run_experiment(&cfg).unwrap());
    assert_eq!(single.runs, many.runs);
    assert_eq!(single.summary, many.summary);
}

#[test]
fn node_streams_are_keyed_per_seed() {
    use rand::Rng;
    let a: u64 = keyed_stream(1, 0).random();
    let b: u64 = keyed_stream(2, 0).random();
    let c: u64 = keyed_stream(1, 1).random();
    assert!(a != b && a != c && b != c);
}

#[test]
fn every_algorithm_runs_its_shipped_config() {
    for name in [
        "stgt_deg3.cfg",
        "flexgt_deg3.cfg",
        "scaffold_s16.cfg",
        "nonconvex.cfg",
        "exact_linear.cfg",
    ] {
        let cfg = load(name, &[("rounds", "5"), ("seeds", "1")]);
        let exp = run_experiment(&cfg).unwrap();
        assert_eq!(exp.runs[0].records.len(), 6, "{name}");
        assert_eq!(exp.summary.diverged, 0, "{name}");
    }
}

#[test]
fn nonconvex_traces_leave_residual_empty() {
    let cfg = load("nonconvex.cfg", &[("rounds", "3"), ("seeds", "1")]);
    let run = run_seed(&cfg, 1).unwrap();
    assert!(run
        .records
        .iter()
        .all(|r| r.residual.is_none() && r.lyapunov.is_none()));
    assert!(run.steady_state().is_none());
    let csv = trace_csv(&run.records);
    assert!(csv.lines().nth(1).unwrap().starts_with("0,,"));
}

#[test]
fn dsgt_and_centralized_configs_run() {
    let dsgt = load(
        "stgt_deg3.cfg",
        &[
            ("algo", "dsgt"),
            ("tau", "1"),
            ("rounds", "20"),
            ("seeds", "1"),
        ],
    );
    let exp = run_experiment(&dsgt).unwrap();
    let res: Vec<f64> = exp.runs[0]
        .records
        .iter()
        .map(|r| r.residual.unwrap())
        .collect();
    assert!(res[20] < res[0]);

    let central = load(
        "stgt_deg3.cfg",
        &[("algo", "centralized"), ("rounds", "20"), ("seeds", "1")],
    );
    let exp = run_experiment(&central).unwrap();
    let rec = &exp.runs[0].records;
    assert!(rec.iter().all(|r| r.consensus <= 1e-25));
    assert!(rec[20].residual.unwrap() < rec[0].residual.unwrap());
}
