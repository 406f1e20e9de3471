//! Command-line front end: `run`, `sweep`, `validate`, `rho`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::config::{Document, ExperimentConfig};
use super::run::{run_experiment, Experiment};
use super::trace::{format_float, write_atomic, write_traces};
use crate::error::{Error, Result};
use crate::rng::sampling_stream;
use crate::topology::{
    build_static_matrix, contraction_factor, estimate_contraction_factor, ServerWorkerSampler,
    TopologySpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "stgt",
    version,
    about = "Decentralized optimisation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every seed of a config and write traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds (overrides `seeds`).
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Paired parameter sweep, e.g. `--vary tau=25,50,100 --gamma 0.8,0.4,0.2`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        vary: String,
        #[arg(long, value_delimiter = ',')]
        gamma: Option<Vec<String>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Report the contraction factor of a topology.
    Rho {
        #[arg(long)]
        topology: String,
        /// Monte-Carlo draws for random topologies.
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
}

/// Runs the CLI and returns the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_CONFIG
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Validate { config } => {
            let cfg = load(&config, |_| Ok(()))?;
            for w in cfg.warnings() {
                let _ = writeln!(err, "warning: {w}");
            }
            let _ = writeln!(
                out,
                "ok: {} on {} ({} seeds, {} rounds)",
                cfg.algo,
                cfg.topology,
                cfg.seeds.len(),
                cfg.plan.rounds
            );
            Ok(EXIT_OK)
        }
        Command::Run {
            config,
            out: dir,
            seeds,
        } => {
            let cfg = load(&config, |doc| match &seeds {
                Some(s) => doc.set("seeds", s),
                None => Ok(()),
            })?;
            for w in cfg.warnings() {
                let _ = writeln!(err, "warning: {w}");
            }
            let dir = dir
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| default_out(&config));
            let exp = run_experiment(&cfg)?;
            write_traces(&exp, &dir)?;
            report(&exp, &dir, out);
            Ok(if exp.all_diverged() {
                EXIT_DIVERGED
            } else {
                EXIT_OK
            })
        }
        Command::Sweep {
            config,
            vary,
            gamma,
            out: dir,
        } => sweep(&config, &vary, gamma.as_deref(), dir, out, err),
        Command::Rho { topology, trials } => {
            let spec: TopologySpec = topology.parse()?;
            if spec.family.is_static() {
                let rho = contraction_factor(&build_static_matrix(&spec)?)?;
                let _ = writeln!(out, "{rho}");
            } else {
                let mut sampler = ServerWorkerSampler::new(spec.n, spec.s)?;
                let est =
                    estimate_contraction_factor(&mut sampler, trials, &mut sampling_stream(0))?;
                let _ = writeln!(
                    out,
                    "{} ± {} ({} trials)",
                    est.mean, est.std_err, est.trials
                );
            }
            Ok(EXIT_OK)
        }
    }
}

fn load(path: &Path, edit: impl FnOnce(&mut Document) -> Result<()>) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut doc = Document::parse(&text).map_err(|e| prefix(path, e))?;
    edit(&mut doc)?;
    ExperimentConfig::from_document(&doc).map_err(|e| prefix(path, e))
}

fn prefix(path: &Path, e: Error) -> Error {
    match e {
        Error::Config(msgs) => Error::Config(
            msgs.into_iter()
                .map(|m| format!("{}: {m}", path.display()))
                .collect(),
        ),
        other => other,
    }
}

fn default_out(config: &Path) -> PathBuf {
    let stem = config.file_stem().map(|s| s.to_string_lossy().into_owned());
    Path::new("runs").join(stem.unwrap_or_else(|| "run".into()))
}

fn report(exp: &Experiment, dir: &Path, out: &mut dyn Write) {
    let s = &exp.summary;
    let _ = writeln!(out, "{} -> {}", exp.config.algo, dir.display());
    for seed in &s.seeds {
        let status = match seed.diverged_at {
            Some(r) => format!("diverged at round {r}"),
            None => format!(
                "final {} steady {}",
                seed.final_residual.map(format_float).unwrap_or("-".into()),
                seed.steady_state.map(format_float).unwrap_or("-".into())
            ),
        };
        let _ = writeln!(out, "  seed {}: {status}", seed.seed);
    }
    let _ = writeln!(
        out,
        "  steady-state mean {:.6e} (std {:.3e}), diverged {}/{}",
        s.steady_mean,
        s.steady_std,
        s.diverged,
        s.seeds.len()
    );
}

pub const SWEEP_HEADER: &str =
    "label,dir,key,value,tau,gamma,gamma_tau,diverged,final_mean,steady_mean";

fn sweep(
    config: &Path,
    vary: &str,
    gammas: Option<&[String]>,
    dir: Option<PathBuf>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let (key, values) = vary
        .split_once('=')
        .ok_or_else(|| Error::config(format!("--vary expects key=v1,v2,..., got `{vary}`")))?;
    let key = key.trim();
    let values: Vec<&str> = values.split(',').map(str::trim).collect();
    if let Some(g) = gammas {
        if g.len() != values.len() {
            return Err(Error::config(format!(
                "--vary has {} values but --gamma has {}",
                values.len(),
                g.len()
            )));
        }
    }
    let base_dir = dir.unwrap_or_else(|| default_out(config));
    let mut configs = Vec::new();
    for (i, value) in values.iter().enumerate() {
        let gamma = gammas.map(|g| g[i].trim().to_string());
        let cfg = load(config, |doc| {
            doc.set(key, value)?;
            if let Some(g) = &gamma {
                doc.set("gamma", g)?;
            }
            Ok(())
        })?;
        let label = match &gamma {
            Some(g) => format!("{key}{value}_gamma{g}"),
            None => format!("{key}{value}"),
        };
        configs.push((label, value.to_string(), cfg));
    }
    let mut table = String::from(SWEEP_HEADER);
    table.push('\n');
    let mut any_all_diverged = false;
    for (label, value, cfg) in &configs {
        for w in cfg.warnings() {
            let _ = writeln!(err, "warning [{label}]: {w}");
        }
        let run_dir = base_dir.join(label);
        let exp = run_experiment(cfg)?;
        write_traces(&exp, &run_dir)?;
        report(&exp, &run_dir, out);
        any_all_diverged |= exp.all_diverged();
        let (tau, gamma) = (cfg.plan.tau, cfg.plan.gamma);
        table.push_str(&format!(
            "{label},{},{key},{value},{tau},{gamma},{},{},{},{}\n",
            run_dir.display(),
            format_float(gamma * tau as f64),
            exp.summary.diverged,
            format_float(exp.summary.final_mean),
            format_float(exp.summary.steady_mean),
        ));
    }
    write_atomic(&base_dir.join("sweep.csv"), &table)?;
    Ok(if any_all_diverged {
        EXIT_DIVERGED
    } else {
        EXIT_OK
    })
}
