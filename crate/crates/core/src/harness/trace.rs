//! CSV traces and summaries.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::run::{Experiment, RunSummary, SeedSummary};
use crate::error::{Error, Result};
use crate::metrics::TraceRecord;

pub const TRACE_HEADER: &str = "round,residual,consensus,tracking,lyapunov,grad_norm,fval";
pub const SUMMARY_HEADER: &str = "seed,final_residual,steady_state,diverged_at";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn trace_csv(records: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.round,
            format_opt(r.residual),
            format_float(r.consensus),
            format_float(r.tracking),
            format_opt(r.lyapunov),
            format_float(r.grad_norm),
            format_float(r.fval),
        ));
    }
    out
}

pub fn summary_csv(summary: &RunSummary) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in &summary.seeds {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.seed,
            format_opt(s.final_residual),
            format_opt(s.steady_state),
            s.diverged_at.map(|r| r.to_string()).unwrap_or_default(),
        ));
    }
    out
}

/// Writes `contents` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn trace_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

pub fn summary_path(dir: &Path) -> PathBuf {
    dir.join("summary.csv")
}

/// One `seed_<k>.csv` per seed plus `summary.csv` under `dir`.
pub fn write_traces(experiment: &Experiment, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for run in &experiment.runs {
        let path = trace_path(dir, run.seed);
        write_atomic(&path, &trace_csv(&run.records))?;
        written.push(path);
    }
    let path = summary_path(dir);
    write_atomic(&path, &summary_csv(&experiment.summary))?;
    written.push(path);
    Ok(written)
}

fn read_lines(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, msg: String| Error::Trace {
        path: path.to_path_buf(),
        line,
        msg,
    };
    match lines.next() {
        Some((_, h)) if h == header => {}
        Some((_, h)) => return Err(bad(1, format!("unexpected header `{h}`"))),
        None => return Err(bad(1, "empty file".into())),
    }
    let width = header.split(',').count();
    lines
        .map(|(i, l)| {
            let cols: Vec<String> = l.split(',').map(str::to_string).collect();
            if cols.len() != width {
                return Err(bad(
                    i + 1,
                    format!("expected {width} columns, got {}", cols.len()),
                ));
            }
            Ok((i + 1, cols))
        })
        .collect()
}

fn parse_cell<T: std::str::FromStr>(path: &Path, line: usize, cell: &str) -> Result<T> {
    cell.parse().map_err(|_| Error::Trace {
        path: path.to_path_buf(),
        line,
        msg: format!("cannot parse `{cell}`"),
    })
}

fn parse_opt<T: std::str::FromStr>(path: &Path, line: usize, cell: &str) -> Result<Option<T>> {
    if cell.is_empty() {
        Ok(None)
    } else {
        parse_cell(path, line, cell).map(Some)
    }
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    read_lines(path, TRACE_HEADER)?
        .into_iter()
        .map(|(line, c)| {
            Ok(TraceRecord {
                round: parse_cell(path, line, &c[0])?,
                residual: parse_opt(path, line, &c[1])?,
                consensus: parse_cell(path, line, &c[2])?,
                tracking: parse_cell(path, line, &c[3])?,
                lyapunov: parse_opt(path, line, &c[4])?,
                grad_norm: parse_cell(path, line, &c[5])?,
                fval: parse_cell(path, line, &c[6])?,
            })
        })
        .collect()
}

pub fn read_summary(path: &Path) -> Result<Vec<SeedSummary>> {
    read_lines(path, SUMMARY_HEADER)?
        .into_iter()
        .map(|(line, c)| {
            Ok(SeedSummary {
                seed: parse_cell(path, line, &c[0])?,
                final_residual: parse_opt(path, line, &c[1])?,
                steady_state: parse_opt(path, line, &c[2])?,
                diverged_at: parse_opt(path, line, &c[3])?,
            })
        })
        .collect()
}
