//! CSV and report files. Floats use the shortest representation that round-trips.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

use crate::config::ExperimentConfig;
use crate::experiment::{fmt_f64, Outcome, RawRow, SummaryRow, Table};

pub const RAW_HEADER: [&str; 13] = [
    "run_id", "gamma", "alpha", "batch", "replicate", "n_or_t", "f_gap", "dist2", "grad_sq", "suffix_avg", "log_n", "log_f_gap",
    "log_dist2",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "run_id", "gamma", "alpha", "batch", "n_or_t", "observable", "count", "mean", "ci_halfwidth",
];

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// `ln v` for positive `v`, empty otherwise.
fn log_or_empty(v: f64) -> String {
    if v > 0.0 {
        fmt_f64(v.ln())
    } else {
        String::new()
    }
}

fn batch(b: Option<usize>) -> String {
    b.map(|m| m.to_string()).unwrap_or_default()
}

pub fn write_raw<W: Write>(rows: &[RawRow], w: W) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(RAW_HEADER)?;
    for r in rows {
        wr.write_record([
            r.run.run_id.to_string(),
            fmt_f64(r.run.gamma),
            fmt_f64(r.run.alpha),
            batch(r.run.batch),
            r.replicate.to_string(),
            fmt_f64(r.n_or_t),
            fmt_f64(r.f_gap),
            fmt_f64(r.dist2),
            fmt_f64(r.grad_sq),
            opt(r.suffix_avg),
            log_or_empty(r.n_or_t),
            log_or_empty(r.f_gap),
            log_or_empty(r.dist2),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(SUMMARY_HEADER)?;
    for r in rows {
        wr.write_record([
            r.run.run_id.to_string(),
            fmt_f64(r.run.gamma),
            fmt_f64(r.run.alpha),
            batch(r.run.batch),
            fmt_f64(r.n_or_t),
            r.observable.to_string(),
            r.count.to_string(),
            fmt_f64(r.mean),
            opt(r.ci_halfwidth),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_table<W: Write>(t: &Table, w: W) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(&t.header)?;
    for r in &t.rows {
        wr.write_record(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Writes `config.toml`, `raw.csv`, `summary.csv`, `report.txt` and the experiment's own tables.
pub fn write_outputs(cfg: &ExperimentConfig, outcome: &Outcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let open = |name: &str| {
        let p = dir.join(name);
        fs::File::create(&p).with_context(|| format!("creating {}", p.display()))
    };
    fs::write(dir.join("config.toml"), cfg.echo())?;
    write_raw(&outcome.raw, std::io::BufWriter::new(open("raw.csv")?))?;
    write_summary(&outcome.summary, std::io::BufWriter::new(open("summary.csv")?))?;
    for t in &outcome.tables {
        write_table(t, std::io::BufWriter::new(open(t.file_name)?))?;
    }
    let mut report = outcome.report.join("\n");
    report.push('\n');
    fs::write(dir.join("report.txt"), report)?;
    Ok(())
}
