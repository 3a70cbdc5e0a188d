//! CSV and gnuplot output for benchmark batches.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which parses
//! back to the same `f64`. Missing values are empty fields. Nothing
//! time-dependent is written unless timing output is requested, so two runs
//! with the same flags produce identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{AggregateStats, BatchResult, FStar, Failure, IterRow, RatioRow, Replicate, RunSpec, TimeRow, TraceRow};
use crate::{Error, Result};

pub const TRACE_HEADER: [&str; 11] = [
    "k",
    "l",
    "f",
    "nu",
    "eps",
    "delta",
    "ared",
    "pred",
    "accepted",
    "step_norm",
    "dist_to_xstar",
];
pub const ITER_HEADER: [&str; 5] = ["iter", "q1", "median", "q3", "ratio"];
pub const TIME_HEADER: [&str; 4] = ["time", "q1", "median", "q3"];
pub const RATIO_HEADER: [&str; 8] = [
    "index",
    "nu_q1",
    "nu_median",
    "nu_q3",
    "xstar_q1",
    "xstar_median",
    "xstar_q3",
    "min_median",
];

pub const ITER_FILE: &str = "aggregate_iter.csv";
pub const TIME_FILE: &str = "aggregate_time.csv";
pub const RATIO_FILE: &str = "ratio_vectors.csv";
pub const REPLICATE_RATIO_FILE: &str = "replicate_ratios.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const FAILURE_FILE: &str = "failures.csv";
pub const PLOT_FILE: &str = "plot.gp";
pub const RUN_FILE: &str = "run.json";
pub const TRACE_DIR: &str = "traces";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Parses a field written by this module; empty means `None`.
pub fn parse_field(s: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::InvalidArgument(format!("not a number: '{s}'")))
}

/// Writes a header row and string rows.
pub fn write_table<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_table`]: header and rows.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_owned).collect());
    }
    Ok((header, rows))
}

fn trace_record(r: &TraceRow) -> Vec<String> {
    vec![
        r.k.to_string(),
        r.l.to_string(),
        fmt_f64(r.f),
        fmt_f64(r.nu),
        fmt_f64(r.eps),
        fmt_opt(r.delta),
        fmt_opt(r.ared),
        fmt_opt(r.pred),
        u8::from(r.accepted).to_string(),
        fmt_f64(r.step_norm),
        fmt_opt(r.dist_to_xstar),
    ]
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_table(path, &TRACE_HEADER, rows.iter().map(trace_record))
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let (header, rows) = read_table(path)?;
    if header != TRACE_HEADER {
        return Err(Error::InvalidArgument(format!("unexpected trace header {header:?}")));
    }
    let bad = |what: &str| Error::InvalidArgument(format!("bad trace field {what}"));
    rows.iter()
        .map(|r| {
            let req = |i: usize| parse_field(&r[i])?.ok_or_else(|| bad(TRACE_HEADER[i]));
            Ok(TraceRow {
                k: r[0].parse().map_err(|_| bad("k"))?,
                l: r[1].parse().map_err(|_| bad("l"))?,
                f: req(2)?,
                nu: req(3)?,
                eps: req(4)?,
                delta: parse_field(&r[5])?,
                ared: parse_field(&r[6])?,
                pred: parse_field(&r[7])?,
                accepted: r[8] == "1",
                step_norm: req(9)?,
                dist_to_xstar: parse_field(&r[10])?,
            })
        })
        .collect()
}

pub fn write_iter_csv(path: &Path, rows: &[IterRow]) -> Result<()> {
    write_table(
        path,
        &ITER_HEADER,
        rows.iter().map(|r| {
            vec![
                r.iter.to_string(),
                fmt_f64(r.quartiles.q1),
                fmt_f64(r.quartiles.median),
                fmt_f64(r.quartiles.q3),
                fmt_opt(r.ratio),
            ]
        }),
    )
}

pub fn write_time_csv(path: &Path, rows: &[TimeRow]) -> Result<()> {
    write_table(
        path,
        &TIME_HEADER,
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.time),
                fmt_f64(r.quartiles.q1),
                fmt_f64(r.quartiles.median),
                fmt_f64(r.quartiles.q3),
            ]
        }),
    )
}

pub fn write_ratio_csv(path: &Path, rows: &[RatioRow]) -> Result<()> {
    write_table(
        path,
        &RATIO_HEADER,
        rows.iter().map(|r| {
            vec![
                r.index.to_string(),
                fmt_f64(r.nu.q1),
                fmt_f64(r.nu.median),
                fmt_f64(r.nu.q3),
                fmt_f64(r.xstar.q1),
                fmt_f64(r.xstar.median),
                fmt_f64(r.xstar.q3),
                fmt_f64(r.min_median),
            ]
        }),
    )
}

fn write_replicate_ratios(path: &Path, reps: &[Replicate]) -> Result<()> {
    let mut rows = Vec::new();
    for rep in reps {
        let v = rep.ratio_vectors(super::RATIO_VECTOR_LEN);
        if v.flagged {
            continue;
        }
        for (i, (a, b)) in v.vec_nu.iter().zip(&v.vec_xstar).enumerate() {
            rows.push(vec![
                rep.index.to_string(),
                (i + 1).to_string(),
                fmt_f64(*a),
                fmt_f64(*b),
            ]);
        }
    }
    write_table(path, &["replicate", "index", "vec_nu", "vec_xstar"], rows)
}

fn write_summary(path: &Path, batch: &BatchResult, f_star: f64, timing: bool) -> Result<()> {
    let mut header = vec![
        "replicate",
        "seed",
        "status",
        "iterations",
        "gs_iterations",
        "grafus_outer",
        "grafus_inner",
        "evaluations",
        "final_f",
        "final_gap",
        "reductions",
        "h_updates",
    ];
    if timing {
        header.push("seconds");
    }
    let rows = batch.replicates.iter().map(|rep| {
        let gs = rep.trace.gs.as_ref();
        let gf = rep.trace.grafus.as_ref();
        let mut row = vec![
            rep.index.to_string(),
            rep.seed.to_string(),
            rep.status(),
            (rep.f_values().len().saturating_sub(1)).to_string(),
            gs.map_or(0, |t| t.records.len()).to_string(),
            gf.map_or(0, |t| t.outer.len()).to_string(),
            gf.map_or(0, |t| t.inner.len()).to_string(),
            rep.evaluations().to_string(),
            fmt_f64(rep.final_f()),
            fmt_f64(rep.final_f() - f_star),
            gf.map_or(0, |t| t.reductions().count()).to_string(),
            gf.map_or(0, |t| t.h_updates).to_string(),
        ];
        if timing {
            let t = rep.timed_f_values().last().map_or(0.0, |p| p.0);
            row.push(fmt_f64(t));
        }
        row
    });
    write_table(path, &header, rows)
}

fn write_failures(path: &Path, failures: &[Failure]) -> Result<()> {
    write_table(
        path,
        &["replicate", "seed", "message"],
        failures
            .iter()
            .map(|f| vec![f.index.to_string(), f.seed.to_string(), f.message.clone()]),
    )
}

/// Gnuplot script drawing the quartile band and median of `f − f*`
/// (coloured by the ratio column) and the ratio-vector quartiles. It reads
/// only the aggregate CSVs in its own directory.
pub fn plot_script(title: &str, with_time: bool) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "# {title}\n# usage: gnuplot {PLOT_FILE}   (from this directory)\n"
    ));
    s.push_str(
        "set datafile separator ','\n\
         set datafile missing ''\n\
         set terminal pngcairo size 1400,500\n\
         set palette defined (0 'blue', 0.5 'green', 1 'red')\n\
         set cbrange [0:1]\n\
         set cblabel 'min{(f_{k+1}-f*)/(f_k-f*), 1}'\n\
         set key top right\n\n",
    );
    s.push_str(&format!(
        "set output 'gap_iter.png'\n\
         set logscale y\n\
         set format y '10^{{%L}}'\n\
         set xlabel 'iteration'\n\
         set ylabel 'f - f*'\n\
         set title '{title}'\n\
         plot '{ITER_FILE}' using 1:2:4 skip 1 with filledcurves lc rgb '#d0d0f0' title 'Q1-Q3', \\\n\
         \x20    '' using 1:3:5 skip 1 with lines lw 2 lc palette title 'median'\n\n"
    ));
    if with_time {
        s.push_str(&format!(
            "set output 'gap_time.png'\n\
             set xlabel 'seconds'\n\
             plot '{TIME_FILE}' using 1:2:4 skip 1 with filledcurves lc rgb '#d0d0f0' title 'Q1-Q3', \\\n\
             \x20    '' using 1:3 skip 1 with lines lw 2 title 'median'\n\n"
        ));
    }
    s.push_str(&format!(
        "set output 'ratios.png'\n\
         set xlabel 'reduction'\n\
         set ylabel 'ratio'\n\
         plot '{RATIO_FILE}' using 1:2:4 skip 1 with filledcurves lc rgb '#f0d0d0' title 'nu Q1-Q3', \\\n\
         \x20    '' using 1:3 skip 1 with linespoints lw 2 title 'nu median', \\\n\
         \x20    '' using 1:5:7 skip 1 with filledcurves lc rgb '#d0f0d0' title 'x* Q1-Q3', \\\n\
         \x20    '' using 1:6 skip 1 with linespoints lw 2 title 'x* median'\n"
    ));
    s
}

#[derive(Serialize)]
struct RunInfo<'a> {
    spec: &'a RunSpec,
    f_star: FStar,
    completed: usize,
    failures: &'a [Failure],
}

/// Writes every output file for `batch` into `dir` and returns their paths.
pub fn emit_batch(batch: &BatchResult, stats: &AggregateStats, dir: &Path, timing: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir.join(TRACE_DIR))?;
    let mut written = Vec::new();
    for rep in &batch.replicates {
        let p = dir.join(TRACE_DIR).join(format!("replicate_{:03}.csv", rep.index));
        write_trace_csv(&p, &rep.rows())?;
        written.push(p);
    }
    let p = dir.join(ITER_FILE);
    write_iter_csv(&p, &stats.iter)?;
    written.push(p);
    let p = dir.join(RATIO_FILE);
    write_ratio_csv(&p, &stats.ratios)?;
    written.push(p);
    let p = dir.join(REPLICATE_RATIO_FILE);
    write_replicate_ratios(&p, &batch.replicates)?;
    written.push(p);
    let p = dir.join(SUMMARY_FILE);
    write_summary(&p, batch, stats.f_star.value(), timing)?;
    written.push(p);
    let p = dir.join(FAILURE_FILE);
    write_failures(&p, &batch.failures)?;
    written.push(p);
    let with_time = timing && stats.time.is_some();
    if let (true, Some(rows)) = (timing, &stats.time) {
        let p = dir.join(TIME_FILE);
        write_time_csv(&p, rows)?;
        written.push(p);
    }
    let spec = &batch.spec;
    let title = format!(
        "{} n={} {} ({} replicates, seed {})",
        spec.function, spec.dim, spec.solver, spec.replicates, spec.base_seed
    );
    let p = dir.join(PLOT_FILE);
    fs::write(&p, plot_script(&title, with_time))?;
    written.push(p);
    let info = RunInfo {
        spec,
        f_star: stats.f_star,
        completed: batch.replicates.len(),
        failures: &batch.failures,
    };
    let p = dir.join(RUN_FILE);
    fs::write(&p, serde_json::to_string_pretty(&info)? + "\n")?;
    written.push(p);
    Ok(written)
}
