//! Replicated experiments: run a solver from many random starting points,
//! then summarize the traces with pointwise quartiles.
//!
//! Replicate `i` uses seed `base_seed + i` for both its starting point and
//! the solver's sampling, so a batch is reproducible independently of the
//! thread count.

pub mod emit;
pub mod stats;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grafus::{run_grafus, run_hybrid, GrafusConfig, GrafusTrace, HybridTrace};
use crate::gs::{run_gs, GsAction, GsConfig};
use crate::oracle::{Objective, TestFunction, TestFunctionKind};
use crate::sampling::SampleRng;
use crate::{Error, Result};

use stats::{bucket_by_time, pointwise, ratio_column, Quartiles};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "NSOPT_THREADS";
/// Width of the wall-clock buckets, in seconds.
pub const TIME_BUCKET: f64 = 0.01;
pub const RATIO_VECTOR_LEN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Gs,
    Grafus,
    Hybrid,
}

impl SolverKind {
    pub fn label(self) -> &'static str {
        match self {
            SolverKind::Gs => "gs",
            SolverKind::Grafus => "grafus",
            SolverKind::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gs" => Ok(SolverKind::Gs),
            "grafus" => Ok(SolverKind::Grafus),
            "hybrid" => Ok(SolverKind::Hybrid),
            _ => Err(Error::InvalidArgument(format!("unknown solver '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub function: TestFunctionKind,
    pub dim: usize,
    pub solver: SolverKind,
    pub replicates: usize,
    pub base_seed: u64,
    /// Starting points are uniform in `[-x0_bound, x0_bound]ⁿ`.
    pub x0_bound: f64,
    pub gs: GsConfig,
    pub grafus: GrafusConfig,
}

impl RunSpec {
    pub fn new(function: TestFunctionKind, dim: usize, solver: SolverKind) -> Self {
        RunSpec {
            function,
            dim,
            solver,
            replicates: 20,
            base_seed: 0,
            x0_bound: 2.0,
            gs: GsConfig::default(),
            grafus: GrafusConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicate count must be at least 1".into()));
        }
        if !(self.x0_bound >= 0.0 && self.x0_bound.is_finite()) {
            return Err(Error::InvalidArgument("x0 bound must be finite and nonnegative".into()));
        }
        TestFunction::new(self.function, self.dim)?;
        match self.solver {
            SolverKind::Gs => self.gs.validate(self.dim),
            SolverKind::Grafus => self.grafus.validate(self.dim),
            SolverKind::Hybrid => {
                self.gs.validate(self.dim)?;
                self.grafus.validate(self.dim)
            }
        }
    }

    pub fn seed(&self, replicate: usize) -> u64 {
        self.base_seed.wrapping_add(replicate as u64)
    }
}

/// Uniform point in `[-bound, bound]ⁿ`.
pub fn starting_point(n: usize, bound: f64, rng: &mut SampleRng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.uniform_in(-bound, bound))
}

/// One row of a per-replicate trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub l: usize,
    pub f: f64,
    pub nu: f64,
    pub eps: f64,
    /// `None` for gradient-sampling rows, which have no trust region.
    pub delta: Option<f64>,
    pub ared: Option<f64>,
    pub pred: Option<f64>,
    pub accepted: bool,
    /// `‖H⁻¹Gλ‖` for trust-region rows, `‖g‖` for gradient-sampling rows.
    pub step_norm: f64,
    pub dist_to_xstar: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Replicate {
    pub index: usize,
    pub seed: u64,
    pub x0: DVector<f64>,
    pub trace: HybridTrace,
}

impl Replicate {
    /// Objective values along the iteration axis.
    pub fn f_values(&self) -> Vec<f64> {
        self.trace.f_values()
    }

    /// `(elapsed seconds, f)` pairs matching [`Replicate::f_values`].
    pub fn timed_f_values(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut offset = 0.0;
        if let Some(gs) = &self.trace.gs {
            out.push((0.0, gs.records.first().map_or(gs.final_f, |r| r.f)));
            for r in &gs.records {
                out.push((r.elapsed, r.f_next));
            }
            offset = gs.records.last().map_or(0.0, |r| r.elapsed);
        }
        if let Some(gf) = &self.trace.grafus {
            if out.is_empty() {
                out.push((0.0, gf.f_values()[0]));
            }
            let fs = gf.f_values();
            for (r, f) in gf.outer.iter().zip(&fs[1..]) {
                out.push((offset + r.elapsed, *f));
            }
        }
        out
    }

    pub fn final_f(&self) -> f64 {
        self.trace.final_f()
    }

    pub fn status(&self) -> String {
        match (&self.trace.gs, &self.trace.grafus) {
            (_, Some(gf)) => format!("{:?}", gf.status).to_lowercase(),
            (Some(gs), None) => format!("{:?}", gs.status).to_lowercase(),
            (None, None) => "empty".into(),
        }
    }

    pub fn evaluations(&self) -> usize {
        self.trace.gs.as_ref().map_or(0, |t| t.evaluations)
            + self.trace.grafus.as_ref().map_or(0, |t| t.evaluations)
    }

    pub fn rows(&self) -> Vec<TraceRow> {
        let mut rows = Vec::new();
        if let Some(gs) = &self.trace.gs {
            for r in &gs.records {
                let moved = r.action == GsAction::Move;
                rows.push(TraceRow {
                    k: r.k,
                    l: 0,
                    f: r.f,
                    nu: r.nu,
                    eps: r.eps,
                    delta: None,
                    ared: moved.then_some(r.f - r.f_next),
                    pred: None,
                    accepted: moved,
                    step_norm: r.g_norm,
                    dist_to_xstar: r.dist_to_xstar,
                });
            }
        }
        if let Some(gf) = &self.trace.grafus {
            let offset = self.trace.switch_index.unwrap_or(0);
            for r in &gf.inner {
                rows.push(TraceRow {
                    k: offset + r.k,
                    l: r.l,
                    f: r.f,
                    nu: r.nu,
                    eps: r.eps,
                    delta: Some(r.delta),
                    ared: (!r.ared.is_nan()).then_some(r.ared),
                    pred: (!r.pred.is_nan()).then_some(r.pred),
                    accepted: r.accepted,
                    step_norm: r.step_norm,
                    dist_to_xstar: r.dist_to_xstar,
                });
            }
        }
        rows
    }

    pub fn ratio_vectors(&self, target_len: usize) -> RatioVectors {
        match &self.trace.grafus {
            Some(gf) => build_ratio_vectors(gf, target_len),
            None => RatioVectors::flagged(target_len, 0),
        }
    }
}

/// A replicate that returned an error instead of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub spec: RunSpec,
    pub replicates: Vec<Replicate>,
    pub failures: Vec<Failure>,
    pub elapsed: f64,
}

/// Thread cap from [`THREADS_ENV`]; `None` when unset or unparsable.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs every replicate of `spec`.
pub fn run_batch(spec: &RunSpec) -> Result<BatchResult> {
    spec.validate()?;
    let oracle = TestFunction::new(spec.function, spec.dim)?;
    run_batch_with(spec, |index, seed| {
        let mut rng = SampleRng::new(seed);
        let x0 = starting_point(spec.dim, spec.x0_bound, &mut rng);
        let trace = match spec.solver {
            SolverKind::Gs => {
                let gs = run_gs(&oracle, &spec.gs, &x0, &mut rng)?;
                HybridTrace {
                    gs: Some(gs),
                    grafus: None,
                    switch_index: None,
                    note: None,
                }
            }
            SolverKind::Grafus => {
                let gf = run_grafus(&oracle, &spec.grafus, &x0, &mut rng)?;
                HybridTrace {
                    gs: None,
                    grafus: Some(gf),
                    switch_index: Some(0),
                    note: None,
                }
            }
            SolverKind::Hybrid => run_hybrid(&oracle, &spec.gs, &spec.grafus, &x0, &mut rng)?,
        };
        Ok(Replicate {
            index,
            seed,
            x0,
            trace,
        })
    })
}

/// Runs `runner(index, seed)` for every replicate in parallel. Errors become
/// [`Failure`] records and the rest of the batch continues.
pub fn run_batch_with<F>(spec: &RunSpec, runner: F) -> Result<BatchResult>
where
    F: Fn(usize, u64) -> Result<Replicate> + Sync,
{
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap().unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
    let results: Vec<(usize, Result<Replicate>)> = pool.install(|| {
        (0..spec.replicates)
            .into_par_iter()
            .map(|i| (i, runner(i, spec.seed(i))))
            .collect()
    });
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for (index, r) in results {
        match r {
            Ok(rep) => replicates.push(rep),
            Err(e) => {
                log::warn!("replicate {index} failed: {e}");
                failures.push(Failure {
                    index,
                    seed: spec.seed(index),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(BatchResult {
        spec: spec.clone(),
        replicates,
        failures,
        elapsed: start.elapsed().as_secs_f64(),
    })
}

/// Smallest objective value seen anywhere in `series`; NaN when empty.
pub fn best_f<'a, I>(series: I) -> f64
where
    I: IntoIterator<Item = &'a [f64]>,
{
    series
        .into_iter()
        .flat_map(|s| s.iter().copied())
        .filter(|v| !v.is_nan())
        .fold(f64::NAN, f64::min)
}

/// Reference value used for the gaps `f − f*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FStar {
    pub best_observed: f64,
    pub known: Option<f64>,
}

impl FStar {
    /// The known optimum when there is one, else the best observed value.
    pub fn value(&self) -> f64 {
        self.known.unwrap_or(self.best_observed)
    }
}

/// Ratios recorded at certificate reductions, padded to a fixed length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioVectors {
    pub vec_nu: Vec<f64>,
    pub vec_xstar: Vec<f64>,
    /// Number of reductions actually observed.
    pub reductions: usize,
    /// Set when no reduction occurred; the vectors are then all NaN.
    pub flagged: bool,
}

impl RatioVectors {
    fn flagged(target_len: usize, reductions: usize) -> Self {
        RatioVectors {
            vec_nu: vec![f64::NAN; target_len],
            vec_xstar: vec![f64::NAN; target_len],
            reductions,
            flagged: true,
        }
    }
}

fn pad(mut v: Vec<f64>, len: usize) -> Vec<f64> {
    v.truncate(len);
    if let Some(&last) = v.last() {
        v.resize(len, last);
    }
    v
}

/// `ν_{k+1}/ν_k` and `‖x_{k+1} − x*‖/‖x_k − x*‖` at each certificate
/// reduction, padded by repeating the last value. Runs with more than
/// `target_len` reductions keep the first `target_len`. Without a known
/// minimizer `vec_xstar` is NaN.
pub fn build_ratio_vectors(trace: &GrafusTrace, target_len: usize) -> RatioVectors {
    let reds: Vec<_> = trace.reductions().collect();
    if reds.is_empty() || target_len == 0 {
        return RatioVectors::flagged(target_len, reds.len());
    }
    let nu: Vec<f64> = reds.iter().map(|r| r.nu_ratio()).collect();
    let xs: Vec<f64> = reds
        .iter()
        .map(|r| r.xstar_ratio().unwrap_or(f64::NAN))
        .collect();
    RatioVectors {
        vec_nu: pad(nu, target_len),
        vec_xstar: pad(xs, target_len),
        reductions: reds.len(),
        flagged: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRow {
    pub iter: usize,
    pub quartiles: Quartiles,
    /// `min{(f_{k+1} − f*)/(f_k − f*), 1}` on the median curve; `None` on
    /// the last row.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub index: usize,
    pub nu: Quartiles,
    pub xstar: Quartiles,
    /// Median over replicates of `min{vec_nu[i], vec_xstar[i]}`.
    pub min_median: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeRow {
    pub time: f64,
    pub quartiles: Quartiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub f_star: FStar,
    pub replicates: usize,
    pub iter: Vec<IterRow>,
    pub ratios: Vec<RatioRow>,
    /// Present only when timing aggregation was requested.
    pub time: Option<Vec<TimeRow>>,
}

/// Quartiles of `f − f*` over replicates, by iteration and optionally by
/// wall-clock time, plus quartiles of the ratio vectors.
pub fn aggregate<O: Objective + ?Sized>(
    batch: &BatchResult,
    oracle: &O,
    with_time: bool,
) -> AggregateStats {
    let series: Vec<Vec<f64>> = batch.replicates.iter().map(Replicate::f_values).collect();
    let f_star = FStar {
        best_observed: best_f(series.iter().map(Vec::as_slice)),
        known: oracle.known_optimum(),
    };
    let fs = f_star.value();
    let gaps: Vec<Vec<f64>> = series
        .iter()
        .map(|s| s.iter().map(|f| f - fs).collect())
        .collect();
    let quart = pointwise(&gaps);
    let medians: Vec<f64> = quart.iter().map(|q| q.median).collect();
    let ratios = ratio_column(&medians);
    let iter = quart
        .iter()
        .enumerate()
        .map(|(i, q)| IterRow {
            iter: i,
            quartiles: *q,
            ratio: ratios.get(i).copied(),
        })
        .collect();

    let vectors: Vec<RatioVectors> = batch
        .replicates
        .iter()
        .map(|r| r.ratio_vectors(RATIO_VECTOR_LEN))
        .filter(|v| !v.flagged)
        .collect();
    let ratio_rows = (0..if vectors.is_empty() { 0 } else { RATIO_VECTOR_LEN })
        .map(|i| {
            let nu: Vec<f64> = vectors.iter().map(|v| v.vec_nu[i]).collect();
            let xs: Vec<f64> = vectors.iter().map(|v| v.vec_xstar[i]).collect();
            let mins: Vec<f64> = nu.iter().zip(&xs).map(|(a, b)| a.min(*b)).collect();
            RatioRow {
                index: i + 1,
                nu: Quartiles::of(&nu),
                xstar: Quartiles::of(&xs),
                min_median: stats::quantile(&mins, 0.5),
            }
        })
        .collect();

    let time = with_time.then(|| {
        let timed: Vec<Vec<(f64, f64)>> = batch.replicates.iter().map(Replicate::timed_f_values).collect();
        let until = timed
            .iter()
            .filter_map(|t| t.last().map(|p| p.0))
            .fold(0.0, f64::max);
        let bucketed: Vec<Vec<f64>> = timed
            .iter()
            .map(|t| {
                bucket_by_time(t, TIME_BUCKET, until)
                    .into_iter()
                    .map(|f| f - fs)
                    .collect()
            })
            .collect();
        pointwise(&bucketed)
            .into_iter()
            .enumerate()
            .map(|(i, q)| TimeRow {
                time: i as f64 * TIME_BUCKET,
                quartiles: q,
            })
            .collect()
    });

    AggregateStats {
        f_star,
        replicates: batch.replicates.len(),
        iter,
        ratios: ratio_rows,
        time,
    }
}
