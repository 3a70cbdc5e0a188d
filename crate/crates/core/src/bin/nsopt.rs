use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use nsopt::bench::emit::{emit_batch, write_trace_csv};
use nsopt::bench::{aggregate, run_batch, starting_point, Replicate, RunSpec, SolverKind};
use nsopt::grafus::{GrafusConfig, HybridTrace};
use nsopt::gs::{run_gs, GsConfig};
use nsopt::nalgebra::DVector;
use nsopt::oracle::{Objective, TestFunction, TestFunctionKind};
use nsopt::qp::{kkt_report, solve_grafus_qp, QpProblemFile, DEFAULT_QP_TOL};
use nsopt::sampling::SampleRng;
use nsopt::{Error, Result};

#[derive(Parser)]
#[command(name = "nsopt", version, about = "Sampling methods for nonsmooth minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run gradient sampling once.
    Gs {
        #[arg(long)]
        function: TestFunctionKind,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated starting point; drawn from the seed when absent.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        /// Per-iteration trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// JSON file with `gs` and `grafus` sections.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the trust-region method (optionally after GS) over several seeds.
    Grafus {
        #[arg(long)]
        function: TestFunctionKind,
        #[arg(long)]
        dim: usize,
        /// Number of replicates.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        hybrid: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Replicated benchmark with aggregate statistics and a gnuplot script.
    Bench {
        #[arg(long)]
        function: TestFunctionKind,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value = "hybrid")]
        solver: SolverKind,
        #[arg(long, default_value_t = 20)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write wall-clock columns (output is then not reproducible).
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Solve a subproblem read from JSON and print its KKT residuals.
    QpCheck { file: PathBuf },
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    gs: GsConfig,
    grafus: GrafusConfig,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
    }
}

fn run_single_gs(
    function: TestFunctionKind,
    dim: usize,
    seed: u64,
    x0: Option<Vec<f64>>,
    trace: Option<&Path>,
    config: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let oracle = TestFunction::new(function, dim)?;
    let mut rng = SampleRng::new(seed);
    let x0 = match x0 {
        Some(v) if v.len() == dim => DVector::from_vec(v),
        Some(v) => {
            return Err(Error::InvalidArgument(format!(
                "x0 has {} entries, expected {dim}",
                v.len()
            )))
        }
        None => starting_point(dim, 2.0, &mut rng),
    };
    let t = run_gs(&oracle, &cfg.gs, &x0, &mut rng)?;
    if let Some(path) = trace {
        let rep = Replicate {
            index: 0,
            seed,
            x0: x0.clone(),
            trace: HybridTrace {
                gs: Some(t.clone()),
                grafus: None,
                switch_index: None,
                note: None,
            },
        };
        write_trace_csv(path, &rep.rows())?;
    }
    println!("status      {:?}", t.status);
    println!("iterations  {}", t.records.len());
    println!("evaluations {}", t.evaluations);
    println!("final f     {:.16e}", t.final_f);
    if let Some(fs) = oracle.known_optimum() {
        println!("gap         {:.3e}", t.final_f - fs);
    }
    println!("final eps   {:.3e}", t.final_eps);
    Ok(())
}

fn run_spec(spec: RunSpec, out: &Path, timing: bool) -> Result<()> {
    let oracle = TestFunction::new(spec.function, spec.dim)?;
    let batch = run_batch(&spec)?;
    let stats = aggregate(&batch, &oracle, timing);
    let files = emit_batch(&batch, &stats, out, timing)?;
    let fs = stats.f_star.value();
    let mut gaps: Vec<f64> = batch.replicates.iter().map(|r| r.final_f() - fs).collect();
    gaps.sort_by(f64::total_cmp);
    println!(
        "{} n={} {}: {} replicates, {} failed",
        spec.function,
        spec.dim,
        spec.solver,
        batch.replicates.len(),
        batch.failures.len()
    );
    println!(
        "f* = {:.16e} ({})",
        fs,
        if stats.f_star.known.is_some() { "known" } else { "best observed" }
    );
    if !gaps.is_empty() {
        println!(
            "final gap quartiles: {:.3e} {:.3e} {:.3e}",
            nsopt::bench::stats::quantile_sorted(&gaps, 0.25),
            nsopt::bench::stats::quantile_sorted(&gaps, 0.5),
            nsopt::bench::stats::quantile_sorted(&gaps, 0.75)
        );
    }
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

fn qp_check(file: &Path) -> Result<()> {
    let f: QpProblemFile = serde_json::from_str(&fs::read_to_string(file)?)?;
    let problem = f.to_problem()?;
    let sol = solve_grafus_qp(&problem, f.tol.unwrap_or(DEFAULT_QP_TOL));
    let report = kkt_report(&problem, &sol);
    let out = serde_json::json!({
        "status": sol.status,
        "iterations": sol.iterations,
        "d": sol.d.as_slice(),
        "z": sol.z,
        "lambda": sol.lambda.as_slice(),
        "omega": sol.omega.as_slice(),
        "kkt": report,
        "max_residual": report.max_residual(),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Gs {
            function,
            dim,
            seed,
            x0,
            trace,
            config,
        } => run_single_gs(function, dim, seed, x0, trace.as_deref(), config.as_deref()),
        Command::Grafus {
            function,
            dim,
            seeds,
            seed,
            hybrid,
            out,
            config,
        } => load_config(config.as_deref()).and_then(|cfg| {
            let solver = if hybrid { SolverKind::Hybrid } else { SolverKind::Grafus };
            let spec = RunSpec {
                replicates: seeds,
                base_seed: seed,
                gs: cfg.gs,
                grafus: cfg.grafus,
                ..RunSpec::new(function, dim, solver)
            };
            run_spec(spec, &out, false)
        }),
        Command::Bench {
            function,
            dim,
            solver,
            replicates,
            seed,
            out,
            timing,
            config,
        } => load_config(config.as_deref()).and_then(|cfg| {
            let spec = RunSpec {
                replicates,
                base_seed: seed,
                gs: cfg.gs,
                grafus: cfg.grafus,
                ..RunSpec::new(function, dim, solver)
            };
            run_spec(spec, &out, timing)
        }),
        Command::QpCheck { file } => qp_check(&file),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
