//! A small replicated benchmark: four seeds of the hybrid method on
//! Chained crescent I, aggregated and written to a temporary directory.
//!
//! Pass a directory as the first argument to keep the output.

use std::path::PathBuf;

use nsopt::bench::emit::emit_batch;
use nsopt::bench::{aggregate, run_batch, RunSpec, SolverKind};
use nsopt::oracle::{TestFunction, TestFunctionKind};

fn main() -> nsopt::Result<()> {
    let spec = RunSpec {
        replicates: 4,
        base_seed: 5,
        ..RunSpec::new(TestFunctionKind::F4, 5, SolverKind::Hybrid)
    };
    let oracle = TestFunction::new(spec.function, spec.dim)?;
    let batch = run_batch(&spec)?;
    let stats = aggregate(&batch, &oracle, false);

    for rep in &batch.replicates {
        println!(
            "seed {:>3}: {:<10} {:>4} iterations  f - f* = {:.2e}",
            rep.seed,
            rep.status(),
            rep.f_values().len() - 1,
            rep.final_f() - stats.f_star.value()
        );
    }
    let last = stats.iter.last().expect("at least one iteration");
    println!(
        "final quartiles of f - f*: {:.2e} {:.2e} {:.2e}",
        last.quartiles.q1, last.quartiles.median, last.quartiles.q3
    );

    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("nsopt-bench-example"));
    let files = emit_batch(&batch, &stats, &dir, false)?;
    println!("wrote {} files under {}", files.len(), dir.display());
    Ok(())
}
