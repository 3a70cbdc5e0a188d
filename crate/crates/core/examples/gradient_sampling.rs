//! Gradient sampling on a smooth quadratic and on Chained CB3 I.

use nsopt::gs::{run_gs, GsAction, GsConfig};
use nsopt::nalgebra::DVector;
use nsopt::oracle::{make_test_function, Objective};
use nsopt::sampling::SampleRng;

fn main() -> nsopt::Result<()> {
    let quad = make_test_function("QUAD", 2)?;
    let mut rng = SampleRng::new(1);
    let t = run_gs(&quad, &GsConfig::default(), &DVector::from_element(2, 1.0), &mut rng)?;
    println!(
        "QUAD: {:?} after {} iterations, f = {:.2e}",
        t.status,
        t.records.len(),
        t.final_f
    );

    let f1 = make_test_function("F1", 5)?;
    let mut rng = SampleRng::new(7);
    let x0 = DVector::from_vec(vec![1.7, -0.4, 0.3, 1.9, -1.5]);
    let t = run_gs(&f1, &GsConfig::default(), &x0, &mut rng)?;
    let reductions = t.records.iter().filter(|r| r.action == GsAction::ReduceRadius).count();
    println!(
        "F1:   {:?} after {} iterations ({} radius reductions), f - f* = {:.2e}",
        t.status,
        t.records.len(),
        reductions,
        t.final_f - f1.known_optimum().unwrap()
    );
    for r in t.records.iter().filter(|r| r.action == GsAction::ReduceRadius) {
        println!("  k = {:>4}  eps = {:.0e}  |g| = {:.2e}", r.k, r.eps, r.g_norm);
    }
    Ok(())
}
