//! The trust-region method on `|x|`, printing every inner iteration.

use nsopt::grafus::{run_grafus, GrafusConfig};
use nsopt::nalgebra::DVector;
use nsopt::oracle::make_test_function;
use nsopt::sampling::SampleRng;

fn main() -> nsopt::Result<()> {
    let abs = make_test_function("ABS", 1)?;
    let mut rng = SampleRng::new(3);
    let t = run_grafus(&abs, &GrafusConfig::default(), &DVector::from_element(1, 0.25), &mut rng)?;
    println!("{:>3} {:>3} {:>10} {:>10} {:>10} {:>11} {:>11}  outcome", "k", "l", "nu", "eps", "delta", "d", "|H^-1 G l|");
    for r in &t.inner {
        println!(
            "{:>3} {:>3} {:>10.2e} {:>10.2e} {:>10.2e} {:>11.3e} {:>11.3e}  {:?}",
            r.k, r.l, r.nu, r.eps, r.delta, r.d[0], r.step_norm, r.outcome
        );
    }
    println!("{:?}: x = {:.3e}, nu = {:.2e}", t.status, t.final_x[0], t.final_nu);
    Ok(())
}
