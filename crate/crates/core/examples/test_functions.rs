//! Evaluates the benchmark functions at their minimizers and checks the
//! analytic gradients against central differences at a random point.

use nsopt::oracle::{finite_difference_check, make_test_function, Objective};
use nsopt::sampling::SampleRng;
use nsopt::nalgebra::DVector;

fn main() -> nsopt::Result<()> {
    let n = 5;
    let mut rng = SampleRng::new(11);
    println!("{:<5} {:>10} {:>12} {:>14}", "name", "f(x*)", "kink at x*", "fd error");
    for name in ["F1", "F2", "F3", "F4"] {
        let f = make_test_function(name, n)?;
        let xs = f.known_minimizer().expect("benchmark functions know x*");
        let x = DVector::from_fn(n, |_, _| rng.uniform_in(-2.0, 2.0));
        let err = finite_difference_check(&f, &x, 1e-6)?;
        println!(
            "{:<5} {:>10.3} {:>12} {:>14.2e}",
            f.name(),
            f.value(&xs),
            !f.is_differentiable(&xs),
            err
        );
    }

    let abs = make_test_function("ABS", 1)?;
    for x in [0.5, -0.3, 0.0] {
        let p = DVector::from_element(1, x);
        if abs.is_differentiable(&p) {
            println!("ABS'({x}) = {}", abs.gradient(&p)[0]);
        } else {
            println!("ABS is not differentiable at {x}");
        }
    }
    Ok(())
}
