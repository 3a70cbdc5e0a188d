//! Damped BFGS updates of the metric, including a pair with negative
//! curvature that triggers Powell's correction and a pair that drives an
//! eigenvalue past the upper bound.

use nsopt::hessian::{bfgs_update_powell, HUpdateState, HessianConfig, SpdMatrix};
use nsopt::nalgebra::DVector;

fn main() {
    let cfg = HessianConfig::default();
    let h = SpdMatrix::identity(2, cfg.lower_bound, cfg.upper_bound);

    let p = DVector::from_vec(vec![1.0, 0.0]);
    let q = DVector::from_vec(vec![2.0, 0.0]);
    let (h1, rep) = bfgs_update_powell(&h, &p, &q, &cfg);
    println!("plain update   {rep:?}\n{}", h1.matrix());

    let q = DVector::from_vec(vec![-1.0, 0.5]);
    let (h2, rep) = bfgs_update_powell(&h1, &p, &q, &cfg);
    println!("negative qᵀp   {rep:?}\n{}", h2.matrix());

    let q = DVector::from_vec(vec![1e6, 0.0]);
    let (h3, rep) = bfgs_update_powell(&h, &p, &q, &cfg);
    println!("huge curvature {rep:?}, spectrum {:?}", h3.spectrum_range());

    // pairs are recorded only when ‖Gλ‖ ≤ √ν
    let mut state = HUpdateState::new(2, cfg);
    let nu = 1e-4;
    let steps = [
        (vec![0.0, 0.0], vec![0.005, 0.0]),
        (vec![0.1, 0.0], vec![0.5, 0.0]),
        (vec![0.1, 0.1], vec![0.008, 0.004]),
    ];
    for (x, v) in steps {
        let recorded = state.maybe_record(&DVector::from_vec(x), &DVector::from_vec(v), nu);
        println!("recorded = {recorded:<5} updates = {}", state.updates());
    }
    println!("{}", state.matrix().matrix());
}
