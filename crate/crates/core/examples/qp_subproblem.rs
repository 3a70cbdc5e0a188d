//! Solves the one-dimensional trust-region subproblem built from `|x|` at
//! `x = 0.25` with two radii and prints primal, dual and KKT residuals.

use nsopt::hessian::SpdMatrix;
use nsopt::nalgebra::{DMatrix, DVector};
use nsopt::qp::{kkt_report, solve_grafus_qp, solve_gs_qp, QpProblem, DEFAULT_QP_TOL};

fn main() -> nsopt::Result<()> {
    let f_tilde = DVector::from_vec(vec![0.25, -0.25]);
    let g = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
    let h = SpdMatrix::identity(1, 1e-4, 1e4);

    for delta in [10.0, 0.1, f64::INFINITY] {
        let p = QpProblem::new(f_tilde.clone(), g.clone(), h.clone(), delta)?;
        let s = solve_grafus_qp(&p, DEFAULT_QP_TOL);
        let r = kkt_report(&p, &s);
        println!("delta = {delta}");
        println!("  d = {:.6}  z = {:.6}", s.d[0], s.z);
        println!("  lambda = {:.6?}  omega = {:.6}", s.lambda.as_slice(), s.omega[0]);
        println!(
            "  primal = {:.6}  dual = {:.6}  max residual = {:.1e}",
            r.primal_objective,
            r.dual_objective,
            r.max_residual()
        );
    }

    // the GS direction problem: shortest vector in the hull of the columns
    let cols = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.5, 1.0, 1.0, 2.0]);
    let s = solve_gs_qp(&cols, 1e-12);
    println!("min-norm point {:.6?} with weights {:.6?}", s.g.as_slice(), s.lambda.as_slice());
    Ok(())
}
