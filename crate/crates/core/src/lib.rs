//! Sampling-based methods for unconstrained minimization of nonsmooth,
//! nonconvex functions.
//!
//! Two solvers are provided:
//!
//! * [`gs`] – the nonnormalized gradient sampling method. Each iteration samples
//!   gradients in a ball around the iterate, takes the minimum-norm element of
//!   their convex hull as a (negated) search direction and runs an Armijo
//!   backtracking line search.
//! * [`grafus`] – a trust-region method that samples function values *and*
//!   gradients, builds a cutting-plane model with a quasi-Newton metric and
//!   accepts steps by comparing actual against predicted reduction. It is
//!   meant as a local accelerator, so [`grafus::run_hybrid`] starts with
//!   gradient sampling and hands over once the sampling radius is small.
//!
//! Supporting pieces live in [`qp`] (the two structured quadratic
//! subproblems), [`hessian`] (bounded SPD metric and damped BFGS update),
//! [`oracle`] (objective interface and benchmark functions), [`sampling`]
//! (seeded uniform ball sampling) and [`bench`] (replicated experiments and
//! quartile statistics).
//!
//! ```
//! use nsopt::grafus::{run_grafus, GrafusConfig};
//! use nsopt::oracle::make_test_function;
//! use nsopt::sampling::SampleRng;
//! use nalgebra::DVector;
//!
//! let f = make_test_function("ABS", 1).unwrap();
//! let mut rng = SampleRng::new(7);
//! let trace = run_grafus(&f, &GrafusConfig::default(), &DVector::from_element(1, 0.25), &mut rng)
//!     .unwrap();
//! assert!(trace.final_x[0].abs() <= 1e-6);
//! ```

pub mod bench;
mod error;
pub mod grafus;
pub mod gs;
pub mod hessian;
pub mod oracle;
pub mod qp;
pub mod sampling;

pub use error::{Error, Result};
pub use nalgebra;
