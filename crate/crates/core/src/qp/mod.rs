//! The two structured quadratic subproblems.
//!
//! The trust-region subproblem is
//!
//! ```text
//!     minimize    z + ½ dᵀHd
//!     subject to  f̃ + Gᵀd ≤ z e
//!                 ‖d‖∞ ≤ Δ
//! ```
//!
//! with dual
//!
//! ```text
//!     maximize    λᵀf̃ − ½ (Gλ + ω)ᵀH⁻¹(Gλ + ω) − Δ‖ω‖₁
//!     subject to  eᵀλ = 1, λ ≥ 0.
//! ```
//!
//! [`solve_grafus_qp`] returns both the primal pair `(d, z)` and the dual
//! pair `(λ, ω)`. [`solve_gs_qp`] finds the minimum-norm element of the
//! convex hull of a set of gradients.

mod active_set;
mod min_norm;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::hessian::SpdMatrix;
use crate::{Error, Result};

pub use active_set::solve_grafus_qp;
pub use min_norm::{solve_gs_qp, GsQpSolution};

/// Default absolute tolerance for both QP solvers.
pub const DEFAULT_QP_TOL: f64 = 1e-10;

/// Data of one trust-region subproblem. `delta = f64::INFINITY` drops the box.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub f_tilde: DVector<f64>,
    /// `n × m`, one sampled gradient per column.
    pub g: DMatrix<f64>,
    pub h: SpdMatrix,
    pub delta: f64,
}

impl QpProblem {
    pub fn new(f_tilde: DVector<f64>, g: DMatrix<f64>, h: SpdMatrix, delta: f64) -> Result<Self> {
        let p = QpProblem {
            f_tilde,
            g,
            h,
            delta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn planes(&self) -> usize {
        self.g.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.planes() == 0 {
            return Err(Error::InvalidArgument("QP needs at least one plane".into()));
        }
        if self.f_tilde.len() != self.planes() {
            return Err(Error::InvalidArgument(format!(
                "f_tilde has {} entries but G has {} columns",
                self.f_tilde.len(),
                self.planes()
            )));
        }
        if self.h.dim() != self.dim() {
            return Err(Error::InvalidArgument("H and G dimensions differ".into()));
        }
        if !self.f_tilde.iter().all(|v| v.is_finite()) || !self.g.iter().all(|v| v.is_finite())
        {
            return Err(Error::InvalidArgument("QP data must be finite".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "trust-region radius must be positive, got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// `z + ½dᵀHd`.
    pub fn primal_objective(&self, d: &DVector<f64>, z: f64) -> f64 {
        z + 0.5 * self.h.quad_form(d)
    }

    /// Dual objective at `(λ, ω)`; `ω` is ignored when the box is absent.
    pub fn dual_objective(&self, lambda: &DVector<f64>, omega: &DVector<f64>) -> f64 {
        let mut v = &self.g * lambda;
        let box_term = if self.delta.is_finite() {
            v += omega;
            self.delta * omega.lp_norm(1)
        } else {
            0.0
        };
        let hv = self.h.solve(&v);
        lambda.dot(&self.f_tilde) - 0.5 * v.dot(&hv) - box_term
    }

    /// Largest cutting-plane value `max_j (f̃ + Gᵀd)_j`.
    pub fn model_max(&self, d: &DVector<f64>) -> f64 {
        (&self.f_tilde + self.g.tr_mul(d)).max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Degenerate,
}

/// Primal-dual answer of [`solve_grafus_qp`].
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub d: DVector<f64>,
    pub z: f64,
    pub lambda: DVector<f64>,
    pub omega: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub duality_gap: f64,
    pub kkt_residual: f64,
}

/// Residuals of a candidate primal-dual pair. All entries are nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub primal_feasibility: f64,
    pub dual_feasibility: f64,
    pub stationarity: f64,
    pub complementarity: f64,
    pub duality_gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.primal_feasibility
            .max(self.dual_feasibility)
            .max(self.stationarity)
            .max(self.complementarity)
            .max(self.duality_gap)
    }
}

/// Residuals of `(d, z, λ, ω)` for `problem`.
///
/// Dual feasibility covers `λ ≥ 0` and `eᵀλ = 1`. The gap is reported as an
/// absolute value so that an inaccurate pair never shows a negative residual.
pub fn kkt_report(problem: &QpProblem, sol: &QpSolution) -> KktReport {
    let d = &sol.d;
    let slack = DVector::from_element(problem.planes(), sol.z) - &problem.f_tilde - problem.g.tr_mul(d);
    let finite = problem.delta.is_finite();

    let mut primal = slack.iter().fold(0.0f64, |a, &s| a.max(-s));
    if finite {
        primal = primal.max(d.amax() - problem.delta);
    }
    let primal = primal.max(0.0);

    let neg = sol.lambda.iter().fold(0.0f64, |a, &l| a.max(-l));
    let dual = neg.max((sol.lambda.sum() - 1.0).abs());

    let mut resid = problem.h.mul(d) + &problem.g * &sol.lambda;
    if finite {
        resid += &sol.omega;
    }
    let stationarity = resid.amax();

    let mut comp = sol
        .lambda
        .iter()
        .zip(slack.iter())
        .fold(0.0f64, |a, (l, s)| a.max((l * s).abs()));
    if finite {
        for (w, di) in sol.omega.iter().zip(d.iter()) {
            // ω_i > 0 pairs with d_i = Δ, ω_i < 0 with d_i = −Δ
            let gap = if *w >= 0.0 {
                problem.delta - di
            } else {
                problem.delta + di
            };
            comp = comp.max((w * gap).abs());
        }
    } else {
        comp = comp.max(sol.omega.amax());
    }

    let p = problem.primal_objective(d, sol.z);
    let q = problem.dual_objective(&sol.lambda, &sol.omega);
    KktReport {
        primal_feasibility: primal,
        dual_feasibility: dual,
        stationarity,
        complementarity: comp,
        duality_gap: (p - q).abs(),
        primal_objective: p,
        dual_objective: q,
    }
}

/// JSON form of a [`QpProblem`], used by the `qp-check` command.
///
/// `g` lists the gradient columns, `h` the rows of the metric, and a missing
/// or `null` `delta` means no trust region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblemFile {
    pub f_tilde: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    #[serde(default)]
    pub h: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
}

impl QpProblemFile {
    pub fn to_problem(&self) -> Result<QpProblem> {
        let m = self.g.len();
        let n = self.g.first().map_or(0, |c| c.len());
        if m == 0 || n == 0 || self.g.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidArgument(
                "g must be a non-empty list of equally sized columns".into(),
            ));
        }
        let g = DMatrix::from_fn(n, m, |i, j| self.g[j][i]);
        let h = match &self.h {
            None => DMatrix::identity(n, n),
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidArgument(format!("h must be {n}×{n}")));
                }
                DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
        };
        let (h, clamped) = SpdMatrix::new(h, 1e-12, 1e12);
        if clamped {
            return Err(Error::InvalidArgument("h is not symmetric positive definite".into()));
        }
        QpProblem::new(
            DVector::from_vec(self.f_tilde.clone()),
            g,
            h,
            self.delta.unwrap_or(f64::INFINITY),
        )
    }
}
