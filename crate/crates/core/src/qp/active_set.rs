//! Primal active-set method for the trust-region subproblem.
//!
//! The unknowns are `y = (d, z)`. Rows `0..m` are the cutting planes
//! `g_jᵀd − z ≤ −f̃_j`; with a finite radius, rows `m..m+n` are `d_i ≤ Δ`
//! and rows `m+n..m+2n` are `−d_i ≤ Δ`. The objective has no curvature in
//! `z`, so while no plane is in the working set the method follows the ray
//! `z ↓` until the first plane blocks. Once a plane is in, the equality
//! subproblem is strictly convex on the null space and the plane multipliers
//! sum to one, so at least one plane always stays.

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};

use super::{kkt_report, QpProblem, QpSolution, QpStatus};

// consecutive zero-length steps before switching to pure smallest-index pivoting
const DEGENERATE_SWITCH: usize = 5;
// relative residual below which a row counts as a combination of the working set
const DEPENDENCE_TOL: f64 = 1e-8;

struct Rows<'a> {
    p: &'a QpProblem,
    n: usize,
    m: usize,
    boxed: bool,
}

impl Rows<'_> {
    fn count(&self) -> usize {
        if self.boxed {
            self.m + 2 * self.n
        } else {
            self.m
        }
    }

    fn is_plane(&self, r: usize) -> bool {
        r < self.m
    }

    /// `aᵀy` for row `r`.
    fn dot(&self, r: usize, d: &DVector<f64>, z: f64) -> f64 {
        if r < self.m {
            self.p.g.column(r).dot(d) - z
        } else if r < self.m + self.n {
            d[r - self.m]
        } else {
            -d[r - self.m - self.n]
        }
    }

    fn rhs(&self, r: usize) -> f64 {
        if r < self.m {
            -self.p.f_tilde[r]
        } else {
            self.p.delta
        }
    }

    fn norm(&self, r: usize) -> f64 {
        if r < self.m {
            (self.p.g.column(r).norm_squared() + 1.0).sqrt()
        } else {
            1.0
        }
    }

    fn vector(&self, r: usize) -> DVector<f64> {
        let mut a = DVector::zeros(self.n + 1);
        if r < self.m {
            a.rows_mut(0, self.n).copy_from(&self.p.g.column(r));
            a[self.n] = -1.0;
        } else if r < self.m + self.n {
            a[r - self.m] = 1.0;
        } else {
            a[r - self.m - self.n] = -1.0;
        }
        a
    }

    /// Whether row `r` lies numerically in the span of the working rows.
    fn dependent(&self, working: &[usize], r: usize) -> bool {
        let k = working.len();
        if k == 0 {
            return false;
        }
        if k > self.n {
            return true;
        }
        let mut a = DMatrix::zeros(self.n + 1, k);
        for (c, &w) in working.iter().enumerate() {
            a.set_column(c, &self.vector(w));
        }
        let q = a.qr().q();
        let v = self.vector(r);
        let resid = &v - &q * q.tr_mul(&v);
        resid.norm() <= DEPENDENCE_TOL * v.norm()
    }

    /// Step `p = (p_d, p_z)` to the minimizer on the working-set face and the
    /// multipliers there, by the null-space method: `p = Zy` with `Z` an
    /// orthonormal basis of the face directions and `(ZᵀBZ)y = −Zᵀc`, where
    /// `B = diag(H, 0)` and `c = (Hd, 1)`. The multipliers solve
    /// `Aμ = −(c + Bp)` through the thin QR of the working rows `A`. With a
    /// plane in the working set every face direction moves `d`, so `ZᵀBZ`
    /// is positive definite.
    fn null_space_step(&self, working: &[usize], d: &DVector<f64>) -> Option<(DVector<f64>, f64, DVector<f64>)> {
        let n = self.n;
        let k = working.len();
        let mut aug = DMatrix::zeros(n + 1, k + n + 1);
        for (c, &r) in working.iter().enumerate() {
            aug.set_column(c, &self.vector(r));
        }
        aug.view_mut((0, k), (n + 1, n + 1)).fill_with_identity();
        let q = aug.qr().q();
        let z_basis = q.columns(k, n + 1 - k).into_owned();

        let h = self.p.h.matrix();
        let hd = self.p.h.mul(d);
        let mut c = DVector::zeros(n + 1);
        c.rows_mut(0, n).copy_from(&hd);
        c[n] = 1.0;

        let mut p = DVector::zeros(n + 1);
        if k < n + 1 {
            let zd = z_basis.rows(0, n);
            let reduced = zd.tr_mul(&(h * zd));
            let rhs = -z_basis.tr_mul(&c);
            let y = reduced.cholesky()?.solve(&rhs);
            p = &z_basis * y;
        }
        let p_d = p.rows(0, n).into_owned();
        let p_z = p[n];

        let mut grad = c;
        let hp = self.p.h.mul(&p_d);
        grad.rows_mut(0, n).add_assign(&hp);
        let qk = q.columns(0, k);
        let mut a = DMatrix::zeros(n + 1, k);
        for (col, &r) in working.iter().enumerate() {
            a.set_column(col, &self.vector(r));
        }
        // R = Q_kᵀA is upper triangular for the leading columns of the QR
        let r = qk.tr_mul(&a);
        let mu = r.solve_upper_triangular(&(-qk.tr_mul(&grad)))?;
        if !(p.iter().all(|v| v.is_finite()) && mu.iter().all(|v| v.is_finite())) {
            return None;
        }
        Some((p_d, p_z, mu))
    }
}

/// Solves the trust-region subproblem and its dual.
///
/// Starts from `d = 0, z = max f̃ + 1`. Blocking ties and multiplier ties go
/// to the smallest row index; after repeated zero-length steps the dropping
/// rule switches to the first negative multiplier (Bland) to rule out
/// cycling. The iteration cap is `50·(m + 2n + 1)`.
pub fn solve_grafus_qp(problem: &QpProblem, tol: f64) -> QpSolution {
    let n = problem.dim();
    let m = problem.planes();
    let rows = Rows {
        p: problem,
        n,
        m,
        boxed: problem.delta.is_finite(),
    };
    let max_iter = 50 * (m + 2 * n + 1);

    let mut d = DVector::zeros(n);
    let mut z = problem.f_tilde.max() + 1.0;
    let mut working: Vec<usize> = Vec::new();
    let mut mu = DVector::zeros(0);
    let mut at_minimizer = false;
    let mut zero_steps = 0;
    let mut status = QpStatus::MaxIter;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;

        if !working.iter().any(|&r| rows.is_plane(r)) {
            // ray z ↓: planes have aᵀp = 1, box rows aᵀp = 0
            let mut best: Option<(usize, f64)> = None;
            for r in 0..m {
                let step = (z - problem.f_tilde[r] - problem.g.column(r).dot(&d)).max(0.0);
                if best.is_none_or(|(_, s)| step < s) {
                    best = Some((r, step));
                }
            }
            let (r, step) = best.expect("at least one plane");
            z -= step;
            working.push(r);
            working.sort_unstable();
            at_minimizer = false;
            continue;
        }

        let k = working.len();
        let Some((p_d, p_z, new_mu)) = rows.null_space_step(&working, &d) else {
            status = QpStatus::Degenerate;
            break;
        };
        mu = new_mu;

        let scale = 1.0 + d.amax().max(z.abs());
        let tiny = p_d.amax().max(p_z.abs()) <= 1e-14 * scale;
        if at_minimizer || tiny {
            let leave = if zero_steps >= DEGENERATE_SWITCH {
                (0..k).find(|&c| mu[c] < -tol)
            } else {
                let mut pick: Option<usize> = None;
                for c in 0..k {
                    if mu[c] < -tol && pick.is_none_or(|b| mu[c] < mu[b]) {
                        pick = Some(c);
                    }
                }
                pick
            };
            match leave {
                None => {
                    status = QpStatus::Optimal;
                    break;
                }
                Some(c) => {
                    working.remove(c);
                    at_minimizer = false;
                    continue;
                }
            }
        }

        let pnorm = (p_d.norm_squared() + p_z * p_z).sqrt();
        let mut candidates = Vec::new();
        for r in 0..rows.count() {
            if working.binary_search(&r).is_ok() {
                continue;
            }
            let ap = if rows.is_plane(r) {
                problem.g.column(r).dot(&p_d) - p_z
            } else if r < m + n {
                p_d[r - m]
            } else {
                -p_d[r - m - n]
            };
            if ap <= 1e-14 * rows.norm(r) * pnorm {
                continue;
            }
            let slack = (rows.rhs(r) - rows.dot(r, &d, z)).max(0.0);
            let ratio = slack / ap;
            if ratio < 1.0 {
                candidates.push((ratio, r));
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        // rows dependent on the working set move only by rounding along p;
        // adding one would make the KKT matrix singular
        let (alpha, block) = candidates
            .into_iter()
            .find(|&(_, r)| !rows.dependent(&working, r))
            .map_or((1.0, None), |(ratio, r)| (ratio, Some(r)));

        d += &p_d * alpha;
        z += p_z * alpha;
        if alpha == 0.0 {
            zero_steps += 1;
        } else {
            zero_steps = 0;
        }
        match block {
            Some(r) => {
                working.push(r);
                working.sort_unstable();
                at_minimizer = false;
            }
            None => at_minimizer = true,
        }
    }

    let mut lambda = DVector::zeros(m);
    let mut omega = DVector::zeros(n);
    for (c, &r) in working.iter().enumerate() {
        let v = mu.get(c).copied().unwrap_or(0.0);
        if r < m {
            lambda[r] = v;
        } else if r < m + n {
            omega[r - m] += v;
        } else {
            omega[r - m - n] -= v;
        }
    }
    lambda.iter_mut().for_each(|l| *l = l.max(0.0));
    let s = lambda.sum();
    if s > 0.0 {
        lambda /= s;
    }
    // the plane that is most violated after rounding pins z
    z = z.max(problem.model_max(&d));

    let mut out = QpSolution {
        d,
        z,
        lambda,
        omega,
        status,
        iterations,
        duality_gap: 0.0,
        kkt_residual: 0.0,
    };
    let rep = kkt_report(problem, &out);
    out.duality_gap = rep.duality_gap;
    out.kkt_residual = rep.stationarity.max(rep.complementarity).max(rep.primal_feasibility);
    if out.status == QpStatus::MaxIter {
        log::warn!("active-set QP hit its iteration cap ({max_iter})");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hessian::SpdMatrix;
    use approx::assert_abs_diff_eq;

    fn scalar_problem(delta: f64) -> QpProblem {
        QpProblem::new(
            DVector::from_vec(vec![0.25, -0.25]),
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            SpdMatrix::identity(1, 1e-4, 1e4),
            delta,
        )
        .unwrap()
    }

    #[test]
    fn both_planes_active() {
        let s = solve_grafus_qp(&scalar_problem(10.0), 1e-10);
        assert_eq!(s.status, QpStatus::Optimal);
        assert_abs_diff_eq!(s.d[0], -0.25, epsilon = 1e-8);
        assert_abs_diff_eq!(s.z, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.lambda[0], 0.625, epsilon = 1e-8);
        assert_abs_diff_eq!(s.lambda[1], 0.375, epsilon = 1e-8);
        assert_abs_diff_eq!(s.omega[0], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn box_active() {
        let p = scalar_problem(0.1);
        let s = solve_grafus_qp(&p, 1e-10);
        assert_eq!(s.status, QpStatus::Optimal);
        assert_abs_diff_eq!(s.d[0], -0.1, epsilon = 1e-8);
        assert_abs_diff_eq!(s.z, 0.15, epsilon = 1e-8);
        assert_abs_diff_eq!(s.lambda[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.lambda[1], 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.omega[0], -0.9, epsilon = 1e-8);
        let rep = kkt_report(&p, &s);
        assert_abs_diff_eq!(rep.primal_objective, 0.155, epsilon = 1e-8);
        assert_abs_diff_eq!(rep.dual_objective, 0.155, epsilon = 1e-8);
        assert!(s.duality_gap <= 1e-8);
    }

    #[test]
    fn single_plane_no_box() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (h, _) = SpdMatrix::new(a, 1e-4, 1e4);
        let g = DVector::from_vec(vec![1.0, -3.0]);
        let p = QpProblem::new(
            DVector::zeros(1),
            DMatrix::from_column_slice(2, 1, g.as_slice()),
            h.clone(),
            f64::INFINITY,
        )
        .unwrap();
        let s = solve_grafus_qp(&p, 1e-10);
        let want = -h.solve(&g);
        assert_abs_diff_eq!(s.d, want, epsilon = 1e-10);
        assert_abs_diff_eq!(s.z, g.dot(&want), epsilon = 1e-10);
        assert_abs_diff_eq!(s.lambda[0], 1.0, epsilon = 1e-12);
        assert_eq!(s.omega.amax(), 0.0);
    }

    #[test]
    fn duplicate_planes_do_not_break_the_solver() {
        let p = QpProblem::new(
            DVector::from_vec(vec![0.1, 0.1, 0.1, -0.2]),
            DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 1.0, -1.0, 0.5, 0.5, 0.5, 2.0]),
            SpdMatrix::identity(2, 1e-4, 1e4),
            0.3,
        )
        .unwrap();
        let s = solve_grafus_qp(&p, 1e-10);
        assert_eq!(s.status, QpStatus::Optimal);
        assert!(kkt_report(&p, &s).max_residual() <= 1e-9);
    }
}
