//! Minimum-norm point of a convex hull (Wolfe's algorithm).

use nalgebra::{DMatrix, DVector};

use super::QpStatus;

#[derive(Debug, Clone)]
pub struct GsQpSolution {
    /// Simplex weights, one per column of `G`.
    pub lambda: DVector<f64>,
    /// `Gλ`, the minimum-norm element of the hull.
    pub g: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
}

/// Affine minimizer of the columns in `set`: `α` with `eᵀα = 1` minimizing
/// `‖P α‖`. Uses `α ∝ M⁻¹e` with `M = [e P]ᵀ[e P]`, solved through a QR
/// factor of the bordered matrix.
fn affine_minimizer(points: &DMatrix<f64>, set: &[usize]) -> Option<DVector<f64>> {
    let n = points.nrows();
    let k = set.len();
    if k > n + 1 {
        return None;
    }
    let mut b = DMatrix::zeros(n + 1, k);
    for (c, &j) in set.iter().enumerate() {
        b[(0, c)] = 1.0;
        b.view_mut((1, c), (n, 1)).copy_from(&points.column(j));
    }
    let qr = b.qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    if r.diagonal().iter().any(|v| v.abs() <= 1e-13 * scale.max(1.0)) {
        return None;
    }
    // M⁻¹e = R⁻¹ R⁻ᵀ e
    let e = DVector::from_element(k, 1.0);
    let y = r.transpose().solve_lower_triangular(&e)?;
    let a = r.solve_upper_triangular(&y)?;
    let s = a.sum();
    if !(s.abs() > 0.0) || !a.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(a / s)
}

fn combine(points: &DMatrix<f64>, set: &[usize], w: &[f64]) -> DVector<f64> {
    let mut x = DVector::zeros(points.nrows());
    for (&j, &wj) in set.iter().zip(w) {
        x.axpy(wj, &points.column(j), 1.0);
    }
    x
}

/// Minimum-Euclidean-norm point of the convex hull of the columns of `g`.
///
/// Equivalent to `min ½λᵀGᵀGλ` over the unit simplex. Stops when
/// `xᵀx − min_j xᵀg_j ≤ tol · xᵀx`, which bounds the distance to the true
/// minimum-norm point by `√tol · ‖x‖`.
pub fn solve_gs_qp(g: &DMatrix<f64>, tol: f64) -> GsQpSolution {
    let m = g.ncols();
    assert!(m >= 1, "need at least one gradient");
    let norms: Vec<f64> = g.column_iter().map(|c| c.norm_squared()).collect();
    let max_norm = norms.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let first = (0..m)
        .min_by(|&a, &b| norms[a].total_cmp(&norms[b]))
        .unwrap_or(0);

    let mut set = vec![first];
    let mut w = vec![1.0];
    let mut x = g.column(first).into_owned();
    let max_iter = 50 * (m + g.nrows() + 1);
    let mut iterations = 0;
    let mut status = QpStatus::MaxIter;

    'major: while iterations < max_iter {
        iterations += 1;
        let xx = x.norm_squared();
        let (j, xp) = (0..m)
            .map(|j| (j, x.dot(&g.column(j))))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .unwrap();
        if xx - xp <= tol * xx + 1e-30 * max_norm || xx == 0.0 {
            status = QpStatus::Optimal;
            break;
        }
        if set.contains(&j) {
            // no progress possible in floating point
            status = QpStatus::Optimal;
            break;
        }
        set.push(j);
        w.push(0.0);

        loop {
            iterations += 1;
            if iterations >= max_iter {
                break 'major;
            }
            let Some(alpha) = affine_minimizer(g, &set) else {
                // newly added point is affinely dependent on the set
                set.pop();
                w.pop();
                status = QpStatus::Degenerate;
                break 'major;
            };
            if alpha.iter().all(|&a| a > 1e-14) {
                w = alpha.iter().copied().collect();
                x = combine(g, &set, &w);
                break;
            }
            let mut theta = 1.0f64;
            for (c, &a) in alpha.iter().enumerate() {
                if a <= 1e-14 {
                    let denom = w[c] - a;
                    if denom > 0.0 {
                        theta = theta.min(w[c] / denom);
                    }
                }
            }
            for (c, wc) in w.iter_mut().enumerate() {
                *wc = theta * alpha[c] + (1.0 - theta) * *wc;
            }
            // drop every point whose weight hit zero, at least one
            let smallest = (0..w.len())
                .min_by(|&a, &b| w[a].total_cmp(&w[b]))
                .unwrap();
            w[smallest] = 0.0;
            let kept: Vec<(usize, f64)> = set
                .iter()
                .zip(&w)
                .filter(|(_, &wc)| wc > 1e-14)
                .map(|(&j, &wc)| (j, wc))
                .collect();
            set = kept.iter().map(|p| p.0).collect();
            w = kept.iter().map(|p| p.1).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
        }
    }

    let mut lambda = DVector::zeros(m);
    for (&j, &wj) in set.iter().zip(&w) {
        lambda[j] += wj.max(0.0);
    }
    let s = lambda.sum();
    lambda /= s;
    let gvec = g * &lambda;
    GsQpSolution {
        lambda,
        g: gvec,
        status,
        iterations,
    }
}
