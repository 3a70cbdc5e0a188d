//! Helpers shared by the integration tests: an independent reference
//! solver for the trust-region subproblem, random instances, and trace
//! invariant checks.

#![allow(dead_code)]

use nsopt::grafus::{GrafusConfig, GrafusTrace, InnerOutcome};
use nsopt::gs::{GsAction, GsTrace};
use nsopt::hessian::SpdMatrix;
use nsopt::nalgebra::{DMatrix, DVector};
use nsopt::qp::QpProblem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `min_{‖d‖∞ ≤ Δ} sᵀd + ½dᵀHd`, exactly, by trying every face of the box:
/// each coordinate is free, at `+Δ` or at `−Δ`. The minimizer of a strictly
/// convex function over a box is the minimizer over the affine hull of the
/// face it lies on, so the best feasible face candidate is optimal.
pub fn box_qp(h: &DMatrix<f64>, s: &DVector<f64>, delta: f64) -> DVector<f64> {
    let n = s.len();
    if delta.is_infinite() {
        return -h.clone().cholesky().unwrap().solve(s);
    }
    let mut best: Option<(f64, DVector<f64>)> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut d = DVector::zeros(n);
        let mut free = Vec::new();
        let mut c = code;
        for i in 0..n {
            match c % 3 {
                0 => free.push(i),
                1 => d[i] = delta,
                _ => d[i] = -delta,
            }
            c /= 3;
        }
        if !free.is_empty() {
            let k = free.len();
            let hff = DMatrix::from_fn(k, k, |a, b| h[(free[a], free[b])]);
            let mut rhs = DVector::from_fn(k, |a, _| -s[free[a]]);
            for i in 0..n {
                if !free.contains(&i) {
                    for (a, &fa) in free.iter().enumerate() {
                        rhs[a] -= h[(fa, i)] * d[i];
                    }
                }
            }
            let sol = hff.cholesky().unwrap().solve(&rhs);
            for (a, &fa) in free.iter().enumerate() {
                d[fa] = sol[a];
            }
            if d.amax() > delta * (1.0 + 1e-12) {
                continue;
            }
        }
        let val = s.dot(&d) + 0.5 * d.dot(&(h * &d));
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, d));
        }
    }
    best.unwrap().1
}

/// Euclidean projection onto the unit simplex (sort-based).
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut tau = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            tau = t;
        }
    }
    v.map(|x| (x - tau).max(0.0))
}

/// Certified bracket `[lower, upper]` on the optimal subproblem value.
#[derive(Debug, Clone, Copy)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
}

impl Bracket {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Accelerated projected-gradient ascent on the dual function
/// `q(λ) = min_{‖d‖∞≤Δ} λᵀ(f̃ + Gᵀd) + ½dᵀHd` over the simplex. Every
/// `q(λ)` is a lower bound and every primal value at the inner minimizer an
/// upper bound; iteration stops once they are within `tol`.
pub fn projected_gradient_oracle(
    f_tilde: &DVector<f64>,
    g: &DMatrix<f64>,
    h: &DMatrix<f64>,
    delta: f64,
    tol: f64,
    max_iter: usize,
) -> Bracket {
    let m = f_tilde.len();
    let primal = |d: &DVector<f64>| (f_tilde + g.tr_mul(d)).max() + 0.5 * d.dot(&(h * d));
    let eval = |lam: &DVector<f64>| {
        let d = box_qp(h, &(g * lam), delta);
        let grad = f_tilde + g.tr_mul(&d);
        let q = lam.dot(&grad) + 0.5 * d.dot(&(h * &d));
        (q, grad, d)
    };
    let hmin = h.clone().symmetric_eigen().eigenvalues.min();
    let lip = (g.norm_squared() / hmin).max(1e-12);
    let step = 1.0 / lip;

    let mut lam = DVector::from_element(m, 1.0 / m as f64);
    let mut y = lam.clone();
    let mut t = 1.0f64;
    let mut lower = f64::NEG_INFINITY;
    let mut upper = primal(&DVector::zeros(g.nrows()));
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        // y may sit off the simplex, so only its primal point is a bound
        let (qy, grad, dy) = eval(&y);
        upper = upper.min(primal(&dy));
        let next = project_simplex(&(&y + grad * step));
        let (qn, _, dn) = eval(&next);
        lower = lower.max(qn);
        upper = upper.min(primal(&dn));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // restart the momentum when the dual value drops
        y = if qn < qy {
            t = 1.0;
            next.clone()
        } else {
            let y_next = &next + (&next - &lam) * ((t - 1.0) / t_next);
            t = t_next;
            y_next
        };
        lam = next;
        if upper - lower <= tol {
            break;
        }
    }
    Bracket {
        lower,
        upper,
        iterations,
    }
}

pub fn random_spd(n: usize, cond: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = a.qr().q();
    let mut eig = DVector::from_fn(n, |_, _| cond.powf(rng.random::<f64>()));
    if n >= 2 {
        eig[0] = 1.0;
        eig[1] = cond;
    }
    let h = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    (&h + h.transpose()) * 0.5
}

/// Random subproblem with `n ≤ max_n`, `m ≤ max_m`, `cond(H) ≤ max_cond`.
/// About one in five has no trust region, and about one in five repeats a
/// plane.
pub fn random_problem(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize, max_cond: f64) -> QpProblem {
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(1..=max_m);
    let cond = max_cond.powf(rng.random::<f64>());
    let h = random_spd(n, cond, rng);
    let mut g = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut f = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
    if m >= 2 && rng.random::<f64>() < 0.2 {
        let c = g.column(0).into_owned();
        g.set_column(m - 1, &c);
        f[m - 1] = f[0];
    }
    let delta = if rng.random::<f64>() < 0.2 {
        f64::INFINITY
    } else {
        rng.random_range(0.01..2.0)
    };
    let (h, _) = SpdMatrix::new(h, 1e-12, 1e12);
    QpProblem::new(f, g, h, delta).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Violations of the trust-region trace invariants; empty when all hold.
pub fn grafus_violations(t: &GrafusTrace, cfg: &GrafusConfig) -> Vec<String> {
    let mut bad = Vec::new();
    let ratio = cfg.gamma_eps / cfg.gamma_delta;
    for w in t.outer.windows(2) {
        if w[1].nu != w[0].nu_next {
            bad.push(format!("outer {}: nu does not carry over", w[1].k));
        }
    }
    for r in &t.outer {
        if r.reduced && !(r.nu_next < r.nu) {
            bad.push(format!("outer {}: reduction did not decrease nu", r.k));
        }
        if !r.reduced && r.nu_next != r.nu {
            bad.push(format!("outer {}: nu changed without a reduction", r.k));
        }
        let (lo, hi) = r.h_spectrum;
        let (blo, bhi) = (cfg.hessian.lower_bound, cfg.hessian.upper_bound);
        if lo < blo * (1.0 - 1e-9) || hi > bhi * (1.0 + 1e-9) {
            bad.push(format!("outer {}: H spectrum [{lo:e}, {hi:e}] out of bounds", r.k));
        }
    }
    for r in &t.inner {
        let tag = format!("inner ({}, {})", r.k, r.l);
        if r.delta.is_finite() && ((r.eps / r.delta) / ratio - 1.0).abs() > 1e-12 {
            bad.push(format!("{tag}: eps/delta = {}", r.eps / r.delta));
        }
        if r.accepted && !(r.ared > cfg.rho * r.pred) {
            bad.push(format!("{tag}: accepted with ared {} <= rho pred {}", r.ared, r.pred));
        }
        if matches!(r.outcome, InnerOutcome::Accepted | InnerOutcome::Rejected) && r.pred < -1e-12 {
            bad.push(format!("{tag}: pred = {:e}", r.pred));
        }
        let sum: f64 = r.lambda.iter().sum();
        if (sum - 1.0).abs() > 1e-10 || r.lambda.iter().any(|&l| l < -1e-10) {
            bad.push(format!("{tag}: lambda off the simplex (sum {sum})"));
        }
        let dinf = r.d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let dnorm = r.d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if dinf <= 0.999 * r.delta && r.interior_residual > 1e-7 * (1.0 + dnorm) {
            bad.push(format!("{tag}: interior residual {:e}", r.interior_residual));
        }
    }
    bad
}

/// Bound on `‖Gλ‖` at each certificate reduction, using the largest
/// eigenvalue of the metric in force.
pub fn certificate_violations(t: &GrafusTrace) -> Vec<String> {
    let mut bad = Vec::new();
    for o in t.outer.iter().filter(|o| o.reduced) {
        let last = t
            .inner
            .iter()
            .rev()
            .find(|r| r.k == o.k)
            .expect("every outer iteration has inner records");
        if last.g_lambda_norm > o.h_spectrum.1 * o.nu * (1.0 + 1e-8) {
            bad.push(format!(
                "outer {}: |G lambda| = {:e} > {:e} (delta {})",
                o.k,
                last.g_lambda_norm,
                o.h_spectrum.1 * o.nu,
                last.delta
            ));
        }
    }
    bad
}

/// Violations of the gradient-sampling trace invariants.
pub fn gs_violations(t: &GsTrace) -> Vec<String> {
    let mut bad = Vec::new();
    for w in t.records.windows(2) {
        if w[1].eps > w[0].eps {
            bad.push(format!("k {}: eps increased", w[1].k));
        }
    }
    for r in &t.records {
        match r.action {
            GsAction::Move => {
                if !(r.f_next < r.f) {
                    bad.push(format!("k {}: move without decrease", r.k));
                }
                if r.g_norm <= r.nu {
                    bad.push(format!("k {}: moved with |g| <= nu", r.k));
                }
            }
            GsAction::ReduceRadius => {
                if r.g_norm > r.nu {
                    bad.push(format!("k {}: reduced with |g| > nu", r.k));
                }
            }
            _ => {}
        }
    }
    bad
}
