//! Bounded SPD metric and the pair-recording damped BFGS update used by the
//! trust-region solver.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Spectral bounds and Powell damping constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HessianConfig {
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Damping kicks in when `qᵀp < powell_threshold · pᵀHp`.
    pub powell_threshold: f64,
    /// Weight in `θ = powell_damping · pᵀHp / (pᵀHp − qᵀp)`.
    pub powell_damping: f64,
}

impl Default for HessianConfig {
    fn default() -> Self {
        HessianConfig {
            lower_bound: 1e-4,
            upper_bound: 1e4,
            powell_threshold: 0.2,
            powell_damping: 0.8,
        }
    }
}

/// Symmetric positive definite matrix whose spectrum is kept inside
/// `[lower, upper]`, with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    lower: f64,
    upper: f64,
}

impl SpdMatrix {
    pub fn identity(n: usize, lower: f64, upper: f64) -> Self {
        SpdMatrix::new(DMatrix::identity(n, n), lower, upper).0
    }

    /// Symmetrizes `matrix` and clamps its spectrum into `[lower, upper]`.
    /// The flag reports whether clamping changed anything.
    pub fn new(matrix: DMatrix<f64>, lower: f64, upper: f64) -> (Self, bool) {
        assert!(
            lower > 0.0 && lower <= upper,
            "spectral bounds must satisfy 0 < lower <= upper"
        );
        let (matrix, clamped) = enforce_bounds(&matrix, lower, upper);
        let chol = Cholesky::new(matrix.clone())
            .expect("clamped symmetric matrix failed to factor; SPD invariant broken");
        (
            SpdMatrix {
                matrix,
                chol,
                lower,
                upper,
            },
            clamped,
        )
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper
    }

    /// `H⁻¹ rhs` through the cached factor.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn mul(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    /// `vᵀHv`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.matrix * v))
    }

    /// Smallest and largest eigenvalue.
    pub fn spectrum_range(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.matrix.clone()).eigenvalues;
        (eig.min(), eig.max())
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Clamps the eigenvalues of (the symmetric part of) `h` into `[lo, hi]`.
///
/// Returns the input unchanged, with `false`, when the spectrum already lies
/// inside the interval.
pub fn enforce_bounds(h: &DMatrix<f64>, lo: f64, hi: f64) -> (DMatrix<f64>, bool) {
    let sym = symmetrize(h);
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&v| v >= lo && v <= hi) {
        return (sym, false);
    }
    let clamped = eig.eigenvalues.map(|v| v.clamp(lo, hi));
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&clamped) * q.transpose();
    (symmetrize(&out), true)
}

/// What happened during one call to [`bfgs_update_powell`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UpdateReport {
    pub applied: bool,
    pub damped: bool,
    pub clamped: bool,
}

/// Powell's damped secant vector: returns `q` itself when `qᵀp` is large
/// enough, otherwise `θq + (1−θ)Hp` with `q̂ᵀp = powell_threshold · pᵀHp`
/// for the default constants.
pub fn powell_correction(
    h: &SpdMatrix,
    p: &DVector<f64>,
    q: &DVector<f64>,
    cfg: &HessianConfig,
) -> (DVector<f64>, bool) {
    let hp = h.mul(p);
    let php = p.dot(&hp);
    let qp = q.dot(p);
    if qp >= cfg.powell_threshold * php {
        return (q.clone(), false);
    }
    let theta = cfg.powell_damping * php / (php - qp);
    (q * theta + hp * (1.0 - theta), true)
}

/// `H ← H − HppᵀH/pᵀHp + qqᵀ/qᵀp` with Powell damping on `q`, followed by
/// re-symmetrization and spectral clamping. A numerically zero `p` leaves
/// `H` untouched.
pub fn bfgs_update_powell(
    h: &SpdMatrix,
    p: &DVector<f64>,
    q: &DVector<f64>,
    cfg: &HessianConfig,
) -> (SpdMatrix, UpdateReport) {
    let php = h.quad_form(p);
    if p.amax() == 0.0 || !(php > f64::MIN_POSITIVE) {
        log::warn!("skipping BFGS update: step p is numerically zero");
        return (h.clone(), UpdateReport::default());
    }
    let (q, damped) = powell_correction(h, p, q, cfg);
    let qp = q.dot(p);
    if !(qp > 0.0) {
        log::warn!("skipping BFGS update: curvature qᵀp = {qp:e} is not positive");
        return (h.clone(), UpdateReport::default());
    }
    let hp = h.mul(p);
    let next = h.matrix() - &hp * hp.transpose() / php + &q * q.transpose() / qp;
    let (updated, clamped) = SpdMatrix::new(next, h.lower, h.upper);
    if clamped {
        log::debug!("BFGS update clamped into [{:e}, {:e}]", h.lower, h.upper);
    }
    (
        updated,
        UpdateReport {
            applied: true,
            damped,
            clamped,
        },
    )
}

#[derive(Debug, Clone)]
struct RecordedPair {
    x: DVector<f64>,
    v: DVector<f64>,
}

/// Quasi-Newton state: starts at `H = I` and performs one damped BFGS update
/// per newly recorded pair once two pairs are available.
///
/// A pair `(x, Gλ)` is recorded whenever `‖Gλ‖ ≤ √ν`. Recordings made at the
/// iterate already held in the newest slot only refresh its `Gλ`, since the
/// step `p` between them would be zero.
#[derive(Debug, Clone)]
pub struct HUpdateState {
    h: SpdMatrix,
    config: HessianConfig,
    older: Option<RecordedPair>,
    newer: Option<RecordedPair>,
    recorded: usize,
    updates: usize,
    damped: usize,
    clamped: usize,
}

impl HUpdateState {
    pub fn new(n: usize, config: HessianConfig) -> Self {
        HUpdateState {
            h: SpdMatrix::identity(n, config.lower_bound, config.upper_bound),
            config,
            older: None,
            newer: None,
            recorded: 0,
            updates: 0,
            damped: 0,
            clamped: 0,
        }
    }

    pub fn matrix(&self) -> &SpdMatrix {
        &self.h
    }

    pub fn recorded(&self) -> usize {
        self.recorded
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn damped_updates(&self) -> usize {
        self.damped
    }

    pub fn clamped_updates(&self) -> usize {
        self.clamped
    }

    /// Records `(x, Gλ)` if `‖Gλ‖ ≤ √ν` and updates `H` when a previous pair
    /// exists. Returns whether the pair was recorded.
    pub fn maybe_record(&mut self, x: &DVector<f64>, g_lambda: &DVector<f64>, nu: f64) -> bool {
        if g_lambda.norm() > nu.sqrt() {
            return false;
        }
        self.recorded += 1;
        let pair = RecordedPair {
            x: x.clone(),
            v: g_lambda.clone(),
        };
        match &mut self.newer {
            Some(newest) if newest.x == pair.x => {
                newest.v = pair.v;
                return true;
            }
            _ => {}
        }
        self.older = self.newer.replace(pair);
        if let (Some(minus), Some(plus)) = (&self.older, &self.newer) {
            let p = &plus.x - &minus.x;
            let q = &plus.v - &minus.v;
            let (h, report) = bfgs_update_powell(&self.h, &p, &q, &self.config);
            if report.applied {
                self.h = h;
                self.updates += 1;
                self.damped += report.damped as usize;
                self.clamped += report.clamped as usize;
            }
        }
        true
    }
}
