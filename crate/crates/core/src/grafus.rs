//! Gradient-and-function sampling trust-region method.
//!
//! Outer iteration `k` holds the iterate `x_k`, the optimality certificate
//! `ν_k`, the ball exponent `σ_k` and the metric `H_k`. Each inner iteration
//! `l` samples `m` points in `B(x_k, ε_{k,l}^{σ_k})`, builds cutting planes
//! anchored at `x_k`, and solves the trust-region subproblem. Then either
//!
//! * the step `H⁻¹Gλ` is large and the box is finite: compare actual and
//!   predicted reduction, accept the step or shrink `ε` and `Δ` by `θ`;
//! * otherwise, with the box inactive: shrink the certificate and move;
//! * otherwise: drop the box and re-solve with the same planes.
//!
//! Function values along the outer iterates are not monotone: steps taken on
//! a certificate reduction are accepted without looking at `f`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::gs::{run_gs, GsConfig, GsStatus, GsTrace};
use crate::hessian::{HUpdateState, HessianConfig, SpdMatrix};
use crate::oracle::Objective;
use crate::qp::{solve_grafus_qp, QpProblem, QpSolution, QpStatus};
use crate::sampling::{sample_in_differentiable_set, SampleRng, DEFAULT_MAX_RETRIES};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrafusConfig {
    /// Sample count; `None` means `2n`.
    pub m: Option<usize>,
    pub nu0: f64,
    pub nu_opt: f64,
    pub sigma0: f64,
    /// Switch `σ` between 1 and 1.5 on every certificate reduction.
    pub adaptive_sigma: bool,
    pub gamma_eps: f64,
    pub gamma_delta: f64,
    pub theta: f64,
    pub rho: f64,
    /// `δ` in `ν_{k+1} = min{max{‖H⁻¹Gλ‖, ν_k^ϱ}, δν_k}`.
    pub delta_factor: f64,
    /// `ϱ` in the same formula.
    pub varrho: f64,
    /// Entries of `λ` above this count as active; `None` means `10⁻³/(n+1)`.
    pub lambda_count_threshold: Option<f64>,
    pub max_outer: usize,
    pub max_inner: usize,
    pub max_sample_retries: usize,
    /// `None` means `min(10⁻¹⁰, 10⁻³·ν_opt)`.
    pub qp_tol: Option<f64>,
    pub hessian: HessianConfig,
}

impl Default for GrafusConfig {
    fn default() -> Self {
        GrafusConfig {
            m: None,
            nu0: 1e-2,
            nu_opt: 1e-6,
            sigma0: 1.0,
            adaptive_sigma: true,
            gamma_eps: 4.0,
            gamma_delta: 4.0,
            theta: 0.5,
            rho: 1e-8,
            delta_factor: 0.9,
            varrho: 1.5,
            lambda_count_threshold: None,
            max_outer: 500,
            max_inner: 60,
            max_sample_retries: DEFAULT_MAX_RETRIES,
            qp_tol: None,
            hessian: HessianConfig::default(),
        }
    }
}

impl GrafusConfig {
    pub fn sample_count(&self, n: usize) -> usize {
        self.m.unwrap_or(2 * n)
    }

    pub fn count_threshold(&self, n: usize) -> f64 {
        self.lambda_count_threshold
            .unwrap_or(1e-3 / (n as f64 + 1.0))
    }

    pub fn qp_tolerance(&self) -> f64 {
        self.qp_tol
            .unwrap_or_else(|| 1e-10f64.min(1e-3 * self.nu_opt).max(1e-14))
    }

    /// Checks the parameter ranges. `ν₀ < ν_opt` is allowed and makes the run
    /// stop at the first certificate check.
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("GraFuS config: {msg}")));
        if self.sample_count(n) < n + 1 {
            return bad("m must be at least n + 1");
        }
        if !(self.nu0 > 0.0 && self.nu0 < 1.0) {
            return bad("nu0 must lie in (0, 1)");
        }
        if !(self.nu_opt >= 0.0) {
            return bad("nu_opt must be nonnegative");
        }
        if !(1.0..=2.0).contains(&self.sigma0) {
            return bad("sigma0 must lie in [1, 2]");
        }
        for (v, name) in [
            (self.theta, "theta"),
            (self.rho, "rho"),
            (self.delta_factor, "delta_factor"),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(&format!("{name} must lie in (0, 1)"));
            }
        }
        if !(self.varrho > 1.0) {
            return bad("varrho must exceed 1");
        }
        if !(self.gamma_eps > 0.0 && self.gamma_delta > 0.0) {
            return bad("gamma_eps and gamma_delta must be positive");
        }
        let hc = &self.hessian;
        if !(hc.lower_bound > 0.0 && hc.lower_bound <= hc.upper_bound) {
            return bad("need 0 < hessian.lower_bound <= hessian.upper_bound");
        }
        Ok(())
    }
}

/// `min{max{step_norm, ν^ϱ}, δν}`.
pub fn update_certificate(nu: f64, step_norm: f64, varrho: f64, delta_factor: f64) -> f64 {
    step_norm.max(nu.powf(varrho)).min(delta_factor * nu)
}

/// `1` when at least `n + 1` entries of `λ` exceed `threshold`, else `1.5`.
pub fn update_sigma(lambda: &DVector<f64>, n: usize, threshold: f64) -> f64 {
    let active = lambda.iter().filter(|&&l| l > threshold).count();
    if active >= n + 1 {
        1.0
    } else {
        1.5
    }
}

/// Sampled cutting planes anchored at `x_k`.
#[derive(Debug, Clone)]
pub struct CuttingPlanes {
    /// `f(x_j) + ∇f(x_j)ᵀ(x_k − x_j)`.
    pub f_tilde: DVector<f64>,
    /// `n × m`, column `j` is `∇f(x_j)`.
    pub g: DMatrix<f64>,
}

impl CuttingPlanes {
    pub fn build<O: Objective + ?Sized>(oracle: &O, x_k: &DVector<f64>, points: &[DVector<f64>]) -> Self {
        let n = x_k.len();
        let mut g = DMatrix::zeros(n, points.len());
        let mut f_tilde = DVector::zeros(points.len());
        for (j, p) in points.iter().enumerate() {
            let (f, grad) = oracle.value_and_gradient(p);
            f_tilde[j] = f + grad.dot(&(x_k - p));
            g.set_column(j, &grad);
        }
        CuttingPlanes { f_tilde, g }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerOutcome {
    /// `Ared > ρ·Pred`; move to `x_k + d`.
    Accepted,
    /// `Ared ≤ ρ·Pred`; shrink `ε` and `Δ`.
    Rejected,
    /// Small step with an inactive box; reduce `ν` and move to `x_k + d`.
    CertificateReduced,
    /// Small step on the box boundary; re-solve with `Δ = +∞`.
    Unbounded,
}

/// Everything computed by one inner iteration.
#[derive(Debug, Clone)]
pub struct InnerStep {
    pub outcome: InnerOutcome,
    pub planes: CuttingPlanes,
    pub qp: QpSolution,
    pub g_lambda: DVector<f64>,
    /// `‖H⁻¹Gλ‖`.
    pub step_norm: f64,
    /// `‖d + H⁻¹Gλ‖`.
    pub interior_residual: f64,
    /// `f(x_k + d)` when it was evaluated.
    pub f_trial: Option<f64>,
    pub ared: Option<f64>,
    pub pred: Option<f64>,
}

/// Steps 2–5 on a given set of cutting planes: solve the subproblem and
/// classify the result.
#[allow(clippy::too_many_arguments)]
pub fn step_from_planes<O: Objective + ?Sized>(
    oracle: &O,
    x_k: &DVector<f64>,
    f_k: f64,
    nu: f64,
    delta: f64,
    h: &SpdMatrix,
    planes: CuttingPlanes,
    config: &GrafusConfig,
) -> Result<InnerStep> {
    let problem = QpProblem::new(planes.f_tilde.clone(), planes.g.clone(), h.clone(), delta)?;
    let qp = solve_grafus_qp(&problem, config.qp_tolerance());
    if qp.status != QpStatus::Optimal {
        log::warn!(
            "subproblem ended with status {:?} (kkt residual {:e})",
            qp.status,
            qp.kkt_residual
        );
    }
    let g_lambda = &planes.g * &qp.lambda;
    let h_inv = h.solve(&g_lambda);
    let step_norm = h_inv.norm();
    let interior_residual = (&qp.d + &h_inv).norm();

    let mut out = InnerStep {
        outcome: InnerOutcome::CertificateReduced,
        planes,
        qp,
        g_lambda,
        step_norm,
        interior_residual,
        f_trial: None,
        ared: None,
        pred: None,
    };

    if step_norm >= nu && delta.is_finite() {
        let trial = x_k + &out.qp.d;
        let f_trial = oracle.value(&trial);
        let ared = f_k - f_trial;
        let pred = out.planes.f_tilde.max() - (out.qp.z + 0.5 * h.quad_form(&out.qp.d));
        if pred < -1e-12 {
            log::warn!("nonpositive predicted reduction {pred:e}");
        }
        out.outcome = if ared > config.rho * pred {
            InnerOutcome::Accepted
        } else {
            InnerOutcome::Rejected
        };
        out.f_trial = Some(f_trial);
        out.ared = Some(ared);
        out.pred = Some(pred);
    } else if delta.is_finite() && out.qp.d.amax() >= delta * (1.0 - 1e-10) {
        out.outcome = InnerOutcome::Unbounded;
    }
    Ok(out)
}

/// One full inner iteration: sample (unless `reuse` holds planes from the
/// previous solve), build planes, solve and classify.
#[allow(clippy::too_many_arguments)]
pub fn inner_iteration<O: Objective + ?Sized>(
    oracle: &O,
    x_k: &DVector<f64>,
    f_k: f64,
    nu: f64,
    sigma: f64,
    eps: f64,
    delta: f64,
    h: &SpdMatrix,
    config: &GrafusConfig,
    rng: &mut SampleRng,
    reuse: Option<CuttingPlanes>,
) -> Result<InnerStep> {
    let planes = match reuse {
        Some(p) => p,
        None => {
            let radius = (sigma * eps.ln()).exp();
            let m = config.sample_count(x_k.len());
            let s = sample_in_differentiable_set(oracle, x_k, radius, m, rng, config.max_sample_retries)?;
            CuttingPlanes::build(oracle, x_k, &s.points)
        }
    };
    step_from_planes(oracle, x_k, f_k, nu, delta, h, planes, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrafusStatus {
    /// `ν_{k+1} < ν_opt`.
    Converged,
    MaxOuter,
    /// `max_inner` inner iterations without leaving the outer iteration.
    InnerStall,
    /// The sampling ball became too small to avoid the oracle's kink
    /// tolerance.
    SamplingExhausted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InnerRecord {
    pub k: usize,
    pub l: usize,
    /// `f(x_k)`.
    pub f: f64,
    pub nu: f64,
    pub sigma: f64,
    pub eps: f64,
    /// `+∞` on the re-solve without trust region.
    pub delta: f64,
    pub d: Vec<f64>,
    pub z: f64,
    pub lambda: Vec<f64>,
    pub omega: Vec<f64>,
    pub g_lambda_norm: f64,
    pub step_norm: f64,
    pub interior_residual: f64,
    /// NaN when the reduction test was not run.
    pub ared: f64,
    pub pred: f64,
    pub accepted: bool,
    pub outcome: InnerOutcome,
    pub qp_status: QpStatus,
    pub duality_gap: f64,
    pub dist_to_xstar: Option<f64>,
}

impl InnerRecord {
    pub fn delta_infinite(&self) -> bool {
        self.delta.is_infinite()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuterRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub f: f64,
    pub nu: f64,
    pub nu_next: f64,
    pub sigma: f64,
    pub inner_iterations: usize,
    pub reduced: bool,
    pub step_inf_norm: f64,
    /// `‖x_k − x*‖` when the minimizer is known.
    pub dist_to_xstar: Option<f64>,
    /// `‖x_k + d − x*‖`.
    pub dist_next: Option<f64>,
    /// Smallest and largest eigenvalue of `H_k`.
    pub h_spectrum: (f64, f64),
    pub elapsed: f64,
}

impl OuterRecord {
    /// `ν_{k+1}/ν_k`.
    pub fn nu_ratio(&self) -> f64 {
        self.nu_next / self.nu
    }

    /// `‖x_{k+1} − x*‖/‖x_k − x*‖`, using `x_k + d` also on the final
    /// iteration where the move is not taken.
    pub fn xstar_ratio(&self) -> Option<f64> {
        match (self.dist_next, self.dist_to_xstar) {
            (Some(a), Some(b)) => Some(a / b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GrafusTrace {
    pub inner: Vec<InnerRecord>,
    pub outer: Vec<OuterRecord>,
    pub status: GrafusStatus,
    pub final_x: DVector<f64>,
    pub final_f: f64,
    pub final_nu: f64,
    pub evaluations: usize,
    pub h_updates: usize,
    pub h_bounds: (f64, f64),
}

impl GrafusTrace {
    /// `f(x_0), f(x_1), …` including the final iterate.
    pub fn f_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.outer.iter().map(|r| r.f).collect();
        v.push(self.final_f);
        v
    }

    /// Outer records at which the certificate was reduced.
    pub fn reductions(&self) -> impl Iterator<Item = &OuterRecord> {
        self.outer.iter().filter(|r| r.reduced)
    }
}

/// Runs the trust-region method from `x0`. `x0` need not be a point of
/// differentiability.
pub fn run_grafus<O: Objective + ?Sized>(
    oracle: &O,
    config: &GrafusConfig,
    x0: &DVector<f64>,
    rng: &mut SampleRng,
) -> Result<GrafusTrace> {
    let n = oracle.dim();
    config.validate(n)?;
    if x0.len() != n || !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "x0 must be a finite vector of length {n}"
        )));
    }
    let start = Instant::now();
    let xstar = oracle.known_minimizer();
    let dist = |x: &DVector<f64>| xstar.as_ref().map(|s| (x - s).norm());
    let threshold = config.count_threshold(n);
    let m = config.sample_count(n);

    let mut hstate = HUpdateState::new(n, config.hessian);
    let mut x = x0.clone();
    let mut fx = oracle.value(&x);
    let mut evaluations = 1;
    let mut nu = config.nu0;
    let mut sigma = config.sigma0;
    let mut inner_log = Vec::new();
    let mut outer_log = Vec::new();
    let mut status = GrafusStatus::MaxOuter;

    'outer: for k in 0..config.max_outer {
        let h = hstate.matrix().clone();
        let h_spectrum = h.spectrum_range();
        let mut eps = config.gamma_eps * nu;
        let mut delta = config.gamma_delta * nu;
        let mut reuse = None;
        let mut l = 0;

        let (step, nu_next) = loop {
            if l == config.max_inner {
                status = GrafusStatus::InnerStall;
                log::warn!("outer iteration {k}: no acceptable step after {l} inner iterations");
                break 'outer;
            }
            let resample = reuse.is_none();
            let step = match inner_iteration(oracle, &x, fx, nu, sigma, eps, delta, &h, config, rng, reuse.take()) {
                Ok(s) => s,
                Err(e @ Error::SamplingExhausted { .. }) => {
                    log::warn!("outer iteration {k}: {e}");
                    status = GrafusStatus::SamplingExhausted;
                    break 'outer;
                }
                Err(e) => return Err(e),
            };
            if resample {
                evaluations += m;
            }
            if step.f_trial.is_some() {
                evaluations += 1;
            }
            hstate.maybe_record(&x, &step.g_lambda, nu);
            inner_log.push(InnerRecord {
                k,
                l,
                f: fx,
                nu,
                sigma,
                eps,
                delta,
                d: step.qp.d.iter().copied().collect(),
                z: step.qp.z,
                lambda: step.qp.lambda.iter().copied().collect(),
                omega: step.qp.omega.iter().copied().collect(),
                g_lambda_norm: step.g_lambda.norm(),
                step_norm: step.step_norm,
                interior_residual: step.interior_residual,
                ared: step.ared.unwrap_or(f64::NAN),
                pred: step.pred.unwrap_or(f64::NAN),
                accepted: step.outcome == InnerOutcome::Accepted,
                outcome: step.outcome,
                qp_status: step.qp.status,
                duality_gap: step.qp.duality_gap,
                dist_to_xstar: dist(&x),
            });
            l += 1;
            match step.outcome {
                InnerOutcome::Accepted => break (step, nu),
                InnerOutcome::CertificateReduced => {
                    let next = update_certificate(nu, step.step_norm, config.varrho, config.delta_factor);
                    break (step, next);
                }
                InnerOutcome::Rejected => {
                    delta *= config.theta;
                    eps *= config.theta;
                }
                InnerOutcome::Unbounded => {
                    delta = f64::INFINITY;
                    reuse = Some(step.planes.clone());
                }
            }
        };

        let reduced = step.outcome == InnerOutcome::CertificateReduced;
        let sigma_next = if reduced && config.adaptive_sigma {
            update_sigma(&step.qp.lambda, n, threshold)
        } else {
            sigma
        };
        let candidate = &x + &step.qp.d;
        outer_log.push(OuterRecord {
            k,
            x: x.iter().copied().collect(),
            f: fx,
            nu,
            nu_next,
            sigma,
            inner_iterations: l,
            reduced,
            step_inf_norm: step.qp.d.amax(),
            dist_to_xstar: dist(&x),
            dist_next: dist(&candidate),
            h_spectrum,
            elapsed: start.elapsed().as_secs_f64(),
        });

        nu = nu_next;
        sigma = sigma_next;
        if nu < config.nu_opt {
            status = GrafusStatus::Converged;
            break;
        }
        fx = match step.f_trial {
            Some(f) => f,
            None => {
                evaluations += 1;
                oracle.value(&candidate)
            }
        };
        x = candidate;
    }

    let (lo, hi) = hstate.matrix().spectrum_range();
    Ok(GrafusTrace {
        inner: inner_log,
        outer: outer_log,
        status,
        final_x: x,
        final_f: fx,
        final_nu: nu,
        evaluations,
        h_updates: hstate.updates(),
        h_bounds: (lo, hi),
    })
}

/// Gradient sampling followed by the trust-region method.
#[derive(Debug, Clone)]
pub struct HybridTrace {
    pub gs: Option<GsTrace>,
    pub grafus: Option<GrafusTrace>,
    /// Number of GS iterations run before switching; `None` when the
    /// trust-region phase was skipped.
    pub switch_index: Option<usize>,
    pub note: Option<String>,
}

impl HybridTrace {
    /// Objective values over the combined iteration axis.
    pub fn f_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        match (&self.gs, &self.grafus) {
            (Some(gs), Some(gf)) => {
                out.extend(gs.records.iter().map(|r| r.f));
                out.extend(gf.f_values());
            }
            (Some(gs), None) => out.extend(gs.f_values()),
            (None, Some(gf)) => out.extend(gf.f_values()),
            (None, None) => {}
        }
        out
    }

    pub fn final_f(&self) -> f64 {
        match (&self.grafus, &self.gs) {
            (Some(gf), _) => gf.final_f,
            (None, Some(gs)) => gs.final_f,
            (None, None) => f64::NAN,
        }
    }
}

/// Runs GS until `ε_k` drops below the handover threshold (`10⁻²` unless
/// `gs_config.handover_threshold` says otherwise), then the trust-region
/// method from the GS iterate.
pub fn run_hybrid<O: Objective + ?Sized>(
    oracle: &O,
    gs_config: &GsConfig,
    grafus_config: &GrafusConfig,
    x0: &DVector<f64>,
    rng: &mut SampleRng,
) -> Result<HybridTrace> {
    let threshold = gs_config.handover_threshold.unwrap_or(1e-2);
    if threshold >= gs_config.eps0 {
        let gf = run_grafus(oracle, grafus_config, x0, rng)?;
        return Ok(HybridTrace {
            gs: None,
            grafus: Some(gf),
            switch_index: Some(0),
            note: Some("handover threshold at or above eps0; GS skipped".into()),
        });
    }
    let cfg = GsConfig {
        handover_threshold: Some(threshold),
        ..gs_config.clone()
    };
    let gs = run_gs(oracle, &cfg, x0, rng)?;
    if gs.status == GsStatus::Converged {
        return Ok(HybridTrace {
            gs: Some(gs),
            grafus: None,
            switch_index: None,
            note: Some("GS terminated before handover; trust-region phase skipped".into()),
        });
    }
    let note = match gs.status {
        GsStatus::Handover => None,
        other => Some(format!("GS ended with {other:?} before handover")),
    };
    let gf = run_grafus(oracle, grafus_config, &gs.final_x, rng)?;
    Ok(HybridTrace {
        switch_index: Some(gs.records.len()),
        gs: Some(gs),
        grafus: Some(gf),
        note,
    })
}
