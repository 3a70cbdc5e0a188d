//! Nonnormalized gradient sampling.
//!
//! Every iteration samples `m` gradients in `B(x_k, ε_k)`, adds `∇f(x_k)`,
//! and takes `g_k`, the minimum-norm element of their convex hull. If `g_k`
//! is small the sampling radius shrinks; otherwise the method backtracks
//! along `d_k = −g_k` and, if the new point lands on a kink, perturbs it back
//! into the differentiable set.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::oracle::Objective;
use crate::qp::solve_gs_qp;
use crate::sampling::{sample_in_differentiable_set, SampleRng, DEFAULT_MAX_RETRIES};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsConfig {
    /// Sample count; `None` means `2n`.
    pub m: Option<usize>,
    pub nu0: f64,
    pub nu_opt: f64,
    pub eps0: f64,
    pub eps_opt: f64,
    pub theta_nu: f64,
    pub theta_eps: f64,
    pub gamma: f64,
    pub beta: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    pub max_perturbations: usize,
    pub max_sample_retries: usize,
    /// Return early once `ε_k` drops below this value.
    pub handover_threshold: Option<f64>,
    pub qp_tol: f64,
}

impl Default for GsConfig {
    fn default() -> Self {
        GsConfig {
            m: None,
            nu0: 1e-6,
            nu_opt: 1e-6,
            eps0: 1e-1,
            eps_opt: 1e-6,
            theta_nu: 1.0,
            theta_eps: 1e-1,
            gamma: 0.5,
            beta: 0.0,
            max_iter: 10_000,
            max_backtracks: 50,
            max_perturbations: 100,
            max_sample_retries: DEFAULT_MAX_RETRIES,
            handover_threshold: None,
            qp_tol: 1e-12,
        }
    }
}

impl GsConfig {
    pub fn sample_count(&self, n: usize) -> usize {
        self.m.unwrap_or(2 * n)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("GS config: {msg}")));
        if self.sample_count(n) < n + 1 {
            return bad("m must be at least n + 1");
        }
        if !(self.nu_opt >= 0.0 && self.nu_opt <= self.nu0) {
            return bad("need 0 <= nu_opt <= nu0");
        }
        if !(self.eps_opt >= 0.0 && self.eps_opt < self.eps0) {
            return bad("need 0 <= eps_opt < eps0");
        }
        if !(self.theta_nu > 0.0 && self.theta_nu <= 1.0) {
            return bad("theta_nu must lie in (0, 1]");
        }
        if !(self.theta_eps > 0.0 && self.theta_eps < 1.0) {
            return bad("theta_eps must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.beta >= 0.0 && self.beta < 1.0) {
            return bad("beta must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GsStatus {
    /// `‖g_k‖ ≤ ν_opt` and `ε_k ≤ ε_opt`.
    Converged,
    /// The line search or the perturbation step ran out of tries.
    Stalled,
    MaxIter,
    /// `ε_k` dropped below the handover threshold.
    Handover,
}

/// What the iteration did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GsAction {
    Terminate,
    ReduceRadius,
    Move,
    Stalled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GsRecord {
    pub k: usize,
    /// `f(x_k)`.
    pub f: f64,
    pub g_norm: f64,
    pub eps: f64,
    pub nu: f64,
    /// Accepted step size, `0` unless the iterate moved.
    pub t: f64,
    pub action: GsAction,
    pub perturbed: bool,
    /// `f(x_{k+1})`.
    pub f_next: f64,
    /// `‖x_k − x*‖` when the minimizer is known.
    pub dist_to_xstar: Option<f64>,
    pub elapsed: f64,
}

#[derive(Debug, Clone)]
pub struct GsTrace {
    pub records: Vec<GsRecord>,
    pub status: GsStatus,
    pub final_x: DVector<f64>,
    pub final_f: f64,
    pub final_eps: f64,
    pub final_nu: f64,
    pub evaluations: usize,
}

impl GsTrace {
    /// `f(x_0), f(x_1), …` including the final iterate.
    pub fn f_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.records.iter().map(|r| r.f).collect();
        v.push(self.final_f);
        v
    }
}

/// Outcome of [`gs_step`].
#[derive(Debug, Clone)]
pub enum GsStep {
    Terminate {
        g_norm: f64,
    },
    ReduceRadius {
        g_norm: f64,
    },
    Move {
        x: DVector<f64>,
        f: f64,
        t: f64,
        g_norm: f64,
        perturbed: bool,
    },
    Stalled {
        g_norm: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchStep {
    pub t: f64,
    pub f: f64,
}

/// Largest `t ∈ {1, γ, γ², …, γ^max_backtracks}` with
/// `f(x + td) < f(x) − β t ‖d‖²`, or `None` when every trial fails.
pub fn backtracking_search<O: Objective + ?Sized>(
    oracle: &O,
    x: &DVector<f64>,
    fx: f64,
    d: &DVector<f64>,
    beta: f64,
    gamma: f64,
    max_backtracks: usize,
) -> Option<LineSearchStep> {
    let dd = d.norm_squared();
    let mut t = 1.0;
    for _ in 0..=max_backtracks {
        let f = oracle.value(&(x + d * t));
        if f < fx - beta * t * dd {
            return Some(LineSearchStep { t, f });
        }
        t *= gamma;
    }
    None
}

/// Moves `x + t d` back into the differentiable set when it landed on a
/// kink, keeping the sufficient-decrease inequality. Returns the new point,
/// its value, and whether it had to be perturbed.
#[allow(clippy::too_many_arguments)]
pub fn perturb_step<O: Objective + ?Sized>(
    oracle: &O,
    x: &DVector<f64>,
    fx: f64,
    step: LineSearchStep,
    d: &DVector<f64>,
    eps: f64,
    beta: f64,
    rng: &mut SampleRng,
    max_tries: usize,
) -> Option<(DVector<f64>, f64, bool)> {
    let landing = x + d * step.t;
    if oracle.is_differentiable(&landing) {
        return Some((landing, step.f, false));
    }
    let bound = fx - beta * step.t * d.norm_squared();
    let radius = step.t.min(eps) * d.norm();
    for _ in 0..max_tries {
        let p = rng.point_in_ball(&landing, radius);
        if !oracle.is_differentiable(&p) {
            continue;
        }
        let f = oracle.value(&p);
        if f < bound {
            log::debug!("{}: perturbed GS iterate off a kink", oracle.name());
            return Some((p, f, true));
        }
    }
    None
}

/// One gradient sampling iteration at `(x_k, ε_k, ν_k)`.
#[allow(clippy::too_many_arguments)]
pub fn gs_step<O: Objective + ?Sized>(
    oracle: &O,
    x: &DVector<f64>,
    fx: f64,
    grad_x: &DVector<f64>,
    eps: f64,
    nu: f64,
    config: &GsConfig,
    rng: &mut SampleRng,
) -> Result<(GsStep, usize)> {
    let n = x.len();
    let m = config.sample_count(n);
    let sample =
        sample_in_differentiable_set(oracle, x, eps, m, rng, config.max_sample_retries)?;
    let mut g = DMatrix::zeros(n, m + 1);
    g.set_column(0, grad_x);
    for (j, p) in sample.points.iter().enumerate() {
        g.set_column(j + 1, &oracle.gradient(p));
    }
    let mut evals = m;
    let qp = solve_gs_qp(&g, config.qp_tol);
    let g_norm = qp.g.norm();

    if g_norm <= config.nu_opt && eps <= config.eps_opt {
        return Ok((GsStep::Terminate { g_norm }, evals));
    }
    if g_norm <= nu {
        return Ok((GsStep::ReduceRadius { g_norm }, evals));
    }
    let d = -&qp.g;
    let Some(step) = backtracking_search(oracle, x, fx, &d, config.beta, config.gamma, config.max_backtracks)
    else {
        return Ok((GsStep::Stalled { g_norm }, evals + config.max_backtracks + 1));
    };
    evals += 1;
    match perturb_step(oracle, x, fx, step, &d, eps, config.beta, rng, config.max_perturbations) {
        Some((x_next, f, perturbed)) => Ok((
            GsStep::Move {
                x: x_next,
                f,
                t: step.t,
                g_norm,
                perturbed,
            },
            evals,
        )),
        None => Ok((GsStep::Stalled { g_norm }, evals)),
    }
}

/// Nudges `x0` into the differentiable set if it sits on a kink.
fn differentiable_start<O: Objective + ?Sized>(
    oracle: &O,
    x0: &DVector<f64>,
    rng: &mut SampleRng,
    max_retries: usize,
) -> Result<DVector<f64>> {
    if oracle.is_differentiable(x0) {
        return Ok(x0.clone());
    }
    let radius = 1e-8 * (1.0 + x0.amax());
    let s = sample_in_differentiable_set(oracle, x0, radius, 1, rng, max_retries)?;
    Ok(s.points.into_iter().next().expect("one point"))
}

/// Runs gradient sampling from `x0`.
pub fn run_gs<O: Objective + ?Sized>(
    oracle: &O,
    config: &GsConfig,
    x0: &DVector<f64>,
    rng: &mut SampleRng,
) -> Result<GsTrace> {
    config.validate(oracle.dim())?;
    if x0.len() != oracle.dim() {
        return Err(Error::InvalidArgument(format!(
            "x0 has {} entries, oracle expects {}",
            x0.len(),
            oracle.dim()
        )));
    }
    let start = Instant::now();
    let mut x = differentiable_start(oracle, x0, rng, config.max_sample_retries)?;
    let (mut fx, mut grad) = oracle.value_and_gradient(&x);
    let mut evaluations = 1;
    let mut eps = config.eps0;
    let mut nu = config.nu0;
    let mut records = Vec::new();
    let mut status = GsStatus::MaxIter;

    let xstar = oracle.known_minimizer();
    for k in 0..config.max_iter {
        if config.handover_threshold.is_some_and(|h| eps < h) {
            status = GsStatus::Handover;
            break;
        }
        let (step, evals) = gs_step(oracle, &x, fx, &grad, eps, nu, config, rng)?;
        evaluations += evals;
        let mut rec = GsRecord {
            k,
            f: fx,
            g_norm: 0.0,
            eps,
            nu,
            t: 0.0,
            action: GsAction::Move,
            perturbed: false,
            f_next: fx,
            dist_to_xstar: xstar.as_ref().map(|s| (&x - s).norm()),
            elapsed: 0.0,
        };
        let mut done = false;
        match step {
            GsStep::Terminate { g_norm } => {
                rec.g_norm = g_norm;
                rec.action = GsAction::Terminate;
                status = GsStatus::Converged;
                done = true;
            }
            GsStep::ReduceRadius { g_norm } => {
                rec.g_norm = g_norm;
                rec.action = GsAction::ReduceRadius;
                eps *= config.theta_eps;
                nu *= config.theta_nu;
            }
            GsStep::Stalled { g_norm } => {
                rec.g_norm = g_norm;
                rec.action = GsAction::Stalled;
                status = GsStatus::Stalled;
                done = true;
            }
            GsStep::Move {
                x: x_next,
                f,
                t,
                g_norm,
                perturbed,
            } => {
                rec.g_norm = g_norm;
                rec.t = t;
                rec.perturbed = perturbed;
                rec.f_next = f;
                x = x_next;
                fx = f;
                grad = oracle.gradient(&x);
                evaluations += 1;
            }
        }
        rec.elapsed = start.elapsed().as_secs_f64();
        records.push(rec);
        if done {
            break;
        }
    }

    Ok(GsTrace {
        records,
        status,
        final_x: x,
        final_f: fx,
        final_eps: eps,
        final_nu: nu,
        evaluations,
    })
}
