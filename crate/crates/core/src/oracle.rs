//! Objective interface and the benchmark functions.
//!
//! Solvers only ever see `f` and `∇f` through [`Objective`]. The max-type
//! structure of the benchmark functions is exposed separately through
//! [`TestFunction::branch_values`] so tests can inspect which pieces are
//! active, but nothing in the solvers depends on it.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default relative tolerance used to decide that two max-branches tie.
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-12;

/// A locally Lipschitz objective that is continuously differentiable on an
/// open dense set of full measure.
///
/// Implementations must be deterministic and free of interior mutability so
/// that replicated runs can share one oracle across threads.
pub trait Objective: Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> f64;

    /// Gradient at `x`. Only meaningful where [`Objective::is_differentiable`]
    /// holds; elsewhere it returns the gradient of one active piece.
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.value(x), self.gradient(x))
    }

    fn is_differentiable(&self, _x: &DVector<f64>) -> bool {
        true
    }

    fn known_minimizer(&self) -> Option<DVector<f64>> {
        None
    }

    fn known_optimum(&self) -> Option<f64> {
        None
    }
}

/// The compiled-in benchmark functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunctionKind {
    /// Chained CB3 I.
    F1,
    /// Chained CB3 II.
    F2,
    /// Nonsmooth generalization of Brown function 2.
    F3,
    /// Chained crescent I.
    F4,
    /// `|x| = max{x, -x}` in one dimension.
    Abs,
    /// Smooth sanity function `½‖x‖²`.
    Quad,
}

impl TestFunctionKind {
    pub fn label(self) -> &'static str {
        match self {
            TestFunctionKind::F1 => "F1",
            TestFunctionKind::F2 => "F2",
            TestFunctionKind::F3 => "F3",
            TestFunctionKind::F4 => "F4",
            TestFunctionKind::Abs => "ABS",
            TestFunctionKind::Quad => "QUAD",
        }
    }
}

impl fmt::Display for TestFunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TestFunctionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "F1" => Ok(TestFunctionKind::F1),
            "F2" => Ok(TestFunctionKind::F2),
            "F3" => Ok(TestFunctionKind::F3),
            "F4" => Ok(TestFunctionKind::F4),
            "ABS" => Ok(TestFunctionKind::Abs),
            "QUAD" => Ok(TestFunctionKind::Quad),
            _ => Err(Error::UnknownFunction(s.to_string())),
        }
    }
}

/// One of the benchmark functions at a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    kind: TestFunctionKind,
    dim: usize,
    tie_tolerance: f64,
}

/// Builds a benchmark oracle by name (`F1`..`F4`, `ABS`, `QUAD`, case
/// insensitive).
pub fn make_test_function(name: &str, n: usize) -> Result<TestFunction> {
    let kind: TestFunctionKind = name.parse()?;
    TestFunction::new(kind, n)
}

impl TestFunction {
    pub fn new(kind: TestFunctionKind, dim: usize) -> Result<Self> {
        let (ok, expected) = match kind {
            TestFunctionKind::F1
            | TestFunctionKind::F2
            | TestFunctionKind::F3
            | TestFunctionKind::F4 => (dim >= 2, "n >= 2"),
            TestFunctionKind::Abs => (dim == 1, "n = 1"),
            TestFunctionKind::Quad => (dim >= 1, "n >= 1"),
        };
        if !ok {
            return Err(Error::DimensionOutOfRange {
                function: kind.label().to_string(),
                dim,
                expected,
            });
        }
        Ok(TestFunction {
            kind,
            dim,
            tie_tolerance: DEFAULT_TIE_TOLERANCE,
        })
    }

    pub fn with_tie_tolerance(mut self, tol: f64) -> Self {
        self.tie_tolerance = tol.max(0.0);
        self
    }

    pub fn kind(&self) -> TestFunctionKind {
        self.kind
    }

    pub fn tie_tolerance(&self) -> f64 {
        self.tie_tolerance
    }

    /// Values of the smooth pieces entering each max.
    ///
    /// F1 returns three values per chained term (term-major), F2 three,
    /// F4 two, ABS two and QUAD one. F3 has no max structure and returns an
    /// empty vector.
    pub fn branch_values(&self, x: &DVector<f64>) -> Vec<f64> {
        match self.kind {
            TestFunctionKind::F1 => (0..self.dim - 1)
                .flat_map(|i| cb3_pieces(x[i], x[i + 1]))
                .collect(),
            TestFunctionKind::F2 => {
                let mut sums = [0.0; 3];
                for i in 0..self.dim - 1 {
                    let p = cb3_pieces(x[i], x[i + 1]);
                    for (s, v) in sums.iter_mut().zip(p) {
                        *s += v;
                    }
                }
                sums.to_vec()
            }
            TestFunctionKind::F4 => {
                let mut sums = [0.0; 2];
                for i in 0..self.dim - 1 {
                    let p = crescent_pieces(x[i], x[i + 1]);
                    sums[0] += p[0];
                    sums[1] += p[1];
                }
                sums.to_vec()
            }
            TestFunctionKind::Abs => vec![x[0], -x[0]],
            TestFunctionKind::Quad => vec![0.5 * x.norm_squared()],
            TestFunctionKind::F3 => Vec::new(),
        }
    }

    fn tie_threshold(&self, fx: f64) -> f64 {
        self.tie_tolerance * (fx.abs() + 1.0)
    }
}

fn cb3_pieces(a: f64, b: f64) -> [f64; 3] {
    [
        a.powi(4) + b * b,
        (2.0 - a).powi(2) + (2.0 - b).powi(2),
        2.0 * (b - a).exp(),
    ]
}

fn cb3_piece_grad(piece: usize, a: f64, b: f64) -> [f64; 2] {
    match piece {
        0 => [4.0 * a.powi(3), 2.0 * b],
        1 => [-2.0 * (2.0 - a), -2.0 * (2.0 - b)],
        _ => {
            let e = 2.0 * (b - a).exp();
            [-e, e]
        }
    }
}

fn crescent_pieces(a: f64, b: f64) -> [f64; 2] {
    let c = (b - 1.0).powi(2);
    [a * a + c + b - 1.0, -a * a - c + b + 1.0]
}

fn crescent_piece_grad(piece: usize, a: f64, b: f64) -> [f64; 2] {
    match piece {
        0 => [2.0 * a, 2.0 * (b - 1.0) + 1.0],
        _ => [-2.0 * a, -2.0 * (b - 1.0) + 1.0],
    }
}

/// Index of the largest entry; the first one wins ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// True when the two largest entries are within `tol` of each other.
fn top_two_tie(values: &[f64], tol: f64) -> bool {
    let top = values[argmax(values)];
    values.iter().filter(|&&v| top - v <= tol).count() >= 2
}

// |a|^(b²+1) and its partial derivatives. The logarithmic term is dropped when
// |a| underflows since the product tends to zero.
fn brown_term(a: f64, b: f64) -> (f64, f64, f64) {
    let abs_a = a.abs();
    let expo = b * b + 1.0;
    let value = abs_a.powf(expo);
    let d_a = a.signum() * expo * abs_a.powf(b * b);
    let d_a = if a == 0.0 { 0.0 } else { d_a };
    let d_b = if abs_a < 1e-300 {
        0.0
    } else {
        2.0 * b * value * abs_a.ln()
    };
    (value, d_a, d_b)
}

impl Objective for TestFunction {
    fn name(&self) -> &str {
        self.kind.label()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match self.kind {
            TestFunctionKind::F1 => (0..self.dim - 1)
                .map(|i| {
                    let p = cb3_pieces(x[i], x[i + 1]);
                    p[argmax(&p)]
                })
                .sum(),
            TestFunctionKind::F3 => (0..self.dim - 1)
                .map(|i| brown_term(x[i], x[i + 1]).0 + brown_term(x[i + 1], x[i]).0)
                .sum(),
            _ => {
                let b = self.branch_values(x);
                b[argmax(&b)]
            }
        }
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.dim);
        let n = self.dim;
        let mut g = DVector::zeros(n);
        match self.kind {
            TestFunctionKind::F1 => {
                for i in 0..n - 1 {
                    let p = cb3_pieces(x[i], x[i + 1]);
                    let [ga, gb] = cb3_piece_grad(argmax(&p), x[i], x[i + 1]);
                    g[i] += ga;
                    g[i + 1] += gb;
                }
            }
            TestFunctionKind::F2 => {
                let piece = argmax(&self.branch_values(x));
                for i in 0..n - 1 {
                    let [ga, gb] = cb3_piece_grad(piece, x[i], x[i + 1]);
                    g[i] += ga;
                    g[i + 1] += gb;
                }
            }
            TestFunctionKind::F3 => {
                for i in 0..n - 1 {
                    let (_, da, db) = brown_term(x[i], x[i + 1]);
                    g[i] += da;
                    g[i + 1] += db;
                    let (_, db2, da2) = brown_term(x[i + 1], x[i]);
                    g[i + 1] += db2;
                    g[i] += da2;
                }
            }
            TestFunctionKind::F4 => {
                let piece = argmax(&self.branch_values(x));
                for i in 0..n - 1 {
                    let [ga, gb] = crescent_piece_grad(piece, x[i], x[i + 1]);
                    g[i] += ga;
                    g[i + 1] += gb;
                }
            }
            TestFunctionKind::Abs => {
                g[0] = if x[0] >= 0.0 { 1.0 } else { -1.0 };
            }
            TestFunctionKind::Quad => g.copy_from(x),
        }
        g
    }

    fn is_differentiable(&self, x: &DVector<f64>) -> bool {
        let fx = self.value(x);
        let tol = self.tie_threshold(fx);
        match self.kind {
            TestFunctionKind::Quad => true,
            TestFunctionKind::F3 => x.iter().all(|v| v.abs() > tol),
            TestFunctionKind::F1 => (0..self.dim - 1)
                .all(|i| !top_two_tie(&cb3_pieces(x[i], x[i + 1]), tol)),
            _ => !top_two_tie(&self.branch_values(x), tol),
        }
    }

    fn known_minimizer(&self) -> Option<DVector<f64>> {
        match self.kind {
            TestFunctionKind::F1 | TestFunctionKind::F2 => {
                Some(DVector::from_element(self.dim, 1.0))
            }
            _ => Some(DVector::zeros(self.dim)),
        }
    }

    fn known_optimum(&self) -> Option<f64> {
        match self.kind {
            TestFunctionKind::F1 | TestFunctionKind::F2 => Some(2.0 * (self.dim - 1) as f64),
            _ => Some(0.0),
        }
    }
}

/// Maximum absolute deviation between the analytic gradient and central
/// differences with step `h`.
///
/// Rejected with [`Error::NotDifferentiable`] at points outside the
/// differentiable set.
pub fn finite_difference_check<O: Objective + ?Sized>(
    oracle: &O,
    x: &DVector<f64>,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    if !oracle.is_differentiable(x) {
        return Err(Error::NotDifferentiable(oracle.name().to_string()));
    }
    let g = oracle.gradient(x);
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = oracle.value(&probe);
        probe[i] = x[i] - h;
        let fm = oracle.value(&probe);
        probe[i] = x[i];
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(n: usize) -> DVector<f64> {
        DVector::from_element(n, 1.0)
    }

    #[test]
    fn f1_at_ones_is_eight() {
        let f = make_test_function("F1", 5).unwrap();
        // every piece of every chained term equals 2 at e
        for v in f.branch_values(&e(5)) {
            assert_eq!(v, 2.0);
        }
        assert_eq!(f.value(&e(5)), 8.0);
        assert!(!f.is_differentiable(&e(5)));
    }

    #[test]
    fn f3_and_f4_vanish_at_origin() {
        let f3 = make_test_function("F3", 5).unwrap();
        assert_eq!(f3.value(&DVector::zeros(5)), 0.0);
        let f4 = make_test_function("f4", 10).unwrap();
        assert_eq!(f4.value(&DVector::zeros(10)), 0.0);
    }

    #[test]
    fn abs_gradient_and_kink() {
        let f = make_test_function("ABS", 1).unwrap();
        assert_eq!(f.gradient(&DVector::from_element(1, 0.5))[0], 1.0);
        assert_eq!(f.gradient(&DVector::from_element(1, -0.3))[0], -1.0);
        assert!(!f.is_differentiable(&DVector::from_element(1, 0.0)));
        assert!(f.is_differentiable(&DVector::from_element(1, 0.5)));
    }

    #[test]
    fn abs_flag_flips_across_tolerance() {
        let f = make_test_function("ABS", 1).unwrap();
        let tol = f.tie_tolerance();
        assert!(!f.is_differentiable(&DVector::from_element(1, 0.25 * tol)));
        assert!(f.is_differentiable(&DVector::from_element(1, 10.0 * tol)));
        assert!(f.is_differentiable(&DVector::from_element(1, -10.0 * tol)));
    }

    #[test]
    fn rejects_bad_names_and_dims() {
        assert!(matches!(
            make_test_function("F9", 5),
            Err(Error::UnknownFunction(_))
        ));
        assert!(matches!(
            make_test_function("F1", 1),
            Err(Error::DimensionOutOfRange { .. })
        ));
        assert!(matches!(
            make_test_function("ABS", 2),
            Err(Error::DimensionOutOfRange { .. })
        ));
    }

    #[test]
    fn known_minimizers_match_optima() {
        for (name, n) in [("F1", 5), ("F2", 5), ("F3", 5), ("F4", 10), ("ABS", 1), ("QUAD", 3)] {
            let f = make_test_function(name, n).unwrap();
            let xs = f.known_minimizer().unwrap();
            let fs = f.known_optimum().unwrap();
            assert!((f.value(&xs) - fs).abs() <= 1e-12, "{name}");
        }
    }

    #[test]
    fn quad_finite_differences_are_exact() {
        let f = make_test_function("QUAD", 4).unwrap();
        let x = DVector::from_vec(vec![0.3, -1.2, 2.0, 0.7]);
        assert!(finite_difference_check(&f, &x, 1e-6).unwrap() <= 1e-9);
    }

    #[test]
    fn f2_finite_differences_off_kink() {
        let f = make_test_function("F2", 5).unwrap();
        let x = e(5) * 1.3;
        assert!(f.is_differentiable(&x));
        assert!(finite_difference_check(&f, &x, 1e-6).unwrap() <= 1e-5);
    }

    #[test]
    fn f3_zero_coordinate_is_rejected() {
        let f = make_test_function("F3", 4).unwrap();
        let x = DVector::from_vec(vec![0.5, 0.0, -0.2, 1.1]);
        assert!(matches!(
            finite_difference_check(&f, &x, 1e-6),
            Err(Error::NotDifferentiable(_))
        ));
    }

    #[test]
    fn f3_gradient_is_finite_near_zero() {
        let f = make_test_function("F3", 3).unwrap();
        let x = DVector::from_vec(vec![1e-305, 0.4, -0.7]);
        assert!(f.gradient(&x).iter().all(|g| g.is_finite()));
    }
}
