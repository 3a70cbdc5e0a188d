//! Seeded uniform sampling in closed Euclidean balls.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::oracle::Objective;
use crate::{Error, Result};

/// Retry cap used when resampling points that land on a kink.
pub const DEFAULT_MAX_RETRIES: usize = 100;

/// Random stream owned by a single solver run.
///
/// Backed by ChaCha8 so that a seed reproduces the same sample sequence on
/// every platform.
#[derive(Debug, Clone)]
pub struct SampleRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SampleRng {
    pub fn new(seed: u64) -> Self {
        SampleRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// One point drawn uniformly from the closed ball `B(center, radius)`.
    pub fn point_in_ball(&mut self, center: &DVector<f64>, radius: f64) -> DVector<f64> {
        let n = center.len();
        if radius == 0.0 || n == 0 {
            return center.clone();
        }
        let mut dir = DVector::from_fn(n, |_, _| self.normal());
        let mut norm = dir.norm();
        while norm == 0.0 {
            dir = DVector::from_fn(n, |_, _| self.normal());
            norm = dir.norm();
        }
        let r = radius * self.uniform().powf(1.0 / n as f64);
        let mut p = center + dir * (r / norm);
        // rounding in the addition can leave the ball by an ulp
        let off = (&p - center).norm();
        if off > radius {
            p = center + (&p - center) * (radius / off);
        }
        p
    }
}

/// `m` independent uniform points in the closed ball `B(center, radius)`.
pub fn sample_ball(
    center: &DVector<f64>,
    radius: f64,
    m: usize,
    rng: &mut SampleRng,
) -> Vec<DVector<f64>> {
    (0..m).map(|_| rng.point_in_ball(center, radius)).collect()
}

/// Outcome of [`sample_in_differentiable_set`].
#[derive(Debug, Clone)]
pub struct DifferentiableSample {
    pub points: Vec<DVector<f64>>,
    /// Number of points that had to be redrawn because they hit a kink.
    pub retries: usize,
}

/// Like [`sample_ball`], but every point that lands outside the
/// differentiable set of `oracle` is redrawn, up to `max_retries` redraws in
/// total.
pub fn sample_in_differentiable_set<O: Objective + ?Sized>(
    oracle: &O,
    center: &DVector<f64>,
    radius: f64,
    m: usize,
    rng: &mut SampleRng,
    max_retries: usize,
) -> Result<DifferentiableSample> {
    let mut points = Vec::with_capacity(m);
    let mut retries = 0;
    while points.len() < m {
        let p = rng.point_in_ball(center, radius);
        if oracle.is_differentiable(&p) {
            points.push(p);
        } else {
            if retries == max_retries {
                return Err(Error::SamplingExhausted { retries, radius });
            }
            retries += 1;
        }
    }
    if retries > 0 {
        log::debug!("{}: resampled {retries} point(s) on a kink", oracle.name());
    }
    Ok(DifferentiableSample { points, retries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::make_test_function;

    #[test]
    fn zero_radius_returns_center() {
        let c = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let mut rng = SampleRng::new(3);
        for p in sample_ball(&c, 0.0, 5, &mut rng) {
            assert_eq!(p, c);
        }
    }

    #[test]
    fn points_stay_in_ball() {
        let c = DVector::from_vec(vec![0.3, 0.1]);
        let mut rng = SampleRng::new(11);
        for p in sample_ball(&c, 0.25, 1000, &mut rng) {
            assert!((&p - &c).norm() <= 0.25);
        }
    }

    #[test]
    fn one_dimensional_cdf() {
        // uniform on [-1, 1]: P(0 <= p <= 0.5) = 0.25
        let c = DVector::zeros(1);
        let mut rng = SampleRng::new(2024);
        let n = 100_000;
        let hits = sample_ball(&c, 1.0, n, &mut rng)
            .iter()
            .filter(|p| (0.0..=0.5).contains(&p[0]))
            .count();
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.25).abs() <= 0.01, "{frac}");
    }

    #[test]
    fn same_seed_same_stream() {
        let c = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let a = sample_ball(&c, 0.5, 20, &mut SampleRng::new(9));
        let b = sample_ball(&c, 0.5, 20, &mut SampleRng::new(9));
        assert_eq!(a, b);
    }

    #[test]
    fn differentiable_samples_near_ones() {
        let f = make_test_function("F1", 5).unwrap();
        let c = DVector::from_element(5, 1.0);
        let mut rng = SampleRng::new(1);
        let s = sample_in_differentiable_set(&f, &c, 0.1, 10, &mut rng, DEFAULT_MAX_RETRIES)
            .unwrap();
        assert_eq!(s.points.len(), 10);
        assert!(s.points.iter().all(|p| f.is_differentiable(p)));
    }

    #[test]
    fn abs_samples_off_the_kink() {
        let f = make_test_function("ABS", 1).unwrap();
        let c = DVector::from_element(1, 0.5);
        let mut rng = SampleRng::new(5);
        let s = sample_in_differentiable_set(&f, &c, 0.1, 50, &mut rng, 100).unwrap();
        assert!(s.points.iter().all(|p| p[0] >= 0.4 && p[0] <= 0.6));
    }

    #[test]
    fn zero_radius_at_kink_exhausts() {
        let f = make_test_function("ABS", 1).unwrap();
        let c = DVector::zeros(1);
        let mut rng = SampleRng::new(5);
        let err = sample_in_differentiable_set(&f, &c, 0.0, 3, &mut rng, 100).unwrap_err();
        assert!(matches!(err, Error::SamplingExhausted { retries: 100, .. }));
    }
}
