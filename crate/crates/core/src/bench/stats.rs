//! Cross-replicate statistics.

use serde::{Deserialize, Serialize};

/// Type-7 quantile (linear interpolation between order statistics) of an
/// ascending slice. Returns NaN for an empty slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let h = (len - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Type-7 quantile of unsorted values; NaNs are ignored.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        v.sort_by(f64::total_cmp);
        Quartiles {
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
        }
    }
}

/// Pads every series to the longest length by repeating its last value.
/// Empty series stay empty.
pub fn align(series: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let len = series.iter().map(Vec::len).max().unwrap_or(0);
    series
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if let Some(&last) = s.last() {
                s.resize(len, last);
            }
            s
        })
        .collect()
}

/// Pointwise quartiles of aligned series.
pub fn pointwise(series: &[Vec<f64>]) -> Vec<Quartiles> {
    let aligned = align(series);
    let len = aligned.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let col: Vec<f64> = aligned.iter().filter_map(|s| s.get(i).copied()).collect();
            Quartiles::of(&col)
        })
        .collect()
}

/// `min{gap_{k+1}/gap_k, 1}` for consecutive entries, clamped to `[0, 1]`.
/// A nonpositive `gap_k` gives 1.
pub fn ratio_column(gaps: &[f64]) -> Vec<f64> {
    gaps.windows(2)
        .map(|w| {
            if w[0] > 0.0 {
                (w[1] / w[0]).clamp(0.0, 1.0)
            } else {
                1.0
            }
        })
        .collect()
}

/// Resamples a trace given as `(time, value)` pairs onto a grid of width
/// `step` seconds: each grid point takes the last value observed at or
/// before it.
pub fn bucket_by_time(points: &[(f64, f64)], step: f64, until: f64) -> Vec<f64> {
    if points.is_empty() {
        return Vec::new();
    }
    let buckets = (until / step).floor() as usize + 1;
    let mut out = Vec::with_capacity(buckets);
    let mut idx = 0;
    for b in 0..buckets {
        let t = b as f64 * step;
        while idx + 1 < points.len() && points[idx + 1].0 <= t {
            idx += 1;
        }
        out.push(points[idx].1);
    }
    out
}
