//! Small descriptive statistics used across the simulation and model code.

use alloc::vec::Vec;

use crate::math;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with `n − 1` in the denominator.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sd(xs: &[f64]) -> f64 {
    math::sqrt(variance(xs))
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation quantile (R type 7) of unsorted data.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    quantile_sorted(&sorted(xs), q)
}

pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = math::floor(h) as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return f64::NAN;
    }
    let mx = mean(&xs[..n]);
    let my = mean(&ys[..n]);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / math::sqrt(sxx * syy)
}

pub fn rmse(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    let ss: f64 = xs.iter().zip(ys).map(|(x, y)| (x - y) * (x - y)).sum();
    math::sqrt(ss / n as f64)
}

/// Median with central 66% and 95% intervals.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IntervalSummary {
    pub median: f64,
    pub lo66: f64,
    pub hi66: f64,
    pub lo95: f64,
    pub hi95: f64,
}

impl IntervalSummary {
    pub fn of(xs: &[f64]) -> Self {
        let v = sorted(xs);
        Self {
            median: quantile_sorted(&v, 0.5),
            lo66: quantile_sorted(&v, 0.17),
            hi66: quantile_sorted(&v, 0.83),
            lo95: quantile_sorted(&v, 0.025),
            hi95: quantile_sorted(&v, 0.975),
        }
    }
}
