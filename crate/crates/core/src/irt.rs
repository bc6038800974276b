//! Two-parameter logistic response model, Fisher information, and grid
//! posteriors over ability.
//!
//! Parameters use the easiness convention: the response logit is
//! `a * (theta + b)`, so larger `b` makes an item easier.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Discrimination `a` and easiness `b` of one item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemParams {
    pub a: f64,
    pub b: f64,
}

impl ItemParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let params = Self { a, b };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() || !self.b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "item parameters must be finite (a={}, b={})",
                self.a, self.b
            )));
        }
        if self.a <= 0.0 {
            return Err(Error::InvalidParameter(
                "discrimination must be positive".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn logit(&self, theta: f64) -> f64 {
        self.a * (theta + self.b)
    }
}

/// Probability of a correct response.
#[inline]
pub fn prob_correct(theta: f64, params: &ItemParams) -> f64 {
    math::logistic(params.logit(theta))
}

/// Log-likelihood of one dichotomous response.
#[inline]
pub fn response_log_likelihood(theta: f64, params: &ItemParams, correct: bool) -> f64 {
    let x = params.logit(theta);
    if correct {
        math::log_logistic(x)
    } else {
        math::log_logistic(-x)
    }
}

/// `a² p (1 − p)`.
#[inline]
pub fn item_information(theta: f64, params: &ItemParams) -> f64 {
    let p = prob_correct(theta, params);
    params.a * params.a * p * (1.0 - p)
}

pub fn test_information<'a, I>(theta: f64, items: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a ItemParams>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for params in items {
        total += item_information(theta, params);
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyItemSet);
    }
    Ok(total)
}

/// Information-based standard error `1 / sqrt(I(theta))`.
pub fn standard_error<'a, I>(theta: f64, items: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a ItemParams>,
{
    let info = test_information(theta, items)?;
    se_from_information(info)
}

pub fn se_from_information(info: f64) -> Result<f64> {
    if !(info > 0.0) || !info.is_finite() {
        return Err(Error::DegenerateInformation);
    }
    Ok(1.0 / math::sqrt(info))
}

/// Uniform grid over ability used for posterior quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: -6.0,
            hi: 6.0,
            n_points: 1201,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo >= self.hi {
            return Err(Error::InvalidParameter(format!(
                "grid bounds must satisfy lo < hi (lo={}, hi={})",
                self.lo, self.hi
            )));
        }
        if self.n_points < 3 {
            return Err(Error::InvalidParameter(
                "grid needs at least 3 points".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n_points - 1) as f64
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.hi
        } else {
            self.lo + self.step() * i as f64
        }
    }
}

/// Fraction of posterior mass allowed on either edge point of the grid.
pub const EDGE_MASS_LIMIT: f64 = 1e-3;

/// Discretized posterior over ability.
///
/// `log_density` is unnormalized; responses are accumulated in the log
/// domain and only exponentiated (after subtracting the maximum) when the
/// summary moments are recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPosterior {
    grid: GridSpec,
    log_density: Vec<f64>,
    mean: f64,
    sd: f64,
}

impl GridPosterior {
    /// Normal prior on the grid. The grid must cover `mean ± 5 sd`.
    pub fn normal_prior(grid: GridSpec, mean: f64, sd: f64) -> Result<Self> {
        grid.validate()?;
        if !(sd > 0.0) || !sd.is_finite() || !mean.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "prior needs finite mean and positive sd (mean={mean}, sd={sd})"
            )));
        }
        if grid.lo > mean - 5.0 * sd || grid.hi < mean + 5.0 * sd {
            return Err(Error::GridTruncation(format!(
                "grid [{}, {}] does not cover prior mean ± 5 sd [{}, {}]",
                grid.lo,
                grid.hi,
                mean - 5.0 * sd,
                mean + 5.0 * sd
            )));
        }
        let log_density = (0..grid.n_points)
            .map(|i| {
                let z = (grid.point(i) - mean) / sd;
                -0.5 * z * z
            })
            .collect();
        let mut posterior = Self {
            grid,
            log_density,
            mean,
            sd,
        };
        posterior.refresh()?;
        Ok(posterior)
    }

    /// One Bayesian step for a dichotomous response.
    pub fn update(&mut self, params: &ItemParams, correct: bool) -> Result<()> {
        for (i, ld) in self.log_density.iter_mut().enumerate() {
            *ld += response_log_likelihood(self.grid.point(i), params, correct);
        }
        self.refresh()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }

    pub fn log_density(&self) -> &[f64] {
        &self.log_density
    }

    /// Density normalized to integrate to one under the trapezoid rule.
    pub fn density(&self) -> Vec<f64> {
        let (weights, z) = self.unnormalized();
        weights.into_iter().map(|w| w / z).collect()
    }

    fn unnormalized(&self) -> (Vec<f64>, f64) {
        let max = self
            .log_density
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = self
            .log_density
            .iter()
            .map(|ld| math::exp(ld - max))
            .collect();
        let z = trapezoid(&weights, self.grid.step());
        (weights, z)
    }

    fn refresh(&mut self) -> Result<()> {
        let (weights, z) = self.unnormalized();
        let h = self.grid.step();
        let n = weights.len();
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::GridTruncation("posterior mass vanished".into()));
        }
        let edge_lo = 0.5 * h * weights[0] / z;
        let edge_hi = 0.5 * h * weights[n - 1] / z;
        if edge_lo >= EDGE_MASS_LIMIT || edge_hi >= EDGE_MASS_LIMIT {
            return Err(Error::GridTruncation(format!(
                "edge mass {:.3e} / {:.3e} exceeds {EDGE_MASS_LIMIT}",
                edge_lo, edge_hi
            )));
        }
        let mut first = 0.0;
        for (i, w) in weights.iter().enumerate() {
            let t = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            first += t * w * self.grid.point(i);
        }
        let mean = first * h / z;
        let mut second = 0.0;
        for (i, w) in weights.iter().enumerate() {
            let t = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let d = self.grid.point(i) - mean;
            second += t * w * d * d;
        }
        let var = second * h / z;
        self.mean = mean;
        self.sd = math::sqrt(var);
        Ok(())
    }
}

fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    let inner: f64 = values.iter().sum();
    h * (inner - 0.5 * (values[0] + values[n - 1]))
}

/// Grid posterior for a normal prior and a list of dichotomous responses.
pub fn posterior_from_responses<'a, I>(
    prior_mean: f64,
    prior_sd: f64,
    responses: I,
    grid: GridSpec,
) -> Result<GridPosterior>
where
    I: IntoIterator<Item = (&'a ItemParams, bool)>,
{
    let mut posterior = GridPosterior::normal_prior(grid, prior_mean, prior_sd)?;
    let mut any = false;
    for (params, correct) in responses {
        params.validate()?;
        for (i, ld) in posterior.log_density.iter_mut().enumerate() {
            *ld += response_log_likelihood(posterior.grid.point(i), params, correct);
        }
        any = true;
    }
    if any {
        posterior.refresh()?;
    }
    Ok(posterior)
}
