//! Measurement-error models for test-retest reliability and convergent
//! validity, and sample-size planning by simulation.
//!
//! Both models integrate the per-person latent scores out analytically, so
//! each person's observed pair is bivariate Normal and the sampler only sees
//! the handful of population parameters.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bank::TestFamily;
use crate::error::{Error, Result};
use crate::math;
use crate::mcmc::{run_chains, McmcConfig, McmcRun, Model, PosteriorSummary, Transform};

pub const MIN_OBSERVATIONS: usize = 3;

/// σ_α² / (σ_α² + σ_ε²).
pub fn icc_from_variances(sigma_alpha: f64, sigma_epsilon: f64) -> Result<f64> {
    if !(sigma_alpha > 0.0 && sigma_epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "standard deviations must be positive, got {sigma_alpha} and {sigma_epsilon}"
        )));
    }
    let va = sigma_alpha * sigma_alpha;
    Ok(va / (va + sigma_epsilon * sigma_epsilon))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetestObservation {
    pub person_id: String,
    pub theta_t1: f64,
    pub se_t1: f64,
    pub theta_t2: f64,
    pub se_t2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedObservation {
    pub person_id: String,
    pub theta_original: f64,
    pub se_original: f64,
    pub theta_adaptive: f64,
    pub se_adaptive: f64,
}

fn check_pairs<'a>(pairs: impl Iterator<Item = (&'a str, [f64; 4])>) -> Result<usize> {
    let mut n = 0;
    for (id, [t1, s1, t2, s2]) in pairs {
        if !(t1.is_finite() && t2.is_finite()) {
            return Err(Error::InvalidData(format!("{id}: non-finite score")));
        }
        if !(s1 > 0.0 && s2 > 0.0 && s1.is_finite() && s2.is_finite()) {
            return Err(Error::InvalidData(format!("{id}: standard errors must be positive")));
        }
        n += 1;
    }
    if n < MIN_OBSERVATIONS {
        return Err(Error::InvalidData(format!(
            "need at least {MIN_OBSERVATIONS} persons, got {n}"
        )));
    }
    Ok(n)
}

/// Log density of `(x, y)` under a bivariate Normal with the given moments.
pub fn bivariate_normal_ln_pdf(x: f64, y: f64, mx: f64, my: f64, vx: f64, vy: f64, cov: f64) -> f64 {
    let det = vx * vy - cov * cov;
    if !(det > 0.0) {
        return f64::NEG_INFINITY;
    }
    let (dx, dy) = (x - mx, y - my);
    let q = (vy * dx * dx - 2.0 * cov * dx * dy + vx * dy * dy) / det;
    -math::LN_2PI - 0.5 * math::ln(det) - 0.5 * q
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IccPriors {
    pub mu_mean: f64,
    pub mu_sd: f64,
    /// Half-Normal scale for σ_α.
    pub sigma_alpha_scale: f64,
    /// Half-Normal scale for σ_ε.
    pub sigma_epsilon_scale: f64,
}

impl Default for IccPriors {
    fn default() -> Self {
        Self {
            mu_mean: 0.0,
            mu_sd: 1.0,
            sigma_alpha_scale: 1.0,
            sigma_epsilon_scale: 1.0,
        }
    }
}

impl IccPriors {
    /// μ ~ Normal(−1, 1) for CALVI-like tests, Normal(0, 1) otherwise.
    pub fn for_family(family: TestFamily) -> Self {
        match family {
            TestFamily::CalviLike => Self {
                mu_mean: -1.0,
                ..Self::default()
            },
            _ => Self::default(),
        }
    }
}

/// Whether the likelihood includes the reported standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementError {
    Included,
    /// Standard errors forced to zero.
    Ignored,
}

/// Marginal log-likelihood of the retest data.
pub fn icc_log_likelihood(
    obs: &[RetestObservation],
    mu: f64,
    sigma_alpha: f64,
    sigma_epsilon: f64,
    mode: MeasurementError,
) -> f64 {
    let va = sigma_alpha * sigma_alpha;
    let ve = sigma_epsilon * sigma_epsilon;
    obs.iter()
        .map(|o| {
            let (e1, e2) = match mode {
                MeasurementError::Included => (o.se_t1 * o.se_t1, o.se_t2 * o.se_t2),
                MeasurementError::Ignored => (0.0, 0.0),
            };
            bivariate_normal_ln_pdf(o.theta_t1, o.theta_t2, mu, mu, va + ve + e1, va + ve + e2, va)
        })
        .sum()
}

/// Target over `(μ, σ_α, σ_ε)`.
pub fn icc_model(
    obs: &[RetestObservation],
    priors: IccPriors,
    mode: MeasurementError,
) -> Model<impl Fn(&[f64]) -> f64 + Sync + '_> {
    let mean_t1 = obs.iter().map(|o| o.theta_t1).sum::<f64>() / obs.len().max(1) as f64;
    Model {
        names: ["mu", "sigma_alpha", "sigma_epsilon"].map(String::from).to_vec(),
        transforms: alloc::vec![Transform::Identity, Transform::Log, Transform::Log],
        initial: alloc::vec![mean_t1, 0.7, 0.5],
        log_density: move |p: &[f64]| {
            let (mu, sa, se) = (p[0], p[1], p[2]);
            let zm = (mu - priors.mu_mean) / priors.mu_sd;
            let za = sa / priors.sigma_alpha_scale;
            let ze = se / priors.sigma_epsilon_scale;
            -0.5 * (zm * zm + za * za + ze * ze) + icc_log_likelihood(obs, mu, sa, se, mode)
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccPosterior {
    pub mu: PosteriorSummary,
    pub sigma_alpha: PosteriorSummary,
    pub sigma_epsilon: PosteriorSummary,
    pub icc: PosteriorSummary,
    /// Per-draw ICC, chains concatenated.
    #[serde(skip)]
    pub icc_draws: Vec<f64>,
    pub acceptance_rates: Vec<f64>,
    pub warnings: Vec<String>,
}

impl IccPosterior {
    pub fn from_run(run: &McmcRun) -> Self {
        let (sa, se) = (&run.draws[1], &run.draws[2]);
        let icc_chains: Vec<Vec<f64>> = sa
            .iter()
            .zip(se)
            .map(|(ca, ce)| {
                ca.iter()
                    .zip(ce)
                    .map(|(&a, &e)| {
                        let (va, ve) = (a * a, e * e);
                        va / (va + ve)
                    })
                    .collect()
            })
            .collect();
        Self {
            mu: run.summary(0),
            sigma_alpha: run.summary(1),
            sigma_epsilon: run.summary(2),
            icc: PosteriorSummary::of_chains(&icc_chains),
            icc_draws: icc_chains.into_iter().flatten().collect(),
            acceptance_rates: run.acceptance_rates.clone(),
            warnings: run.warnings.clone(),
        }
    }
}

pub fn check_retest(obs: &[RetestObservation]) -> Result<()> {
    check_pairs(
        obs.iter()
            .map(|o| (o.person_id.as_str(), [o.theta_t1, o.se_t1, o.theta_t2, o.se_t2])),
    )
    .map(|_| ())
}

pub fn fit_icc_model(
    obs: &[RetestObservation],
    priors: IccPriors,
    mode: MeasurementError,
    config: &McmcConfig,
) -> Result<IccPosterior> {
    check_retest(obs)?;
    let run = run_chains(&icc_model(obs, priors, mode), config)?;
    Ok(IccPosterior::from_run(&run))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityPriors {
    pub d_mean: f64,
    pub d_sd: f64,
    /// Normal(mean, sd) truncated to positive values, for σ_O and σ_A.
    pub sigma_mean: f64,
    pub sigma_sd: f64,
}

impl Default for ValidityPriors {
    fn default() -> Self {
        Self {
            d_mean: 0.0,
            d_sd: 1.0,
            sigma_mean: 1.0,
            sigma_sd: 0.5,
        }
    }
}

/// Observed pairs after subtracting the mean of the original-test scores.
pub fn center_on_original(obs: &[PairedObservation]) -> Vec<PairedObservation> {
    let m = obs.iter().map(|o| o.theta_original).sum::<f64>() / obs.len().max(1) as f64;
    obs.iter()
        .map(|o| PairedObservation {
            theta_original: o.theta_original - m,
            theta_adaptive: o.theta_adaptive - m,
            ..o.clone()
        })
        .collect()
}

/// Marginal log-likelihood of already-centered pairs; means are `(0, d)`.
pub fn validity_log_likelihood(
    centered: &[PairedObservation],
    d: f64,
    sigma_o: f64,
    sigma_a: f64,
    rho: f64,
) -> f64 {
    let cov = rho * sigma_o * sigma_a;
    let (vo, va) = (sigma_o * sigma_o, sigma_a * sigma_a);
    centered
        .iter()
        .map(|o| {
            bivariate_normal_ln_pdf(
                o.theta_original,
                o.theta_adaptive,
                0.0,
                d,
                vo + o.se_original * o.se_original,
                va + o.se_adaptive * o.se_adaptive,
                cov,
            )
        })
        .sum()
}

/// Target over `(d, σ_O, σ_A, ρ)` for centered pairs.
pub fn validity_model(
    centered: &[PairedObservation],
    priors: ValidityPriors,
) -> Model<impl Fn(&[f64]) -> f64 + Sync + '_> {
    let d0 = centered.iter().map(|o| o.theta_adaptive).sum::<f64>() / centered.len().max(1) as f64;
    Model {
        names: ["d", "sigma_original", "sigma_adaptive", "rho"].map(String::from).to_vec(),
        transforms: alloc::vec![
            Transform::Identity,
            Transform::Log,
            Transform::Log,
            Transform::Atanh
        ],
        initial: alloc::vec![d0, 1.0, 1.0, 0.0],
        log_density: move |p: &[f64]| {
            let zd = (p[0] - priors.d_mean) / priors.d_sd;
            let zo = (p[1] - priors.sigma_mean) / priors.sigma_sd;
            let za = (p[2] - priors.sigma_mean) / priors.sigma_sd;
            -0.5 * (zd * zd + zo * zo + za * za) + validity_log_likelihood(centered, p[0], p[1], p[2], p[3])
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityPosterior {
    pub d: PosteriorSummary,
    pub sigma_original: PosteriorSummary,
    pub sigma_adaptive: PosteriorSummary,
    pub rho: PosteriorSummary,
    #[serde(skip)]
    pub rho_draws: Vec<f64>,
    pub acceptance_rates: Vec<f64>,
    pub warnings: Vec<String>,
}

impl ValidityPosterior {
    pub fn from_run(run: &McmcRun) -> Self {
        Self {
            d: run.summary(0),
            sigma_original: run.summary(1),
            sigma_adaptive: run.summary(2),
            rho: run.summary(3),
            rho_draws: run.pooled(3),
            acceptance_rates: run.acceptance_rates.clone(),
            warnings: run.warnings.clone(),
        }
    }
}

pub fn check_paired(obs: &[PairedObservation]) -> Result<()> {
    check_pairs(obs.iter().map(|o| {
        (
            o.person_id.as_str(),
            [o.theta_original, o.se_original, o.theta_adaptive, o.se_adaptive],
        )
    }))
    .map(|_| ())
}

pub fn fit_validity_model(
    obs: &[PairedObservation],
    priors: ValidityPriors,
    config: &McmcConfig,
) -> Result<ValidityPosterior> {
    check_paired(obs)?;
    let centered = center_on_original(obs);
    let run = run_chains(&validity_model(&centered, priors), config)?;
    Ok(ValidityPosterior::from_run(&run))
}

/// Retest data from the generative model with a common standard error.
pub fn simulate_retest(
    n: usize,
    mu: f64,
    sigma_alpha: f64,
    sigma_epsilon: f64,
    se: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<RetestObservation> {
    (0..n)
        .map(|j| {
            let mut z = || -> f64 { StandardNormal.sample(&mut *rng) };
            let alpha = sigma_alpha * z();
            let t1 = mu + alpha + sigma_epsilon * z() + se * z();
            let t2 = mu + alpha + sigma_epsilon * z() + se * z();
            RetestObservation {
                person_id: format!("p{j:04}"),
                theta_t1: t1,
                se_t1: se,
                theta_t2: t2,
                se_t2: se,
            }
        })
        .collect()
}

/// Paired scores whose latent values are bivariate Normal with correlation
/// `rho`; observed with standard error `se` on both tests.
pub fn simulate_paired(
    n: usize,
    d: f64,
    sigma_o: f64,
    sigma_a: f64,
    rho: f64,
    se: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<PairedObservation> {
    let c = math::sqrt((1.0 - rho * rho).max(0.0));
    (0..n)
        .map(|j| {
            let mut z = || -> f64 { StandardNormal.sample(&mut *rng) };
            let (z1, z2) = (z(), z());
            let lo = sigma_o * z1;
            let la = d + sigma_a * (rho * z1 + c * z2);
            PairedObservation {
                person_id: format!("p{j:04}"),
                theta_original: lo + se * z(),
                se_original: se,
                theta_adaptive: la + se * z(),
                se_adaptive: se,
            }
        })
        .collect()
}

/// Generative assumptions for sample-size planning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PlanningModel {
    Icc {
        mu: f64,
        sigma_alpha: f64,
        sigma_epsilon: f64,
        se: f64,
    },
    Validity {
        d: f64,
        sigma_original: f64,
        sigma_adaptive: f64,
        rho: f64,
        se: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeRow {
    pub n: usize,
    pub median_halfwidth: f64,
    pub halfwidths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeReport {
    pub rows: Vec<SampleSizeRow>,
    pub target_halfwidth: f64,
    /// Smallest candidate whose median half-width meets the target.
    pub first_n_meeting_target: Option<usize>,
}

/// For each candidate `n`, simulates `replicates` datasets, fits them, and
/// records the 95% credible half-width of the ICC or ρ.
pub fn sample_size_simulation(
    model: PlanningModel,
    candidate_ns: &[usize],
    replicates: usize,
    target_halfwidth: f64,
    config: &McmcConfig,
    seed: u64,
) -> Result<SampleSizeReport> {
    if replicates == 0 {
        return Err(Error::InvalidConfig("replicates must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(candidate_ns.len());
    for (k, &n) in candidate_ns.iter().enumerate() {
        let mut halfwidths = Vec::with_capacity(replicates);
        for r in 0..replicates {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((k as u64) << 32) | r as u64);
            let fit_cfg = McmcConfig {
                seed: seed ^ ((k as u64) << 32 | r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                ..config.clone()
            };
            let hw = match model {
                PlanningModel::Icc {
                    mu,
                    sigma_alpha,
                    sigma_epsilon,
                    se,
                } => {
                    let obs = simulate_retest(n, mu, sigma_alpha, sigma_epsilon, se, &mut rng);
                    fit_icc_model(&obs, IccPriors::default(), MeasurementError::Included, &fit_cfg)?
                        .icc
                        .ci_halfwidth()
                }
                PlanningModel::Validity {
                    d,
                    sigma_original,
                    sigma_adaptive,
                    rho,
                    se,
                } => {
                    let obs = simulate_paired(n, d, sigma_original, sigma_adaptive, rho, se, &mut rng);
                    fit_validity_model(&obs, ValidityPriors::default(), &fit_cfg)?
                        .rho
                        .ci_halfwidth()
                }
            };
            halfwidths.push(hw);
        }
        rows.push(SampleSizeRow {
            n,
            median_halfwidth: crate::stats::median(&halfwidths),
            halfwidths,
        });
    }
    let first_n_meeting_target = rows
        .iter()
        .find(|r| r.median_halfwidth <= target_halfwidth)
        .map(|r| r.n);
    Ok(SampleSizeReport {
        rows,
        target_halfwidth,
        first_n_meeting_target,
    })
}
