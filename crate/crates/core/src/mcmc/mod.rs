//! Random-walk Metropolis over user-supplied log densities.
//!
//! Constrained parameters are sampled on an unconstrained scale (`log` for
//! positive values, `atanh` for correlations) with the Jacobian added to the
//! target. During warmup each chain tunes a diagonal proposal: per-parameter
//! scales come from the warmup draws and a global multiplier is driven toward
//! the target acceptance rate. Everything is frozen once warmup ends.
//!
//! Chains are independent. [`run_chain`] runs one of them so callers with
//! threads can fan out and then [`McmcRun::from_chains`] assembles the result.

mod diagnostics;

pub use diagnostics::{ess, rank_normalize, rhat, EssMode};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Acceptance band targeted by warmup adaptation.
pub const ACCEPTANCE_BAND: (f64, f64) = (0.25, 0.45);

/// Acceptance rate aimed for in `d` dimensions: near the top of the band for
/// scalar targets, easing toward the bottom as `d` grows.
pub fn target_acceptance(d: usize) -> f64 {
    match d {
        0 | 1 => 0.38,
        2 => 0.35,
        3 | 4 => 0.30,
        _ => 0.27,
    }
}
/// Post-warmup acceptance below this attaches a warning to the run.
pub const STUCK_ACCEPTANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_chains: usize,
    pub n_iterations: usize,
    pub n_warmup: usize,
    pub thin: usize,
    pub seed: u64,
    /// Proposal scales on the unconstrained scale; empty means 0.5 for every
    /// parameter.
    #[serde(default)]
    pub initial_step_scales: Vec<f64>,
}

impl Default for McmcConfig {
    /// 4 chains × 20,000 iterations, 10,000 warmup, thinned by 5: 8,000 kept
    /// draws.
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_iterations: 20_000,
            n_warmup: 10_000,
            thin: 5,
            seed: 0,
            initial_step_scales: Vec::new(),
        }
    }
}

impl McmcConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 2 {
            return Err(Error::InvalidConfig("at least 2 chains are required".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        if self.n_warmup >= self.n_iterations {
            return Err(Error::InvalidConfig(
                "warmup must be shorter than the run".into(),
            ));
        }
        if self.kept_per_chain() < 4 {
            return Err(Error::InvalidConfig(
                "fewer than 4 kept draws per chain".into(),
            ));
        }
        if self.initial_step_scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidConfig("step scales must be positive".into()));
        }
        Ok(())
    }

    pub fn kept_per_chain(&self) -> usize {
        (self.n_iterations - self.n_warmup) / self.thin
    }

    fn step_scale(&self, k: usize) -> f64 {
        self.initial_step_scales.get(k).copied().unwrap_or(0.5)
    }
}

/// Map from the sampling scale to the parameter's support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// Positive parameters.
    Log,
    /// Parameters in (−1, 1).
    Atanh,
}

impl Transform {
    pub fn constrain(self, u: f64) -> f64 {
        match self {
            Self::Identity => u,
            Self::Log => math::exp(u),
            Self::Atanh => math::tanh(u),
        }
    }

    pub fn unconstrain(self, x: f64) -> f64 {
        match self {
            Self::Identity => x,
            Self::Log => math::ln(x),
            Self::Atanh => math::atanh(x),
        }
    }

    /// `ln |dx/du|`.
    pub fn log_jacobian(self, u: f64) -> f64 {
        match self {
            Self::Identity => 0.0,
            Self::Log => u,
            // 1 − tanh²(u) = 4 / (e^u + e^−u)²
            Self::Atanh => {
                let a = math::abs(u);
                core::f64::consts::LN_2 * 2.0 - 2.0 * (a + math::ln_1p(math::exp(-2.0 * a)))
            }
        }
    }
}

/// A log density over constrained parameters, with their supports and a
/// starting point.
#[derive(Debug, Clone)]
pub struct Model<F> {
    pub names: Vec<String>,
    pub transforms: Vec<Transform>,
    pub initial: Vec<f64>,
    pub log_density: F,
}

impl<F: Fn(&[f64]) -> f64> Model<F> {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    fn validate(&self) -> Result<()> {
        let d = self.names.len();
        if d == 0 || self.transforms.len() != d || self.initial.len() != d {
            return Err(Error::InvalidConfig(format!(
                "model has {} names, {} transforms, {} initial values",
                d,
                self.transforms.len(),
                self.initial.len()
            )));
        }
        Ok(())
    }

    /// Target on the unconstrained scale, Jacobian included.
    fn log_target(&self, u: &[f64], x: &mut [f64]) -> f64 {
        let mut jac = 0.0;
        for ((xi, &ui), t) in x.iter_mut().zip(u).zip(&self.transforms) {
            *xi = t.constrain(ui);
            jac += t.log_jacobian(ui);
        }
        let lp = (self.log_density)(x) + jac;
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }
}

/// Kept draws of one chain, on the constrained scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    /// `draws[param][iteration]`.
    pub draws: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
    pub step_scales: Vec<f64>,
}

/// Per-chain RNG: the run seed with the chain index as stream.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64 + 1);
    rng
}

/// Runs one chain of `model`.
pub fn run_chain<F: Fn(&[f64]) -> f64>(
    model: &Model<F>,
    config: &McmcConfig,
    chain: usize,
) -> Result<ChainOutput> {
    model.validate()?;
    config.validate()?;
    let d = model.dim();
    let mut rng = chain_rng(config.seed, chain);
    let mut x = alloc::vec![0.0; d];

    let base: Vec<f64> = model
        .initial
        .iter()
        .zip(&model.transforms)
        .map(|(&v, t)| t.unconstrain(v))
        .collect();
    if !model.log_target(&base, &mut x).is_finite() {
        return Err(Error::NonFiniteInit);
    }
    let mut scales: Vec<f64> = (0..d).map(|k| config.step_scale(k)).collect();

    // Dispersed start around the initial point.
    let mut u = base.clone();
    let mut jitter = 1.0;
    let mut lp = f64::NEG_INFINITY;
    for _ in 0..50 {
        for k in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            u[k] = base[k] + jitter * scales[k] * z;
        }
        lp = model.log_target(&u, &mut x);
        if lp.is_finite() {
            break;
        }
        jitter *= 0.5;
    }
    if !lp.is_finite() {
        u.clone_from(&base);
        lp = model.log_target(&u, &mut x);
    }

    let kept = config.kept_per_chain();
    let mut draws: Vec<Vec<f64>> = (0..d).map(|_| Vec::with_capacity(kept)).collect();
    let mut proposal = alloc::vec![0.0; d];
    let mut log_lambda = 0.0f64;
    let dim_factor = 2.38 / math::sqrt(d as f64);
    let target = target_acceptance(d);
    let collect_from = config.n_warmup / 4;
    let reset_at = config.n_warmup / 2;
    let mut welford = Welford::new(d);
    let mut accepted_after_warmup = 0usize;

    for iter in 0..config.n_iterations {
        let warming = iter < config.n_warmup;
        let lambda = math::exp(log_lambda);
        for k in 0..d {
            proposal[k] = u[k] + lambda * scales[k] * bactrian_step(&mut rng);
        }
        let lp_new = model.log_target(&proposal, &mut x);
        let log_u = math::ln(rng.random::<f64>());
        let accept = lp_new.is_finite() && log_u < lp_new - lp;
        if accept {
            u.copy_from_slice(&proposal);
            lp = lp_new;
        }

        if warming {
            let rate = if accept { 1.0 } else { 0.0 };
            let step = 1.0 / libm::pow((iter % reset_at.max(1)) as f64 + 10.0, 0.6);
            log_lambda += step * (rate - target) * 3.0;
            if iter >= collect_from && iter < reset_at {
                welford.push(&u);
            }
            if iter + 1 == reset_at && welford.count > 10 {
                for (k, s) in scales.iter_mut().enumerate() {
                    let sd = welford.sd(k);
                    if sd > 0.0 && sd.is_finite() {
                        *s = dim_factor * sd;
                    }
                }
                log_lambda = 0.0;
            }
        } else {
            if accept {
                accepted_after_warmup += 1;
            }
            let since = iter - config.n_warmup;
            if since % config.thin == config.thin - 1 && draws[0].len() < kept {
                for (k, col) in draws.iter_mut().enumerate() {
                    col.push(model.transforms[k].constrain(u[k]));
                }
            }
        }
    }

    let lambda = math::exp(log_lambda);
    Ok(ChainOutput {
        draws,
        acceptance_rate: accepted_after_warmup as f64
            / (config.n_iterations - config.n_warmup) as f64,
        step_scales: scales.iter().map(|s| s * lambda).collect(),
    })
}

/// Symmetric bimodal increment with unit variance: `±m + sqrt(1 − m²)·z`.
/// Avoiding tiny moves mixes better than a Gaussian step at equal variance.
fn bactrian_step(rng: &mut ChaCha8Rng) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    sign * BACTRIAN_M + BACTRIAN_SPREAD * z
}

const BACTRIAN_M: f64 = 0.95;
// sqrt(1 − 0.95²)
const BACTRIAN_SPREAD: f64 = 0.312_249_899_919_919_97;

struct Welford {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(d: usize) -> Self {
        Self {
            count: 0,
            mean: alloc::vec![0.0; d],
            m2: alloc::vec![0.0; d],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for (k, &v) in x.iter().enumerate() {
            let delta = v - self.mean[k];
            self.mean[k] += delta / n;
            self.m2[k] += delta * (v - self.mean[k]);
        }
    }

    fn sd(&self, k: usize) -> f64 {
        math::sqrt(self.m2[k] / (self.count - 1) as f64)
    }
}

/// Per-parameter convergence summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub rhat: f64,
    pub ess_bulk: f64,
    pub ess_tail: f64,
}

/// Diagnostics for one parameter's `[chain][iteration]` draws.
pub fn diagnose(chains: &[Vec<f64>]) -> Result<ParamDiagnostics> {
    Ok(ParamDiagnostics {
        rhat: rhat(chains)?,
        ess_bulk: ess(chains, EssMode::Bulk)?,
        ess_tail: ess(chains, EssMode::Tail)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcRun {
    pub names: Vec<String>,
    /// `draws[param][chain][iteration]`, constrained scale.
    pub draws: Vec<Vec<Vec<f64>>>,
    pub acceptance_rates: Vec<f64>,
    pub step_scales: Vec<Vec<f64>>,
    pub diagnostics: Vec<ParamDiagnostics>,
    pub warnings: Vec<String>,
    pub config: McmcConfig,
}

impl McmcRun {
    pub fn from_chains(
        names: Vec<String>,
        chains: Vec<ChainOutput>,
        config: &McmcConfig,
    ) -> Result<Self> {
        let d = names.len();
        let mut draws: Vec<Vec<Vec<f64>>> = (0..d).map(|_| Vec::new()).collect();
        let mut acceptance_rates = Vec::new();
        let mut step_scales = Vec::new();
        let mut warnings = Vec::new();
        for (c, chain) in chains.into_iter().enumerate() {
            if chain.acceptance_rate < STUCK_ACCEPTANCE {
                warnings.push(format!(
                    "chain {c}: post-warmup acceptance {:.4} below {STUCK_ACCEPTANCE}",
                    chain.acceptance_rate
                ));
            }
            acceptance_rates.push(chain.acceptance_rate);
            step_scales.push(chain.step_scales);
            for (k, col) in chain.draws.into_iter().enumerate() {
                draws[k].push(col);
            }
        }
        let mut diagnostics = Vec::with_capacity(d);
        for (k, param) in draws.iter().enumerate() {
            match diagnose(param) {
                Ok(diag) => diagnostics.push(diag),
                Err(e) => {
                    warnings.push(format!("{}: {e}", names[k]));
                    diagnostics.push(ParamDiagnostics {
                        rhat: f64::NAN,
                        ess_bulk: f64::NAN,
                        ess_tail: f64::NAN,
                    });
                }
            }
        }
        Ok(Self {
            names,
            draws,
            acceptance_rates,
            step_scales,
            diagnostics,
            warnings,
            config: config.clone(),
        })
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// All kept draws of one parameter, chains concatenated.
    pub fn pooled(&self, param: usize) -> Vec<f64> {
        self.draws[param].iter().flatten().copied().collect()
    }

    pub fn kept_draws(&self) -> usize {
        self.draws.first().map_or(0, |p| p.iter().map(Vec::len).sum())
    }

    pub fn max_rhat(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.rhat).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess_bulk(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.ess_bulk).fold(f64::INFINITY, f64::min)
    }

    pub fn min_ess_tail(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.ess_tail).fold(f64::INFINITY, f64::min)
    }
}

/// Point and interval summary of one parameter's pooled draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub lo95: f64,
    pub hi95: f64,
    pub rhat: f64,
    pub ess_bulk: f64,
    pub ess_tail: f64,
}

impl PosteriorSummary {
    /// Summarizes `draws[chain][iteration]`.
    pub fn of_chains(chains: &[Vec<f64>]) -> Self {
        let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
        let diag = diagnose(chains).unwrap_or(ParamDiagnostics {
            rhat: f64::NAN,
            ess_bulk: f64::NAN,
            ess_tail: f64::NAN,
        });
        Self::with_diagnostics(&pooled, diag)
    }

    pub fn with_diagnostics(pooled: &[f64], diag: ParamDiagnostics) -> Self {
        let iv = crate::stats::IntervalSummary::of(pooled);
        Self {
            mean: crate::stats::mean(pooled),
            sd: crate::stats::sd(pooled),
            median: iv.median,
            lo95: iv.lo95,
            hi95: iv.hi95,
            rhat: diag.rhat,
            ess_bulk: diag.ess_bulk,
            ess_tail: diag.ess_tail,
        }
    }

    pub fn ci_halfwidth(&self) -> f64 {
        (self.hi95 - self.lo95) / 2.0
    }
}

impl McmcRun {
    pub fn summary(&self, param: usize) -> PosteriorSummary {
        PosteriorSummary::with_diagnostics(&self.pooled(param), self.diagnostics[param])
    }
}

/// Runs every chain sequentially.
pub fn run_chains<F: Fn(&[f64]) -> f64>(model: &Model<F>, config: &McmcConfig) -> Result<McmcRun> {
    let chains = (0..config.n_chains)
        .map(|c| run_chain(model, config, c))
        .collect::<Result<Vec<_>>>()?;
    McmcRun::from_chains(model.names.clone(), chains, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn std_normal() -> Model<impl Fn(&[f64]) -> f64> {
        Model {
            names: vec!["x".into()],
            transforms: vec![Transform::Identity],
            initial: vec![0.0],
            log_density: |p: &[f64]| -0.5 * p[0] * p[0],
        }
    }

    fn short() -> McmcConfig {
        McmcConfig {
            n_chains: 4,
            n_iterations: 4000,
            n_warmup: 2000,
            thin: 1,
            seed: 3,
            initial_step_scales: Vec::new(),
        }
    }

    #[test]
    fn kept_draw_count_follows_config() {
        let run = run_chains(&std_normal(), &short()).unwrap();
        assert_eq!(run.kept_draws(), 8000);
        assert_eq!(McmcConfig::default().kept_per_chain() * 4, 8000);
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let a = run_chains(&std_normal(), &short()).unwrap();
        let b = run_chains(&std_normal(), &short()).unwrap();
        assert_eq!(a.draws, b.draws);
    }

    #[test]
    fn config_validation() {
        let mut c = short();
        c.n_chains = 1;
        assert!(c.validate().is_err());
        let mut c = short();
        c.thin = 0;
        assert!(c.validate().is_err());
        let mut c = short();
        c.n_warmup = c.n_iterations;
        assert!(c.validate().is_err());
    }

    #[test]
    fn non_finite_init_is_an_error() {
        let model = Model {
            names: vec!["x".into()],
            transforms: vec![Transform::Identity],
            initial: vec![0.0],
            log_density: |_: &[f64]| f64::NEG_INFINITY,
        };
        assert_eq!(run_chains(&model, &short()).unwrap_err(), Error::NonFiniteInit);
    }

    #[test]
    fn stuck_chain_gets_a_warning() {
        // A spike far narrower than any step the sampler can reach in
        // warmup keeps rejecting.
        let model = Model {
            names: vec!["x".into()],
            transforms: vec![Transform::Identity],
            initial: vec![0.0],
            log_density: |p: &[f64]| if p[0].abs() < 1e-300 { 0.0 } else { -1e300 * p[0].abs() },
        };
        let mut cfg = short();
        cfg.n_iterations = 400;
        cfg.n_warmup = 200;
        let run = run_chains(&model, &cfg).unwrap();
        assert!(!run.warnings.is_empty());
    }

    #[test]
    fn atanh_jacobian_matches_direct_form() {
        for &u in &[-3.0, -0.5, 0.0, 0.7, 4.0] {
            let t: f64 = math::tanh(u);
            let direct = math::ln(1.0 - t * t);
            assert!((Transform::Atanh.log_jacobian(u) - direct).abs() < 1e-12);
        }
    }
}
