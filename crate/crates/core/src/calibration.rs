//! 2PL calibration from tryout response matrices.
//!
//! The joint posterior over item parameters and person abilities is sampled
//! by Metropolis-within-Gibbs: every sweep updates each item's `(ln a, b)`
//! given the abilities, then each ability given the items. The log-likelihood
//! of every observed cell is cached, so a block update only evaluates the
//! cells it touches under the proposal. Unscored columns never enter the fit.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bank::{ItemBank, ItemKind, ThetaPrior};
use crate::error::{Error, Result};
use crate::eval::{self, PairedObservation, ValidityPriors};
use crate::irt::{GridPosterior, GridSpec, ItemParams};
use crate::math;
use crate::mcmc::{chain_rng, McmcConfig, PosteriorSummary, STUCK_ACCEPTANCE};

pub const MIN_PERSONS: usize = 10;
pub const MIN_SCORED_ITEMS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixItem {
    pub item_id: String,
    pub kind: ItemKind,
}

/// Persons × items, row-major; `None` is a missing response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseMatrix {
    persons: Vec<String>,
    items: Vec<MatrixItem>,
    responses: Vec<Option<bool>>,
}

impl ResponseMatrix {
    pub fn new(
        persons: Vec<String>,
        items: Vec<MatrixItem>,
        responses: Vec<Option<bool>>,
    ) -> Result<Self> {
        if responses.len() != persons.len() * items.len() {
            return Err(Error::InvalidData(format!(
                "{} cells for {} persons × {} items",
                responses.len(),
                persons.len(),
                items.len()
            )));
        }
        let m = Self {
            persons,
            items,
            responses,
        };
        for (i, item) in m.items.iter().enumerate() {
            if item.kind == ItemKind::Scored && (0..m.n_persons()).all(|p| m.get(p, i).is_none()) {
                return Err(Error::InvalidData(format!(
                    "scored item {} has no responses",
                    item.item_id
                )));
            }
        }
        Ok(m)
    }

    /// Takes item kinds from `bank`; ids the bank does not know are an error.
    pub fn with_kinds_from(
        bank: &ItemBank,
        persons: Vec<String>,
        item_ids: Vec<String>,
        responses: Vec<Option<bool>>,
    ) -> Result<Self> {
        let items = item_ids
            .into_iter()
            .map(|id| {
                let kind = bank.item(&id).ok_or_else(|| Error::UnknownItem(id.clone()))?.kind;
                Ok(MatrixItem { item_id: id, kind })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(persons, items, responses)
    }

    pub fn n_persons(&self) -> usize {
        self.persons.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn persons(&self) -> &[String] {
        &self.persons
    }

    pub fn items(&self) -> &[MatrixItem] {
        &self.items
    }

    pub fn get(&self, person: usize, item: usize) -> Option<bool> {
        self.responses[person * self.items.len() + item]
    }

    pub fn set(&mut self, person: usize, item: usize, value: Option<bool>) {
        let n = self.items.len();
        self.responses[person * n + item] = value;
    }

    pub fn row(&self, person: usize) -> &[Option<bool>] {
        let n = self.items.len();
        &self.responses[person * n..(person + 1) * n]
    }

    pub fn item_index(&self, item_id: &str) -> Option<usize> {
        self.items.iter().position(|i| i.item_id == item_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPriors {
    pub log_a_mean: f64,
    pub log_a_sd: f64,
    pub b_mean: f64,
    pub b_sd: f64,
    pub theta_mean: f64,
    pub theta_sd: f64,
}

impl Default for CalibrationPriors {
    /// a ~ LogNormal(0, 0.5), b ~ Normal(0, 1), θ ~ Normal(0, 1).
    fn default() -> Self {
        Self {
            log_a_mean: 0.0,
            log_a_sd: 0.5,
            b_mean: 0.0,
            b_sd: 1.0,
            theta_mean: 0.0,
            theta_sd: 1.0,
        }
    }
}

impl CalibrationPriors {
    fn validate(&self) -> Result<()> {
        if !(self.log_a_sd > 0.0 && self.b_sd > 0.0 && self.theta_sd > 0.0) {
            return Err(Error::InvalidConfig("prior scales must be positive".into()));
        }
        Ok(())
    }
}

const ITEM_TARGET: f64 = 0.30;
const PERSON_TARGET: f64 = 0.44;
const ITEM_STEP: f64 = 0.15;
const PERSON_STEP: f64 = 0.8;

/// Compact form of the scored part of a matrix, ready to sample.
#[derive(Debug, Clone)]
pub struct Calibration {
    priors: CalibrationPriors,
    item_ids: Vec<String>,
    person_ids: Vec<String>,
    /// Cells grouped by item: `item_start[i]..item_start[i + 1]`.
    item_start: Vec<usize>,
    cell_person: Vec<u32>,
    cell_item: Vec<u32>,
    /// +1 for correct, −1 for incorrect.
    cell_sign: Vec<f64>,
    /// Cell indices grouped by person.
    person_start: Vec<usize>,
    person_cells: Vec<u32>,
    quasi_separated: Vec<bool>,
    init_b: Vec<f64>,
    init_theta: Vec<f64>,
}

fn logit(p: f64) -> f64 {
    math::ln(p / (1.0 - p))
}

impl Calibration {
    pub fn prepare(matrix: &ResponseMatrix, priors: CalibrationPriors) -> Result<Self> {
        priors.validate()?;
        let scored: Vec<usize> = (0..matrix.n_items())
            .filter(|&i| matrix.items[i].kind == ItemKind::Scored)
            .collect();
        if scored.len() < MIN_SCORED_ITEMS {
            return Err(Error::InvalidData(format!(
                "need at least {MIN_SCORED_ITEMS} scored items, got {}",
                scored.len()
            )));
        }
        if matrix.n_persons() < MIN_PERSONS {
            return Err(Error::InvalidData(format!(
                "need at least {MIN_PERSONS} persons, got {}",
                matrix.n_persons()
            )));
        }

        let mut item_start = Vec::with_capacity(scored.len() + 1);
        let mut cell_person = Vec::new();
        let mut cell_item = Vec::new();
        let mut cell_sign = Vec::new();
        let mut quasi_separated = Vec::with_capacity(scored.len());
        let mut init_b = Vec::with_capacity(scored.len());
        for (k, &col) in scored.iter().enumerate() {
            item_start.push(cell_sign.len());
            let (mut n, mut correct) = (0usize, 0usize);
            for p in 0..matrix.n_persons() {
                if let Some(y) = matrix.get(p, col) {
                    cell_person.push(p as u32);
                    cell_item.push(k as u32);
                    cell_sign.push(if y { 1.0 } else { -1.0 });
                    n += 1;
                    correct += y as usize;
                }
            }
            quasi_separated.push(correct == 0 || correct == n);
            let p_hat = (correct as f64 + 0.5) / (n as f64 + 1.0);
            init_b.push(logit(p_hat).clamp(-3.0, 3.0));
        }
        item_start.push(cell_sign.len());

        let n_persons = matrix.n_persons();
        let mut counts = alloc::vec![0usize; n_persons];
        for &p in &cell_person {
            counts[p as usize] += 1;
        }
        let mut person_start = Vec::with_capacity(n_persons + 1);
        let mut acc = 0;
        for &c in &counts {
            person_start.push(acc);
            acc += c;
        }
        person_start.push(acc);
        let mut fill = person_start.clone();
        let mut person_cells = alloc::vec![0u32; acc];
        for (c, &p) in cell_person.iter().enumerate() {
            person_cells[fill[p as usize]] = c as u32;
            fill[p as usize] += 1;
        }

        let raw: Vec<f64> = (0..n_persons)
            .map(|p| {
                let cells = &person_cells[person_start[p]..person_start[p + 1]];
                let right = cells.iter().filter(|&&c| cell_sign[c as usize] > 0.0).count();
                logit((right as f64 + 0.5) / (cells.len() as f64 + 1.0))
            })
            .collect();
        let (m, s) = (crate::stats::mean(&raw), crate::stats::sd(&raw));
        let init_theta = raw
            .iter()
            .map(|r| if s > 0.0 { (r - m) / s } else { 0.0 })
            .collect();

        Ok(Self {
            priors,
            item_ids: scored.iter().map(|&i| matrix.items[i].item_id.clone()).collect(),
            person_ids: matrix.persons.clone(),
            item_start,
            cell_person,
            cell_item,
            cell_sign,
            person_start,
            person_cells,
            quasi_separated,
            init_b,
            init_theta,
        })
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_persons(&self) -> usize {
        self.person_ids.len()
    }

    /// One Metropolis-within-Gibbs chain.
    pub fn run_chain(&self, config: &McmcConfig, chain: usize) -> Result<CalibrationChain> {
        config.validate()?;
        let pr = self.priors;
        let n_items = self.n_items();
        let n_persons = self.n_persons();
        let mut rng = chain_rng(config.seed, chain);
        let normal = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

        let mut log_a: Vec<f64> = (0..n_items).map(|_| 0.1 * normal(&mut rng)).collect();
        let mut b: Vec<f64> = self
            .init_b
            .iter()
            .map(|&v| v + 0.3 * normal(&mut rng))
            .collect();
        let mut theta: Vec<f64> = self
            .init_theta
            .iter()
            .map(|&v| v + 0.3 * normal(&mut rng))
            .collect();
        let mut a: Vec<f64> = log_a.iter().map(|&v| math::exp(v)).collect();

        let cell_ll = |sign: f64, a: f64, theta: f64, b: f64| math::log_logistic(sign * a * (theta + b));
        let mut ll: Vec<f64> = (0..self.cell_sign.len())
            .map(|c| {
                let i = self.cell_item[c] as usize;
                let p = self.cell_person[c] as usize;
                cell_ll(self.cell_sign[c], a[i], theta[p], b[i])
            })
            .collect();
        if ll.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInit);
        }
        let mut scratch = alloc::vec![0.0; self.cell_sign.len().max(1)];

        let mut item_log_step = alloc::vec![0.0f64; n_items];
        let mut person_log_step = alloc::vec![0.0f64; n_persons];
        let kept = config.kept_per_chain();
        let mut a_draws: Vec<Vec<f64>> = (0..n_items).map(|_| Vec::with_capacity(kept)).collect();
        let mut b_draws: Vec<Vec<f64>> = (0..n_items).map(|_| Vec::with_capacity(kept)).collect();
        let mut theta_draws: Vec<Vec<f64>> =
            (0..n_persons).map(|_| Vec::with_capacity(kept)).collect();
        let (mut item_acc, mut person_acc) = (0usize, 0usize);

        let prior_la = |v: f64| {
            let z = (v - pr.log_a_mean) / pr.log_a_sd;
            -0.5 * z * z
        };
        let prior_b = |v: f64| {
            let z = (v - pr.b_mean) / pr.b_sd;
            -0.5 * z * z
        };
        let prior_t = |v: f64| {
            let z = (v - pr.theta_mean) / pr.theta_sd;
            -0.5 * z * z
        };

        for iter in 0..config.n_iterations {
            let warming = iter < config.n_warmup;
            let gain = 1.0 / libm::pow(iter as f64 + 10.0, 0.6);

            for i in 0..n_items {
                let range = self.item_start[i]..self.item_start[i + 1];
                let step = ITEM_STEP * math::exp(item_log_step[i]);
                let la_new = log_a[i] + step * normal(&mut rng);
                let b_new = b[i] + step * normal(&mut rng);
                let a_new = math::exp(la_new);
                let mut new_sum = 0.0;
                let mut old_sum = 0.0;
                for c in range.clone() {
                    let p = self.cell_person[c] as usize;
                    let v = cell_ll(self.cell_sign[c], a_new, theta[p], b_new);
                    scratch[c - range.start] = v;
                    new_sum += v;
                    old_sum += ll[c];
                }
                let log_ratio = new_sum - old_sum + prior_la(la_new) - prior_la(log_a[i])
                    + prior_b(b_new)
                    - prior_b(b[i]);
                let accept = math::ln(rng.random::<f64>()) < log_ratio;
                if accept {
                    log_a[i] = la_new;
                    a[i] = a_new;
                    b[i] = b_new;
                    ll[range.clone()].copy_from_slice(&scratch[..range.len()]);
                }
                if warming {
                    item_log_step[i] += gain * ((accept as u8 as f64) - ITEM_TARGET);
                } else {
                    item_acc += accept as usize;
                }
            }

            for p in 0..n_persons {
                let cells = &self.person_cells[self.person_start[p]..self.person_start[p + 1]];
                let step = PERSON_STEP * math::exp(person_log_step[p]);
                let t_new = theta[p] + step * normal(&mut rng);
                let mut new_sum = 0.0;
                let mut old_sum = 0.0;
                for (k, &c) in cells.iter().enumerate() {
                    let c = c as usize;
                    let i = self.cell_item[c] as usize;
                    let v = cell_ll(self.cell_sign[c], a[i], t_new, b[i]);
                    scratch[k] = v;
                    new_sum += v;
                    old_sum += ll[c];
                }
                let log_ratio = new_sum - old_sum + prior_t(t_new) - prior_t(theta[p]);
                let accept = math::ln(rng.random::<f64>()) < log_ratio;
                if accept {
                    theta[p] = t_new;
                    for (k, &c) in cells.iter().enumerate() {
                        ll[c as usize] = scratch[k];
                    }
                }
                if warming {
                    person_log_step[p] += gain * ((accept as u8 as f64) - PERSON_TARGET);
                } else {
                    person_acc += accept as usize;
                }
            }

            if !warming {
                let since = iter - config.n_warmup;
                if since % config.thin == config.thin - 1 && theta_draws.first().map_or(0, Vec::len) < kept {
                    for i in 0..n_items {
                        a_draws[i].push(a[i]);
                        b_draws[i].push(b[i]);
                    }
                    for p in 0..n_persons {
                        theta_draws[p].push(theta[p]);
                    }
                }
            }
        }

        let post = (config.n_iterations - config.n_warmup) as f64;
        Ok(CalibrationChain {
            a: a_draws,
            b: b_draws,
            theta: theta_draws,
            item_acceptance: item_acc as f64 / (post * n_items as f64),
            person_acceptance: person_acc as f64 / (post * n_persons as f64),
        })
    }

    /// Combines chains (in chain order) into the result.
    pub fn assemble(&self, chains: Vec<CalibrationChain>) -> Result<CalibrationResult> {
        if chains.len() < 2 {
            return Err(Error::InsufficientDraws("need at least 2 chains".into()));
        }
        let mut warnings = Vec::new();
        for (c, ch) in chains.iter().enumerate() {
            if ch.item_acceptance < STUCK_ACCEPTANCE || ch.person_acceptance < STUCK_ACCEPTANCE {
                warnings.push(format!(
                    "chain {c}: post-warmup acceptance items {:.4}, persons {:.4}",
                    ch.item_acceptance, ch.person_acceptance
                ));
            }
        }
        let gather = |pick: &dyn Fn(&CalibrationChain) -> &Vec<f64>| -> PosteriorSummary {
            let per_chain: Vec<Vec<f64>> = chains.iter().map(|ch| pick(ch).clone()).collect();
            PosteriorSummary::of_chains(&per_chain)
        };
        let items: Vec<ItemEstimate> = (0..self.n_items())
            .map(|i| {
                let est = ItemEstimate {
                    item_id: self.item_ids[i].clone(),
                    a: gather(&|ch| &ch.a[i]),
                    b: gather(&|ch| &ch.b[i]),
                    quasi_separated: self.quasi_separated[i],
                };
                if est.quasi_separated {
                    warnings.push(format!("{}: quasi-separated (every response identical)", est.item_id));
                }
                est
            })
            .collect();
        let persons: Vec<PersonEstimate> = (0..self.n_persons())
            .map(|p| PersonEstimate {
                person_id: self.person_ids[p].clone(),
                theta: gather(&|ch| &ch.theta[p]),
            })
            .collect();
        Ok(CalibrationResult {
            items,
            persons,
            item_acceptance: chains.iter().map(|c| c.item_acceptance).collect(),
            person_acceptance: chains.iter().map(|c| c.person_acceptance).collect(),
            warnings,
        })
    }
}

/// Kept draws of one calibration chain, `[item or person][iteration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationChain {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub item_acceptance: f64,
    pub person_acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemEstimate {
    pub item_id: String,
    pub a: PosteriorSummary,
    pub b: PosteriorSummary,
    pub quasi_separated: bool,
}

impl ItemEstimate {
    pub fn params(&self) -> ItemParams {
        ItemParams {
            a: self.a.mean,
            b: self.b.mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonEstimate {
    pub person_id: String,
    pub theta: PosteriorSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub items: Vec<ItemEstimate>,
    pub persons: Vec<PersonEstimate>,
    pub item_acceptance: Vec<f64>,
    pub person_acceptance: Vec<f64>,
    pub warnings: Vec<String>,
}

impl CalibrationResult {
    pub fn item(&self, item_id: &str) -> Option<&ItemEstimate> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    /// Largest R̂ over every item parameter.
    pub fn max_item_rhat(&self) -> f64 {
        self.items
            .iter()
            .flat_map(|i| [i.a.rhat, i.b.rhat])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_person_rhat(&self) -> f64 {
        self.persons
            .iter()
            .map(|p| p.theta.rhat)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Posterior-mean parameters keyed by item id.
    pub fn params(&self) -> BTreeMap<String, ItemParams> {
        self.items.iter().map(|i| (i.item_id.clone(), i.params())).collect()
    }
}

/// Fits the 2PL model, running chains one after another.
pub fn fit_2pl(
    matrix: &ResponseMatrix,
    priors: CalibrationPriors,
    config: &McmcConfig,
) -> Result<CalibrationResult> {
    let cal = Calibration::prepare(matrix, priors)?;
    let chains = (0..config.n_chains)
        .map(|c| cal.run_chain(config, c))
        .collect::<Result<Vec<_>>>()?;
    cal.assemble(chains)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonTheta {
    pub person_id: String,
    pub posterior: GridPosterior,
    /// Nothing scored was answered, so the posterior is the prior.
    pub prior_only: bool,
}

/// Independent grid posteriors per person under known item parameters.
/// Unscored and missing cells are skipped.
pub fn estimate_person_thetas(
    matrix: &ResponseMatrix,
    params: &BTreeMap<String, ItemParams>,
    prior: ThetaPrior,
    grid: GridSpec,
) -> Result<Vec<PersonTheta>> {
    let columns: Vec<(usize, &ItemParams)> = matrix
        .items
        .iter()
        .enumerate()
        .filter(|(_, it)| it.kind == ItemKind::Scored)
        .map(|(i, it)| {
            params
                .get(&it.item_id)
                .map(|p| (i, p))
                .ok_or_else(|| Error::UnknownItem(it.item_id.clone()))
        })
        .collect::<Result<_>>()?;
    (0..matrix.n_persons())
        .map(|p| {
            let mut posterior = GridPosterior::normal_prior(grid, prior.mean, prior.sd)?;
            let mut answered = 0;
            for &(i, params) in &columns {
                if let Some(y) = matrix.get(p, i) {
                    posterior.update(params, y)?;
                    answered += 1;
                }
            }
            Ok(PersonTheta {
                person_id: matrix.persons[p].clone(),
                posterior,
                prior_only: answered == 0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub median: f64,
    pub lo95: f64,
    pub hi95: f64,
    pub rhat: f64,
}

impl CorrelationEntry {
    const UNIT: Self = Self {
        median: 1.0,
        lo95: 1.0,
        hi95: 1.0,
        rhat: 1.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorrelations {
    pub dimension: String,
    pub values: Vec<String>,
    /// `entries[i][j]` for `values[i]`, `values[j]`; symmetric, unit diagonal.
    pub entries: Vec<Vec<CorrelationEntry>>,
    pub warnings: Vec<String>,
}

/// Pairwise ability correlations between the feature values of `dimension`.
///
/// Each person gets one grid estimate per feature value from that value's
/// scored items (bank parameters); each pair of estimates then goes through
/// the validity model, whose ρ posterior fills the entry.
pub fn feature_correlations(
    matrix: &ResponseMatrix,
    bank: &ItemBank,
    dimension: &str,
    config: &McmcConfig,
) -> Result<FeatureCorrelations> {
    let all_values = crate::bank::feature_values(bank, dimension)?;
    let grid = GridSpec::default();
    let mut warnings = Vec::new();
    let mut values = Vec::new();
    let mut estimates: Vec<Vec<(f64, f64)>> = Vec::new();
    for value in all_values {
        let cols: Vec<(usize, ItemParams)> = matrix
            .items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.kind == ItemKind::Scored)
            .filter_map(|(i, it)| {
                let item = bank.item(&it.item_id)?;
                (item.features.get(dimension) == Some(value))
                    .then_some(())
                    .and(item.params.map(|p| (i, p)))
            })
            .collect();
        if cols.len() < 2 {
            warnings.push(format!(
                "{dimension}={value}: {} scored item(s) in the matrix, excluded",
                cols.len()
            ));
            continue;
        }
        let est = (0..matrix.n_persons())
            .map(|p| {
                let mut post = GridPosterior::normal_prior(grid, bank.theta_prior.mean, bank.theta_prior.sd)?;
                for (i, params) in &cols {
                    if let Some(y) = matrix.get(p, *i) {
                        post.update(params, y)?;
                    }
                }
                Ok((post.mean(), post.sd()))
            })
            .collect::<Result<Vec<_>>>()?;
        values.push(value.clone());
        estimates.push(est);
    }

    let k = values.len();
    let mut entries = alloc::vec![alloc::vec![CorrelationEntry::UNIT; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let obs: Vec<PairedObservation> = estimates[i]
                .iter()
                .zip(&estimates[j])
                .enumerate()
                .map(|(p, (&(t1, s1), &(t2, s2)))| PairedObservation {
                    person_id: matrix.persons[p].clone(),
                    theta_original: t1,
                    se_original: s1,
                    theta_adaptive: t2,
                    se_adaptive: s2,
                })
                .collect();
            let fit = eval::fit_validity_model(&obs, ValidityPriors::default(), config)?;
            for w in &fit.warnings {
                warnings.push(format!("{} vs {}: {w}", values[i], values[j]));
            }
            let e = CorrelationEntry {
                median: fit.rho.median,
                lo95: fit.rho.lo95,
                hi95: fit.rho.hi95,
                rhat: fit.rho.rhat,
            };
            entries[i][j] = e;
            entries[j][i] = e;
        }
    }
    Ok(FeatureCorrelations {
        dimension: dimension.into(),
        values,
        entries,
        warnings,
    })
}
