//! Simulation studies: simulated persons, the length sweep of relative SE
//! difference, and mistake-recovery lengths.
//!
//! Responses use common random numbers. A person's answer to an item comes
//! from a stream keyed by the person's seed and the item's bank index, so it
//! does not depend on when, or in which session, the item is asked.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bank::ItemBank;
use crate::engine::{draw_positions, start_session, SessionConfig, SessionState};
use crate::error::{Error, Result};
use crate::irt::{self, posterior_from_responses, ItemParams};
use crate::stats::{self, IntervalSummary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPerson {
    pub true_theta: f64,
    pub rng_seed: u64,
}

/// `n` persons with abilities from Normal(mean, sd).
pub fn draw_persons(n: usize, mean: f64, sd: f64, seed: u64) -> Result<Vec<SimulatedPerson>> {
    let normal = Normal::new(mean, sd)
        .ok()
        .filter(|_| sd > 0.0 && mean.is_finite())
        .ok_or_else(|| Error::InvalidParameter(format!("need finite mean and sd > 0, got {mean}, {sd}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| SimulatedPerson {
            true_theta: normal.sample(&mut rng),
            rng_seed: rng.next_u64(),
        })
        .collect())
}

/// The uniform draw behind a person's answer on `stream`.
fn person_uniform(person: &SimulatedPerson, stream: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(person.rng_seed);
    rng.set_stream(stream);
    rng.random::<f64>()
}

/// Bernoulli draw with the 2PL success probability on `stream`.
pub fn respond(person: &SimulatedPerson, stream: u64, params: &ItemParams) -> bool {
    person_uniform(person, stream) < irt::prob_correct(person.true_theta, params)
}

/// Simulated correctness of `person` on a scored bank item.
pub fn simulate_response(person: &SimulatedPerson, bank: &ItemBank, item_id: &str) -> Result<bool> {
    let idx = bank
        .index_of(item_id)
        .ok_or_else(|| Error::UnknownItem(item_id.into()))?;
    let item = &bank.items[idx];
    if !item.is_scored() {
        return Err(Error::InvalidParameter(format!("{item_id} is unscored")));
    }
    let params = item
        .params
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter(format!("{item_id} has no params")))?;
    Ok(respond(person, idx as u64, params))
}

/// `(se_adaptive − se_original) / se_original`.
pub fn relative_se_difference(se_adaptive: f64, se_original: f64) -> Result<f64> {
    if !(se_original > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "baseline SE must be positive, got {se_original}"
        )));
    }
    Ok((se_adaptive - se_original) / se_original)
}

/// `config` with a different scored length; unscored slots are redrawn over
/// the new total with `deployment_seed`.
pub fn with_scored_length(config: &SessionConfig, length: usize, deployment_seed: u64) -> SessionConfig {
    let mut c = config.clone();
    c.scored_length = length;
    let k = config.unscored_positions.len();
    if k > 0 {
        c.unscored_positions = draw_positions(length + k, k, deployment_seed);
    }
    c
}

/// Runs one session to completion with simulated answers. Unscored items
/// get a fair coin from the person's stream for that item.
pub fn simulate_session(
    bank: &ItemBank,
    config: SessionConfig,
    person: &SimulatedPerson,
    session_id: impl Into<String>,
) -> Result<SessionState> {
    let mut state = start_session(bank, config, session_id)?;
    while let Some(pending) = state.pending().cloned() {
        let idx = bank
            .index_of(&pending.item_id)
            .ok_or_else(|| Error::UnknownItem(pending.item_id.clone()))?;
        let item = &bank.items[idx];
        let correct = match &item.params {
            Some(params) if item.is_scored() => respond(person, idx as u64, params),
            _ => person_uniform(person, idx as u64) < 0.5,
        };
        state.submit_correctness(bank, correct)?;
    }
    Ok(state)
}

fn prior_of(bank: &ItemBank, config: &SessionConfig) -> (f64, f64) {
    let p = config.prior_override.unwrap_or(bank.theta_prior);
    (p.mean, p.sd)
}

/// Posterior mean and information-based SE for a set of bank items answered
/// by `person`, processing them in bank order.
pub fn score_item_set(
    bank: &ItemBank,
    config: &SessionConfig,
    person: &SimulatedPerson,
    item_ids: &[String],
) -> Result<(f64, f64)> {
    let mut idx: Vec<usize> = item_ids
        .iter()
        .map(|id| bank.index_of(id).ok_or_else(|| Error::UnknownItem(id.clone())))
        .collect::<Result<_>>()?;
    idx.sort_unstable();
    idx.dedup();
    let mut answered: Vec<(&ItemParams, bool)> = Vec::with_capacity(idx.len());
    for &i in &idx {
        let item = &bank.items[i];
        if let (true, Some(params)) = (item.is_scored(), item.params.as_ref()) {
            answered.push((params, respond(person, i as u64, params)));
        }
    }
    if answered.is_empty() {
        return Err(Error::EmptyItemSet);
    }
    let (m, s) = prior_of(bank, config);
    let posterior = posterior_from_responses(m, s, answered.iter().map(|&(p, y)| (p, y)), config.grid)?;
    let theta = posterior.mean();
    let se = irt::standard_error(theta, answered.iter().map(|&(p, _)| p))?;
    Ok((theta, se))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Every scored item in the bank.
    FullBank,
    /// The bank's fixed reference form.
    StaticReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthResult {
    pub length: usize,
    /// Relative SE difference per person.
    pub values: Vec<f64>,
    pub summary: IntervalSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub bank_id: String,
    pub baseline: Baseline,
    pub n_persons: usize,
    pub lengths: Vec<LengthResult>,
}

impl SweepResult {
    pub fn at(&self, length: usize) -> Option<&LengthResult> {
        self.lengths.iter().find(|l| l.length == length)
    }
}

fn baseline_items(bank: &ItemBank, baseline: Baseline) -> Result<Vec<String>> {
    match baseline {
        Baseline::FullBank => Ok(bank.scored_items().map(|i| i.item_id.clone()).collect()),
        Baseline::StaticReference => bank
            .static_reference_ids
            .clone()
            .ok_or_else(|| Error::InvalidConfig("bank has no static reference form".into())),
    }
}

/// Relative SE difference of adaptive sessions against `baseline` for every
/// length and person. Both SEs are evaluated at their own final posterior
/// mean, recomputed in bank order.
pub fn sweep_lengths(
    bank: &ItemBank,
    base_config: &SessionConfig,
    lengths: &[usize],
    persons: &[SimulatedPerson],
    baseline: Baseline,
    deployment_seed: u64,
) -> Result<SweepResult> {
    let configs: Vec<SessionConfig> = lengths
        .iter()
        .map(|&l| {
            let c = with_scored_length(base_config, l, deployment_seed);
            c.check(bank)?;
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let reference = baseline_items(bank, baseline)?;
    let baseline_se: Vec<f64> = persons
        .iter()
        .map(|p| score_item_set(bank, base_config, p, &reference).map(|(_, se)| se))
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(lengths.len());
    for (config, &length) in configs.iter().zip(lengths) {
        let mut values = Vec::with_capacity(persons.len());
        for (k, person) in persons.iter().enumerate() {
            let cfg = SessionConfig {
                rng_seed: person.rng_seed,
                ..config.clone()
            };
            let state = simulate_session(bank, cfg, person, format!("sim-{length}-{k}"))?;
            let scored: Vec<String> = state
                .administered()
                .iter()
                .filter(|a| a.scored)
                .map(|a| a.item_id.clone())
                .collect();
            let (_, se) = score_item_set(bank, config, person, &scored)?;
            values.push(relative_se_difference(se, baseline_se[k])?);
        }
        out.push(LengthResult {
            length,
            summary: IntervalSummary::of(&values),
            values,
        });
    }
    Ok(SweepResult {
        bank_id: bank.bank_id.clone(),
        baseline,
        n_persons: persons.len(),
        lengths: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryRule {
    /// Recovered at the first later step with `d ≤ d_i`.
    Printed,
    /// Recovered at the first later step with `d ≤ d_{i−1}`.
    PreviousStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryEvent {
    /// Step `i` (1-based) whose answer moved the estimate away from θ.
    pub mistake_step: usize,
    /// `i′ − i`, or `None` if the session ended first.
    pub recovery_length: Option<usize>,
}

impl RecoveryEvent {
    pub fn censored(&self) -> bool {
        self.recovery_length.is_none()
    }
}

/// Mistakes and recoveries in a distance sequence `d[0..=n]`, where `d[0]`
/// belongs to the prior mean.
pub fn recovery_events(d: &[f64], rule: RecoveryRule) -> Vec<RecoveryEvent> {
    let mut out = Vec::new();
    for i in 1..d.len() {
        if d[i] <= d[i - 1] {
            continue;
        }
        let bar = match rule {
            RecoveryRule::Printed => d[i],
            RecoveryRule::PreviousStep => d[i - 1],
        };
        let recovery_length = (i + 1..d.len()).find(|&j| d[j] <= bar).map(|j| j - i);
        out.push(RecoveryEvent {
            mistake_step: i,
            recovery_length,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecovery {
    pub person: usize,
    pub true_theta: f64,
    pub events: Vec<RecoveryEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub rule: RecoveryRule,
    pub persons: Vec<PersonRecovery>,
    pub n_mistakes: usize,
    pub n_recovered: usize,
    pub n_censored: usize,
    /// Median of the finite recovery lengths; `None` if nothing recovered.
    pub median: Option<f64>,
    pub sd: Option<f64>,
}

/// Distances from the true θ after each scored answer, starting with the
/// prior mean. Unscored answers leave the estimate unchanged and are skipped.
pub fn distance_trajectory(state: &SessionState, true_theta: f64) -> Result<Vec<f64>> {
    let mut d = Vec::new();
    for ev in state.transcript() {
        match ev {
            crate::engine::SessionEvent::SessionStarted { prior_mean, .. } => {
                d.push(libm::fabs(prior_mean - true_theta));
            }
            crate::engine::SessionEvent::AnswerSubmitted {
                scored: true,
                posterior_mean,
                ..
            } => d.push(libm::fabs(posterior_mean - true_theta)),
            _ => {}
        }
    }
    if d.is_empty() {
        return Err(Error::InvalidData("transcript has no start event".into()));
    }
    Ok(d)
}

/// Runs one session per person and collects recovery lengths under `rule`.
pub fn recovery_analysis(
    bank: &ItemBank,
    config: &SessionConfig,
    persons: &[SimulatedPerson],
    rule: RecoveryRule,
) -> Result<RecoveryReport> {
    let mut out = Vec::with_capacity(persons.len());
    for (k, person) in persons.iter().enumerate() {
        let cfg = SessionConfig {
            rng_seed: person.rng_seed,
            ..config.clone()
        };
        let state = simulate_session(bank, cfg, person, format!("rec-{k}"))?;
        let d = distance_trajectory(&state, person.true_theta)?;
        out.push(PersonRecovery {
            person: k,
            true_theta: person.true_theta,
            events: recovery_events(&d, rule),
        });
    }
    Ok(summarize_recovery(rule, out))
}

pub fn summarize_recovery(rule: RecoveryRule, persons: Vec<PersonRecovery>) -> RecoveryReport {
    let lengths: Vec<f64> = persons
        .iter()
        .flat_map(|p| p.events.iter().filter_map(|e| e.recovery_length))
        .map(|l| l as f64)
        .collect();
    let n_mistakes = persons.iter().map(|p| p.events.len()).sum();
    let n_recovered = lengths.len();
    RecoveryReport {
        rule,
        n_mistakes,
        n_recovered,
        n_censored: n_mistakes - n_recovered,
        median: (!lengths.is_empty()).then(|| stats::median(&lengths)),
        sd: (lengths.len() > 1).then(|| stats::sd(&lengths)),
        persons,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn relative_difference_arithmetic() {
        assert_eq!(relative_se_difference(0.5, 0.5).unwrap(), 0.0);
        assert!((relative_se_difference(0.55, 0.5).unwrap() - 0.1).abs() < 1e-12);
        assert!((relative_se_difference(0.45, 0.5).unwrap() + 0.1).abs() < 1e-12);
        assert!(relative_se_difference(0.5, 0.0).is_err());
    }

    #[test]
    fn hand_traced_recovery() {
        let d = [0.5, 0.8, 0.7];
        let ev = recovery_events(&d, RecoveryRule::Printed);
        assert_eq!(
            ev,
            vec![RecoveryEvent {
                mistake_step: 1,
                recovery_length: Some(1)
            }]
        );
        // Under the stricter rule 0.7 is still worse than 0.5.
        let ev = recovery_events(&d, RecoveryRule::PreviousStep);
        assert_eq!(ev[0].recovery_length, None);
    }

    #[test]
    fn decreasing_distances_have_no_mistakes() {
        let d = [1.0, 0.8, 0.5, 0.2, 0.1];
        assert!(recovery_events(&d, RecoveryRule::Printed).is_empty());
    }

    #[test]
    fn censoring_counts_add_up() {
        let d = [0.3, 0.6, 0.9, 0.5, 0.7];
        let persons = vec![PersonRecovery {
            person: 0,
            true_theta: 0.0,
            events: recovery_events(&d, RecoveryRule::PreviousStep),
        }];
        let r = summarize_recovery(RecoveryRule::PreviousStep, persons);
        assert_eq!(r.n_mistakes, 3);
        assert_eq!(r.n_recovered + r.n_censored, r.n_mistakes);
    }

    #[test]
    fn zero_persons() {
        assert!(draw_persons(0, 0.0, 1.0, 1).unwrap().is_empty());
        assert!(draw_persons(3, 0.0, 0.0, 1).is_err());
    }
}
