//! Adaptive session state machine.
//!
//! A session alternates between serving an item and accepting the answer to
//! it. Scored items are chosen by maximum Fisher information at the current
//! posterior mean, subject to content balancing: once the remaining scored
//! slots no longer exceed the number of uncovered feature values, only items
//! that cover at least one of them are eligible. Unscored items occupy fixed
//! positions and never touch the posterior.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bank::{FeatureTag, Item, ItemBank, TestFamily, ThetaPrior};
use crate::error::{Error, Result};
use crate::irt::{item_information, GridPosterior, GridSpec};

/// Scored length of the VLAT-like adaptive form.
pub const VLAT_SCORED_LENGTH: usize = 27;
/// Scored length of the CALVI-like adaptive form.
pub const CALVI_SCORED_LENGTH: usize = 11;
/// Unscored normal items interleaved into the CALVI-like form.
pub const CALVI_UNSCORED_SLOTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub scored_length: usize,
    pub covering_dimensions: Vec<String>,
    /// 1-based positions reserved for unscored items.
    pub unscored_positions: Vec<usize>,
    /// Items eligible for the unscored slots; all unscored items when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unscored_pool: Option<Vec<String>>,
    pub rng_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_override: Option<ThetaPrior>,
    #[serde(default)]
    pub grid: GridSpec,
}

impl SessionConfig {
    /// Default configuration for a bank's family.
    ///
    /// `deployment_seed` fixes where unscored slots sit; `rng_seed` drives the
    /// per-session assignment of items to those slots.
    pub fn for_bank(bank: &ItemBank, deployment_seed: u64, rng_seed: u64) -> Self {
        let dims = bank.covering_dimensions.clone();
        match bank.test_family {
            TestFamily::VlatLike => Self {
                scored_length: VLAT_SCORED_LENGTH,
                covering_dimensions: dims,
                unscored_positions: Vec::new(),
                unscored_pool: None,
                rng_seed,
                prior_override: None,
                grid: GridSpec::default(),
            },
            TestFamily::CalviLike => {
                let total = CALVI_SCORED_LENGTH + CALVI_UNSCORED_SLOTS;
                let pool: Vec<String> = bank
                    .unscored_items()
                    .filter(|i| i.has_cbi_option)
                    .map(|i| i.item_id.clone())
                    .collect();
                Self {
                    scored_length: CALVI_SCORED_LENGTH,
                    covering_dimensions: dims,
                    unscored_positions: draw_positions(total, CALVI_UNSCORED_SLOTS, deployment_seed),
                    unscored_pool: if pool.is_empty() { None } else { Some(pool) },
                    rng_seed,
                    prior_override: None,
                    grid: GridSpec::default(),
                }
            }
            TestFamily::Custom => Self {
                scored_length: coverage_minimum(bank, &dims).max(1),
                covering_dimensions: dims,
                unscored_positions: Vec::new(),
                unscored_pool: None,
                rng_seed,
                prior_override: None,
                grid: GridSpec::default(),
            },
        }
    }

    pub fn n_unscored_interleaved(&self) -> usize {
        self.unscored_positions.len()
    }

    pub fn total_length(&self) -> usize {
        self.scored_length + self.unscored_positions.len()
    }

    fn prior(&self, bank: &ItemBank) -> ThetaPrior {
        self.prior_override.unwrap_or(bank.theta_prior)
    }

    /// Checks the config against `bank`.
    pub fn check(&self, bank: &ItemBank) -> Result<()> {
        if self.scored_length == 0 {
            return Err(Error::InvalidConfig("scored length must be positive".into()));
        }
        let minimum = coverage_minimum(bank, &self.covering_dimensions);
        for dim in &self.covering_dimensions {
            if !bank.vocabularies.contains_key(dim) {
                return Err(Error::UnknownDimension(dim.clone()));
            }
        }
        if self.scored_length < minimum {
            return Err(Error::LengthBelowCoverageMinimum {
                length: self.scored_length,
                minimum,
            });
        }
        let n_scored = bank.scored_items().count();
        if self.scored_length > n_scored {
            return Err(Error::InvalidConfig(format!(
                "scored length {} exceeds the {n_scored} scored items in the bank",
                self.scored_length
            )));
        }
        let total = self.total_length();
        let mut seen = BTreeSet::new();
        for &p in &self.unscored_positions {
            if p == 0 || p > total {
                return Err(Error::InvalidConfig(format!(
                    "unscored position {p} outside 1..={total}"
                )));
            }
            if !seen.insert(p) {
                return Err(Error::InvalidConfig(format!("duplicate unscored position {p}")));
            }
        }
        if let Some(prior) = self.prior_override {
            if !(prior.sd > 0.0) || !prior.mean.is_finite() {
                return Err(Error::InvalidConfig("prior override needs positive sd".into()));
            }
        }
        self.grid.validate()
    }
}

/// `count` distinct positions in `1..=total`, sorted.
pub fn draw_positions(total: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<usize> = (1..=total).collect();
    all.shuffle(&mut rng);
    let mut picked: Vec<usize> = all.into_iter().take(count).collect();
    picked.sort_unstable();
    picked
}

/// Shortest scored length that content balancing can always satisfy.
///
/// When every scored item carries a value on every covering dimension, the
/// first pick necessarily covers one new value per dimension, so the worst
/// case needs `total − (dimensions − 1)` items (19 for 12 chart types and 8
/// tasks). Otherwise every value may need its own item.
pub fn coverage_minimum(bank: &ItemBank, dimensions: &[String]) -> usize {
    let total: usize = dimensions
        .iter()
        .map(|d| bank.vocabularies.get(d).map_or(0, Vec::len))
        .sum();
    if dimensions.is_empty() {
        return 0;
    }
    let fully_tagged = bank
        .scored_items()
        .all(|item| dimensions.iter().all(|d| item.features.contains_key(d)));
    if fully_tagged {
        total - (dimensions.len() - 1)
    } else {
        total
    }
}

/// Feature values still to be covered.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoverageLedger {
    pub uncovered: BTreeSet<FeatureTag>,
}

impl CoverageLedger {
    pub fn new(bank: &ItemBank, dimensions: &[String]) -> Result<Self> {
        Ok(Self {
            uncovered: bank.coverage_targets(dimensions)?.into_iter().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.uncovered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uncovered.is_empty()
    }

    /// Whether `item` carries at least one uncovered value.
    pub fn covers_any(&self, item: &Item) -> bool {
        item.features
            .iter()
            .any(|(d, v)| self.uncovered.iter().any(|t| &t.dimension == d && &t.value == v))
    }

    pub fn remove_item(&mut self, item: &Item) {
        for (d, v) in &item.features {
            self.uncovered.remove(&FeatureTag::new(d.clone(), v.clone()));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Administered {
    pub position: usize,
    pub item_id: String,
    pub selected_index: usize,
    pub correct: bool,
    pub scored: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingItem {
    pub position: usize,
    pub item_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub theta_mean: f64,
    /// Posterior standard deviation.
    pub theta_se: f64,
    pub raw_correctness: f64,
    pub n_scored: usize,
    pub n_correct: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotAssignment {
    pub position: usize,
    pub item_id: String,
}

/// One line of a session transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    SessionStarted {
        session_id: String,
        bank_id: String,
        config: SessionConfig,
        unscored_assignment: Vec<SlotAssignment>,
        prior_mean: f64,
        prior_sd: f64,
    },
    ItemServed {
        position: usize,
        item_id: String,
    },
    AnswerSubmitted {
        position: usize,
        item_id: String,
        selected_index: usize,
        correct: bool,
        scored: bool,
        posterior_mean: f64,
        posterior_sd: f64,
    },
    SessionCompleted {
        score: Score,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    session_id: String,
    bank_id: String,
    config: SessionConfig,
    posterior: GridPosterior,
    administered: Vec<Administered>,
    ledger: CoverageLedger,
    unscored_assignment: BTreeMap<usize, String>,
    pending: Option<PendingItem>,
    status: SessionStatus,
    transcript: Vec<SessionEvent>,
}

/// Assignment of unscored items to the configured slots.
///
/// Slots are fixed by the config; which item lands in which slot is a
/// uniform draw from the pool seeded by `rng`.
pub fn assign_unscored_positions(
    config: &SessionConfig,
    bank: &ItemBank,
    rng: &mut ChaCha8Rng,
) -> Result<BTreeMap<usize, String>> {
    let needed = config.unscored_positions.len();
    if needed == 0 {
        return Ok(BTreeMap::new());
    }
    let mut pool: Vec<String> = match &config.unscored_pool {
        Some(ids) => {
            for id in ids {
                match bank.item(id) {
                    Some(item) if !item.is_scored() => {}
                    Some(_) => {
                        return Err(Error::InvalidConfig(format!(
                            "unscored pool item {id} is scored"
                        )))
                    }
                    None => return Err(Error::UnknownItem(id.clone())),
                }
            }
            ids.clone()
        }
        None => bank.unscored_items().map(|i| i.item_id.clone()).collect(),
    };
    if pool.len() < needed {
        return Err(Error::TooFewUnscored {
            needed,
            available: pool.len(),
        });
    }
    pool.shuffle(rng);
    let mut positions = config.unscored_positions.clone();
    positions.sort_unstable();
    Ok(positions.into_iter().zip(pool).collect())
}

/// Index of the highest-information eligible item; ties go to the smallest
/// item id.
pub(crate) fn argmax_information<'a, I>(bank: &ItemBank, theta: f64, candidates: I) -> Option<usize>
where
    I: IntoIterator<Item = &'a usize>,
{
    let mut best: Option<(usize, f64)> = None;
    for &idx in candidates {
        let item = &bank.items[idx];
        let Some(params) = item.params.as_ref() else {
            continue;
        };
        let info = item_information(theta, params);
        best = match best {
            None => Some((idx, info)),
            Some((b, bi)) => {
                if info > bi || (info == bi && item.item_id < bank.items[b].item_id) {
                    Some((idx, info))
                } else {
                    Some((b, bi))
                }
            }
        };
    }
    best.map(|(i, _)| i)
}

impl SessionState {
    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn bank_id(&self) -> &str {
        &self.bank_id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn posterior(&self) -> &GridPosterior {
        &self.posterior
    }

    pub fn administered(&self) -> &[Administered] {
        &self.administered
    }

    pub fn ledger(&self) -> &CoverageLedger {
        &self.ledger
    }

    pub fn pending(&self) -> Option<&PendingItem> {
        self.pending.as_ref()
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn transcript(&self) -> &[SessionEvent] {
        &self.transcript
    }

    pub fn unscored_assignment(&self) -> &BTreeMap<usize, String> {
        &self.unscored_assignment
    }

    pub fn scored_count(&self) -> usize {
        self.administered.iter().filter(|a| a.scored).count()
    }

    /// Scored slots not yet served or pending.
    fn remaining_scored(&self) -> usize {
        self.config.scored_length - self.scored_count()
    }

    fn is_used(&self, item_id: &str) -> bool {
        self.administered.iter().any(|a| a.item_id == item_id)
            || self.pending.as_ref().is_some_and(|p| p.item_id == item_id)
    }

    /// The scored item that would be served next.
    pub fn select_next_scored(&self, bank: &ItemBank) -> Result<String> {
        self.pick_scored(bank).map(|i| bank.items[i].item_id.clone())
    }

    fn pick_scored(&self, bank: &ItemBank) -> Result<usize> {
        let remaining = self.remaining_scored();
        if remaining == 0 {
            return Err(Error::InvalidConfig("no scored slots remain".into()));
        }
        let available: Vec<usize> = bank
            .items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.is_scored() && !self.is_used(&it.item_id))
            .map(|(i, _)| i)
            .collect();
        if available.is_empty() {
            return Err(Error::BankExhausted);
        }
        let theta = self.posterior.mean();
        let uncovered = self.ledger.len();
        if remaining > uncovered {
            return argmax_information(bank, theta, &available).ok_or(Error::BankExhausted);
        }
        let eligible: Vec<usize> = available
            .into_iter()
            .filter(|&i| self.ledger.covers_any(&bank.items[i]))
            .collect();
        argmax_information(bank, theta, &eligible).ok_or(Error::CoverageInfeasible { uncovered })
    }

    /// Serves the item for the next position, or completes the session.
    fn advance(&mut self, bank: &ItemBank) -> Result<()> {
        let position = self.administered.len() + 1;
        if position > self.config.total_length() {
            self.status = SessionStatus::Completed;
            self.pending = None;
            let score = self.final_score()?;
            self.transcript.push(SessionEvent::SessionCompleted { score });
            return Ok(());
        }
        let item_id = match self.unscored_assignment.get(&position) {
            Some(id) => id.clone(),
            None => {
                let idx = self.pick_scored(bank)?;
                let item = &bank.items[idx];
                self.ledger.remove_item(item);
                item.item_id.clone()
            }
        };
        self.transcript.push(SessionEvent::ItemServed {
            position,
            item_id: item_id.clone(),
        });
        self.pending = Some(PendingItem { position, item_id });
        Ok(())
    }

    /// Records an answer to the pending item and serves the next one.
    ///
    /// On error the state is left unchanged.
    pub fn submit_answer(&mut self, bank: &ItemBank, item_id: &str, selected_index: usize) -> Result<()> {
        if self.status == SessionStatus::Completed {
            return Err(Error::SessionCompleted);
        }
        let pending = match &self.pending {
            Some(p) if p.item_id == item_id => p.clone(),
            other => {
                return Err(Error::OutOfOrderAnswer {
                    pending: other.as_ref().map(|p| p.item_id.clone()),
                    got: item_id.to_string(),
                })
            }
        };
        let item = bank
            .item(item_id)
            .ok_or_else(|| Error::UnknownItem(item_id.to_string()))?;
        if selected_index >= item.options.len() {
            return Err(Error::InvalidOption {
                index: selected_index,
                n_options: item.options.len(),
            });
        }
        let correct = selected_index == item.correct_index;
        let scored = item.is_scored();

        let mut next = self.clone();
        if scored {
            let params = item
                .params
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter(format!("item {item_id} has no params")))?;
            next.posterior.update(params, correct)?;
        }
        next.administered.push(Administered {
            position: pending.position,
            item_id: item_id.to_string(),
            selected_index,
            correct,
            scored,
        });
        next.pending = None;
        next.transcript.push(SessionEvent::AnswerSubmitted {
            position: pending.position,
            item_id: item_id.to_string(),
            selected_index,
            correct,
            scored,
            posterior_mean: next.posterior.mean(),
            posterior_sd: next.posterior.sd(),
        });
        next.advance(bank)?;
        *self = next;
        Ok(())
    }

    /// Answers the pending item with its key or with a fixed distractor.
    pub fn submit_correctness(&mut self, bank: &ItemBank, correct: bool) -> Result<()> {
        let pending = self.pending.clone().ok_or(Error::SessionCompleted)?;
        let item = bank
            .item(&pending.item_id)
            .ok_or_else(|| Error::UnknownItem(pending.item_id.clone()))?;
        let index = if correct {
            item.correct_index
        } else {
            (item.correct_index + 1) % item.options.len()
        };
        self.submit_answer(bank, &pending.item_id, index)
    }

    pub fn final_score(&self) -> Result<Score> {
        if self.administered.len() < self.config.total_length() {
            return Err(Error::NotTerminated);
        }
        let n_scored = self.scored_count();
        let n_correct = self.administered.iter().filter(|a| a.scored && a.correct).count();
        Ok(Score {
            theta_mean: self.posterior.mean(),
            theta_se: self.posterior.sd(),
            raw_correctness: if n_scored == 0 {
                0.0
            } else {
                n_correct as f64 / n_scored as f64
            },
            n_scored,
            n_correct,
        })
    }
}

/// Starts a session and serves its first item.
pub fn start_session(
    bank: &ItemBank,
    config: SessionConfig,
    session_id: impl Into<String>,
) -> Result<SessionState> {
    config.check(bank)?;
    let prior = config.prior(bank);
    let posterior = GridPosterior::normal_prior(config.grid, prior.mean, prior.sd)?;
    let ledger = CoverageLedger::new(bank, &config.covering_dimensions)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let unscored_assignment = assign_unscored_positions(&config, bank, &mut rng)?;
    let session_id = session_id.into();
    let started = SessionEvent::SessionStarted {
        session_id: session_id.clone(),
        bank_id: bank.bank_id.clone(),
        config: config.clone(),
        unscored_assignment: unscored_assignment
            .iter()
            .map(|(&position, id)| SlotAssignment {
                position,
                item_id: id.clone(),
            })
            .collect(),
        prior_mean: prior.mean,
        prior_sd: prior.sd,
    };
    let mut state = SessionState {
        session_id,
        bank_id: bank.bank_id.clone(),
        config,
        posterior,
        administered: Vec::new(),
        ledger,
        unscored_assignment,
        pending: None,
        status: SessionStatus::Active,
        transcript: alloc::vec![started],
    };
    state.advance(bank)?;
    Ok(state)
}

/// How [`replay`] treats the values recorded in a transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayMode {
    /// Every recomputed event must equal the recorded one bit for bit.
    Verify,
    /// Only the answers are taken from the transcript; everything else is
    /// recomputed.
    Recompute,
}

/// Rebuilds a session from its transcript.
pub fn replay(bank: &ItemBank, events: &[SessionEvent], mode: ReplayMode) -> Result<SessionState> {
    let Some(SessionEvent::SessionStarted {
        session_id,
        bank_id,
        config,
        ..
    }) = events.first()
    else {
        return Err(Error::ReplayDiverged {
            index: 0,
            reason: "transcript must begin with session_started".into(),
        });
    };
    if bank_id != &bank.bank_id {
        return Err(Error::ReplayDiverged {
            index: 0,
            reason: format!("transcript is for bank {bank_id}, not {}", bank.bank_id),
        });
    }
    let mut state = start_session(bank, config.clone(), session_id.clone())?;
    if mode == ReplayMode::Verify {
        let n = state.transcript.len();
        check_prefix(&state.transcript, events, 0, n)?;
    }
    for (index, event) in events.iter().enumerate() {
        if let SessionEvent::AnswerSubmitted {
            item_id,
            selected_index,
            ..
        } = event
        {
            let before = state.transcript.len();
            state.submit_answer(bank, item_id, *selected_index).map_err(|e| {
                Error::ReplayDiverged {
                    index,
                    reason: format!("{e}"),
                }
            })?;
            if mode == ReplayMode::Verify {
                let after = state.transcript.len();
                check_prefix(&state.transcript, events, before, after.min(events.len()))?;
            }
        }
    }
    Ok(state)
}

fn check_prefix(
    produced: &[SessionEvent],
    recorded: &[SessionEvent],
    from: usize,
    to: usize,
) -> Result<()> {
    for i in from..to {
        if i >= recorded.len() {
            break;
        }
        if produced[i] != recorded[i] {
            return Err(Error::ReplayDiverged {
                index: i,
                reason: format!("expected {:?}, recomputed {:?}", recorded[i], produced[i]),
            });
        }
    }
    Ok(())
}
