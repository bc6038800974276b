//! HTTP session service.
//!
//! Sessions live in memory and in an append-only log per session; on start
//! every logged session is replayed against its bank. Mutations of one
//! session are serialized by that session's lock, distinct sessions proceed
//! in parallel.

mod api;
pub mod store;
pub mod views;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use adaptest_core::bank::ItemBank;
use adaptest_core::engine::{replay, start_session, ReplayMode, SessionConfig, SessionState};
use adaptest_core::bank::ThetaPrior;
use adaptest_core::sim::with_scored_length;
use serde::{Deserialize, Serialize};

pub use api::router;
use store::{now_ms, IndexEntry, SessionLog, Store};
use views::*;

use crate::error::{Error, Result};
use crate::formats::{load_bank, KeyPolicy};

fn default_bind() -> String {
    "127.0.0.1".into()
}

fn default_port() -> u16 {
    8080
}

fn default_token_env() -> String {
    "CAT_ADMIN_TOKEN".into()
}

fn yes() -> bool {
    true
}

/// `serve` configuration file (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_port")]
    pub port: u16,
    pub data_dir: PathBuf,
    /// Environment variable holding the admin token. Admin endpoints refuse
    /// every request when it is unset or empty.
    #[serde(default = "default_token_env")]
    pub admin_token_env: String,
    #[serde(default)]
    pub banks: Vec<BankConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankConfig {
    pub path: PathBuf,
    /// Whether test-takers may fetch their own result.
    #[serde(default = "yes")]
    pub show_results: bool,
    /// Fixes the positions of unscored slots for this deployment.
    #[serde(default)]
    pub deployment_seed: u64,
    #[serde(default)]
    pub lenient: bool,
}

impl ServiceConfig {
    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ServiceConfig = toml::from_str(&text).map_err(|e| Error::parse(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.data_dir.is_relative() {
            cfg.data_dir = base.join(&cfg.data_dir);
        }
        for b in &mut cfg.banks {
            if b.path.is_relative() {
                b.path = base.join(&b.path);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug)]
pub struct BankEntry {
    pub bank: ItemBank,
    pub show_results: bool,
    pub deployment_seed: u64,
}

impl BankEntry {
    fn default_config(&self, rng_seed: u64) -> SessionConfig {
        SessionConfig::for_bank(&self.bank, self.deployment_seed, rng_seed)
    }
}

/// Per-session settings a client may change.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub scored_length: Option<usize>,
    pub prior: Option<ThetaPrior>,
}

#[derive(Debug)]
struct Slot {
    state: SessionState,
    log: SessionLog,
    created_ms: u64,
    updated_ms: u64,
}

/// Service failures, each with its HTTP status.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApiError {
    #[error("unknown bank {0}")]
    UnknownBank(String),
    #[error("unknown session")]
    UnknownSession,
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("results for this bank are not shown to test-takers")]
    ResultsHidden,
    #[error("missing or wrong admin token")]
    Unauthorized,
    #[error("internal error")]
    Internal(String),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::UnknownBank(_) => "unknown_bank",
            ApiError::UnknownSession => "unknown_session",
            ApiError::Conflict(_) => "conflict",
            ApiError::Unprocessable(_) => "unprocessable",
            ApiError::ResultsHidden => "results_hidden",
            ApiError::Unauthorized => "unauthorized",
            ApiError::Internal(_) => "internal",
        }
    }

    fn from_core(e: adaptest_core::Error) -> Self {
        use adaptest_core::Error as C;
        match e {
            C::OutOfOrderAnswer { .. } => ApiError::Conflict("answer is not for the pending item".into()),
            C::SessionCompleted => ApiError::Conflict("session is already completed".into()),
            C::NotTerminated => ApiError::Conflict("session is not completed".into()),
            C::InvalidOption { .. }
            | C::LengthBelowCoverageMinimum { .. }
            | C::InvalidConfig(_)
            | C::UnknownDimension(_)
            | C::TooFewUnscored { .. }
            | C::InvalidParameter(_) => ApiError::Unprocessable(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Core(c) => ApiError::from_core(c),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

pub type ApiResult<T> = std::result::Result<T, ApiError>;

/// Shared service state.
#[derive(Debug)]
pub struct Service {
    banks: BTreeMap<String, BankEntry>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Slot>>>>,
    store: Mutex<Store>,
    admin_token: Option<String>,
}

fn random_session_id() -> String {
    hex::encode(rand::random::<[u8; 16]>())
}

impl Service {
    /// Loads banks from the config and replays every stored session.
    pub fn open(config: &ServiceConfig) -> Result<Self> {
        let token = std::env::var(&config.admin_token_env).ok().filter(|t| !t.is_empty());
        let mut banks = Vec::new();
        for b in &config.banks {
            let policy = if b.lenient { KeyPolicy::Lenient } else { KeyPolicy::Strict };
            banks.push(BankEntry {
                bank: load_bank(&b.path, policy)?,
                show_results: b.show_results,
                deployment_seed: b.deployment_seed,
            });
        }
        Self::with_banks(banks, &config.data_dir, token)
    }

    pub fn with_banks(banks: Vec<BankEntry>, data_dir: &Path, admin_token: Option<String>) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for b in banks {
            let id = b.bank.bank_id.clone();
            if by_id.insert(id.clone(), b).is_some() {
                return Err(Error::Invalid(format!("bank {id} is configured twice")));
            }
        }
        let store = Store::open(data_dir)?;
        let mut sessions = HashMap::new();
        for stored in store.load_all()? {
            let id = stored.entry.session_id.clone();
            let Some(entry) = by_id.get(&stored.entry.bank_id) else {
                tracing::error!(session = id, bank = stored.entry.bank_id, "bank not loaded; session skipped");
                continue;
            };
            let state = match replay(&entry.bank, &stored.events, ReplayMode::Verify) {
                Ok(s) => s,
                Err(e) => {
                    tracing::error!(session = id, error = %e, "replay failed; session skipped");
                    continue;
                }
            };
            let mut log = stored.log;
            if state.transcript().len() > stored.events.len() {
                // The crash fell between an answer and the item served after it.
                log.append(&state.transcript()[stored.events.len()..])?;
            }
            sessions.insert(
                id,
                Arc::new(Mutex::new(Slot {
                    state,
                    log,
                    created_ms: stored.entry.created_ms,
                    updated_ms: stored.updated_ms,
                })),
            );
        }
        tracing::info!(banks = by_id.len(), sessions = sessions.len(), "service state loaded");
        Ok(Self {
            banks: by_id,
            sessions: RwLock::new(sessions),
            store: Mutex::new(store),
            admin_token,
        })
    }

    pub fn check_admin(&self, presented: Option<&str>) -> ApiResult<()> {
        match (&self.admin_token, presented) {
            (Some(expected), Some(got)) if constant_time_eq(expected.as_bytes(), got.as_bytes()) => Ok(()),
            _ => Err(ApiError::Unauthorized),
        }
    }

    fn bank(&self, bank_id: &str) -> ApiResult<&BankEntry> {
        self.banks
            .get(bank_id)
            .ok_or_else(|| ApiError::UnknownBank(bank_id.to_string()))
    }

    fn slot(&self, session_id: &str) -> ApiResult<Arc<Mutex<Slot>>> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(session_id)
            .cloned()
            .ok_or(ApiError::UnknownSession)
    }

    fn pending_view(bank: &ItemBank, state: &SessionState) -> Option<PublicItemView> {
        let total = state.config().total_length();
        state.pending().map(|p| {
            let item = bank.item(&p.item_id).expect("served items come from the bank");
            PublicItemView::new(item, p.position, total)
        })
    }

    pub fn create_session(&self, bank_id: &str, overrides: Option<ConfigOverrides>) -> ApiResult<SessionCreated> {
        let entry = self.bank(bank_id)?;
        let mut config = entry.default_config(rand::random());
        if let Some(o) = overrides {
            if let Some(l) = o.scored_length {
                config = with_scored_length(&config, l, entry.deployment_seed);
            }
            config.prior_override = o.prior.or(config.prior_override);
        }
        let session_id = random_session_id();
        let state = start_session(&entry.bank, config, session_id.clone()).map_err(ApiError::from_core)?;
        let created_ms = now_ms();
        let index = IndexEntry {
            session_id: session_id.clone(),
            bank_id: bank_id.to_string(),
            created_ms,
        };
        let log = self
            .store
            .lock()
            .expect("store lock")
            .create(&index, state.transcript())?;
        let body = SessionCreated {
            session_id: session_id.clone(),
            status: state.status(),
            item: Self::pending_view(&entry.bank, &state).expect("a new session has a pending item"),
            progress: Progress::of(&state),
        };
        self.sessions.write().expect("session map lock").insert(
            session_id,
            Arc::new(Mutex::new(Slot {
                state,
                log,
                created_ms,
                updated_ms: created_ms,
            })),
        );
        Ok(body)
    }

    pub fn session_view(&self, session_id: &str) -> ApiResult<SessionView> {
        let slot = self.slot(session_id)?;
        let slot = slot.lock().expect("session lock");
        let entry = self.bank(slot.state.bank_id())?;
        Ok(SessionView {
            session_id: session_id.to_string(),
            bank_id: slot.state.bank_id().to_string(),
            status: slot.state.status(),
            item: Self::pending_view(&entry.bank, &slot.state),
            progress: Progress::of(&slot.state),
            results_visible: entry.show_results,
        })
    }

    fn answer_body(bank: &ItemBank, state: &SessionState) -> AnswerAccepted {
        AnswerAccepted {
            status: state.status(),
            next_item: Self::pending_view(bank, state),
            progress: Progress::of(state),
        }
    }

    /// Applies an answer. Re-sending the latest answer returns the original
    /// response unchanged.
    pub fn submit_answer(&self, session_id: &str, item_id: &str, selected_index: usize) -> ApiResult<AnswerAccepted> {
        let slot = self.slot(session_id)?;
        let mut slot = slot.lock().expect("session lock");
        let entry = self.bank(slot.state.bank_id())?;
        if let Some(last) = slot.state.administered().last() {
            if last.item_id == item_id {
                if last.selected_index == selected_index {
                    return Ok(Self::answer_body(&entry.bank, &slot.state));
                }
                return Err(ApiError::Conflict("item was already answered differently".into()));
            }
        }
        let before = slot.state.transcript().len();
        let mut next = slot.state.clone();
        next.submit_answer(&entry.bank, item_id, selected_index)
            .map_err(ApiError::from_core)?;
        slot.log.append(&next.transcript()[before..])?;
        slot.state = next;
        slot.updated_ms = now_ms();
        Ok(Self::answer_body(&entry.bank, &slot.state))
    }

    pub fn result(&self, session_id: &str) -> ApiResult<SessionResult> {
        let slot = self.slot(session_id)?;
        let slot = slot.lock().expect("session lock");
        let entry = self.bank(slot.state.bank_id())?;
        if !entry.show_results {
            return Err(ApiError::ResultsHidden);
        }
        let score = slot.state.final_score().map_err(ApiError::from_core)?;
        let bank = &entry.bank;
        let mut coverage = Vec::new();
        for dim in &slot.state.config().covering_dimensions {
            for value in bank.vocabularies.get(dim).into_iter().flatten() {
                let administered = slot
                    .state
                    .administered()
                    .iter()
                    .filter(|a| a.scored)
                    .filter(|a| bank.item(&a.item_id).and_then(|i| i.features.get(dim)) == Some(value))
                    .count();
                coverage.push(CoverageEntry {
                    dimension: dim.clone(),
                    value: value.clone(),
                    administered,
                });
            }
        }
        Ok(SessionResult {
            session_id: session_id.to_string(),
            theta_mean: score.theta_mean,
            theta_se: score.theta_se,
            raw_correctness: score.raw_correctness,
            n_scored: score.n_scored,
            n_correct: score.n_correct,
            administered: slot.state.administered().len(),
            coverage,
        })
    }

    pub fn banks(&self) -> Vec<BankSummary> {
        self.banks
            .values()
            .map(|e| BankSummary {
                bank_id: e.bank.bank_id.clone(),
                test_family: e.bank.test_family,
                n_items: e.bank.items.len(),
                total_length: e.default_config(0).total_length(),
                results_visible: e.show_results,
            })
            .collect()
    }

    /// Sessions ordered by creation time, then id.
    pub fn list_sessions(&self, bank_id: Option<&str>) -> Vec<SessionListing> {
        let slots: Vec<(String, Arc<Mutex<Slot>>)> = self
            .sessions
            .read()
            .expect("session map lock")
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let mut out: Vec<SessionListing> = slots
            .into_iter()
            .filter_map(|(id, slot)| {
                let slot = slot.lock().expect("session lock");
                if bank_id.is_some_and(|b| b != slot.state.bank_id()) {
                    return None;
                }
                Some(SessionListing {
                    session_id: id,
                    bank_id: slot.state.bank_id().to_string(),
                    status: slot.state.status(),
                    progress: Progress::of(&slot.state),
                    created_ms: slot.created_ms,
                    updated_ms: slot.updated_ms,
                })
            })
            .collect();
        out.sort_by(|a, b| (a.created_ms, &a.session_id).cmp(&(b.created_ms, &b.session_id)));
        out
    }

    pub fn transcript(&self, session_id: &str) -> ApiResult<Vec<adaptest_core::engine::SessionEvent>> {
        let slot = self.slot(session_id)?;
        let slot = slot.lock().expect("session lock");
        Ok(slot.state.transcript().to_vec())
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// Binds, reports the bound address through `on_bound`, and serves until
/// Ctrl-C.
pub async fn serve(service: Arc<Service>, addr: SocketAddr, on_bound: impl FnOnce(SocketAddr)) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::Runtime(format!("cannot bind {addr}: {e}")))?;
    let local = listener
        .local_addr()
        .map_err(|e| Error::Runtime(e.to_string()))?;
    on_bound(local);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::Runtime(e.to_string()))
}
