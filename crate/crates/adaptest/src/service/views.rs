//! Response bodies. Nothing here carries answer keys, item parameters,
//! item kinds or feature tags; the types are built field by field from bank
//! items so that adding a field to `Item` cannot leak it.

use adaptest_core::bank::{Item, Stimulus};
use adaptest_core::engine::{SessionState, SessionStatus};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicItemView {
    pub item_id: String,
    pub stimulus: Stimulus,
    pub question: String,
    pub options: Vec<String>,
    /// 1-based.
    pub position: usize,
    pub total_length: usize,
}

impl PublicItemView {
    pub fn new(item: &Item, position: usize, total_length: usize) -> Self {
        Self {
            item_id: item.item_id.clone(),
            stimulus: item.stimulus.clone(),
            question: item.question.clone(),
            options: item.options.clone(),
            position,
            total_length,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub answered: usize,
    pub total: usize,
}

impl Progress {
    pub fn of(state: &SessionState) -> Self {
        Self {
            answered: state.administered().len(),
            total: state.config().total_length(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub status: SessionStatus,
    pub item: PublicItemView,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub bank_id: String,
    pub status: SessionStatus,
    /// The pending item; absent once the session is completed.
    pub item: Option<PublicItemView>,
    pub progress: Progress,
    pub results_visible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerAccepted {
    pub status: SessionStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next_item: Option<PublicItemView>,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageEntry {
    pub dimension: String,
    pub value: String,
    /// Scored items administered with this value.
    pub administered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub session_id: String,
    pub theta_mean: f64,
    pub theta_se: f64,
    pub raw_correctness: f64,
    pub n_scored: usize,
    pub n_correct: usize,
    pub administered: usize,
    pub coverage: Vec<CoverageEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankSummary {
    pub bank_id: String,
    pub test_family: adaptest_core::bank::TestFamily,
    pub n_items: usize,
    pub total_length: usize,
    pub results_visible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionListing {
    pub session_id: String,
    pub bank_id: String,
    pub status: SessionStatus,
    pub progress: Progress,
    pub created_ms: u64,
    pub updated_ms: u64,
}
