use alloc::string::String;
use alloc::vec::Vec;

use crate::bank::Violation;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty item set")]
    EmptyItemSet,
    #[error("degenerate information")]
    DegenerateInformation,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid truncation: {0}")]
    GridTruncation(String),
    #[error("bank validation failed: {}", summarize(.0))]
    InvalidBank(Vec<Violation>),
    #[error("unknown dimension: {0}")]
    UnknownDimension(String),
    #[error("unknown item: {0}")]
    UnknownItem(String),
    #[error("infeasible bank spec: {0}")]
    InfeasibleSpec(String),
    #[error("length below coverage minimum: scored length {length} < minimum {minimum}")]
    LengthBelowCoverageMinimum { length: usize, minimum: usize },
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("coverage infeasible: no available item covers any of {uncovered} uncovered features")]
    CoverageInfeasible { uncovered: usize },
    #[error("item bank exhausted")]
    BankExhausted,
    #[error("too few unscored items: need {needed}, have {available}")]
    TooFewUnscored { needed: usize, available: usize },
    #[error("out-of-order answer: pending item is {pending:?}, got {got}")]
    OutOfOrderAnswer { pending: Option<String>, got: String },
    #[error("session already completed")]
    SessionCompleted,
    #[error("invalid option index {index} for item with {n_options} options")]
    InvalidOption { index: usize, n_options: usize },
    #[error("not terminated")]
    NotTerminated,
    #[error("replay diverged at event {index}: {reason}")]
    ReplayDiverged { index: usize, reason: String },
    #[error("degenerate chains")]
    DegenerateChains,
    #[error("insufficient draws: {0}")]
    InsufficientDraws(String),
    #[error("non-finite log-posterior at initialization")]
    NonFiniteInit,
    #[error("invalid data: {0}")]
    InvalidData(String),
}

fn summarize(violations: &[Violation]) -> String {
    let mut out = String::new();
    for (i, v) in violations.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        out.push_str(&alloc::format!("{v}"));
    }
    out
}

pub type Result<T> = core::result::Result<T, Error>;
