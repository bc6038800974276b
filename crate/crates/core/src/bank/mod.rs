//! Item and bank data model, validation, and canonical vocabularies.

mod synth;
pub mod vocab;

pub use synth::{synth_bank, SynthSpec};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irt::ItemParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    /// Enters the ability posterior.
    Scored,
    /// Administered for test composition but never scored.
    UnscoredNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFamily {
    VlatLike,
    CalviLike,
    Custom,
}

/// One `(dimension, value)` pair of a non-psychometric feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureTag {
    pub dimension: String,
    pub value: String,
}

impl FeatureTag {
    pub fn new(dimension: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            dimension: dimension.into(),
            value: value.into(),
        }
    }
}

impl fmt::Display for FeatureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.dimension, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    pub image_ref: String,
    pub alt_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: String,
    pub kind: ItemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ItemParams>,
    pub features: BTreeMap<String, String>,
    pub stimulus: Stimulus,
    pub question: String,
    pub options: Vec<String>,
    pub correct_index: usize,
    pub has_cbi_option: bool,
}

impl Item {
    pub fn is_scored(&self) -> bool {
        self.kind == ItemKind::Scored
    }

    /// Feature tags on the given dimensions, in dimension order.
    pub fn tags_on<'a>(&'a self, dimensions: &'a [String]) -> impl Iterator<Item = FeatureTag> + 'a {
        dimensions.iter().filter_map(move |d| {
            self.features
                .get(d)
                .map(|v| FeatureTag::new(d.clone(), v.clone()))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaPrior {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemBank {
    pub bank_id: String,
    pub test_family: TestFamily,
    pub theta_prior: ThetaPrior,
    pub covering_dimensions: Vec<String>,
    pub vocabularies: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub static_reference_ids: Option<Vec<String>>,
    pub items: Vec<Item>,
}

/// Which bank invariant a violation breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    DuplicateId,
    MissingParams,
    UnexpectedParams,
    InvalidParams,
    TooFewOptions,
    CorrectIndexOutOfRange,
    UnknownFeatureDimension,
    UnknownFeatureValue,
    MissingVocabulary,
    UncoverableFeature,
    UnknownReferenceId,
    InvalidPrior,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub item_id: Option<String>,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.item_id {
            Some(id) => write!(f, "item {id}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl Violation {
    fn new(item_id: Option<&str>, rule: Rule, message: impl Into<String>) -> Self {
        Self {
            item_id: item_id.map(ToString::to_string),
            rule,
            message: message.into(),
        }
    }
}

/// Every invariant violation in `bank`; empty iff the bank is valid.
pub fn validate_bank(bank: &ItemBank) -> Vec<Violation> {
    let mut out = Vec::new();

    let prior = bank.theta_prior;
    if !prior.mean.is_finite() || !(prior.sd > 0.0) || !prior.sd.is_finite() {
        out.push(Violation::new(
            None,
            Rule::InvalidPrior,
            alloc::format!(
                "theta prior needs finite mean and positive sd (mean={}, sd={})",
                prior.mean,
                prior.sd
            ),
        ));
    }

    for dim in &bank.covering_dimensions {
        if !bank.vocabularies.contains_key(dim) {
            out.push(Violation::new(
                None,
                Rule::MissingVocabulary,
                alloc::format!("covering dimension {dim} has no vocabulary"),
            ));
        }
    }

    let mut seen = BTreeSet::new();
    for item in &bank.items {
        let id = Some(item.item_id.as_str());
        if !seen.insert(item.item_id.as_str()) {
            out.push(Violation::new(id, Rule::DuplicateId, "duplicate item id"));
        }
        match (&item.kind, &item.params) {
            (ItemKind::Scored, None) => {
                out.push(Violation::new(id, Rule::MissingParams, "scored item missing params"))
            }
            (ItemKind::Scored, Some(p)) => {
                if !p.a.is_finite() || !p.b.is_finite() {
                    out.push(Violation::new(id, Rule::InvalidParams, "params must be finite"));
                } else if p.a <= 0.0 {
                    out.push(Violation::new(
                        id,
                        Rule::InvalidParams,
                        "discrimination must be positive",
                    ));
                }
            }
            (ItemKind::UnscoredNormal, Some(_)) => out.push(Violation::new(
                id,
                Rule::UnexpectedParams,
                "unscored item must not carry params",
            )),
            (ItemKind::UnscoredNormal, None) => {}
        }
        if item.options.len() < 2 {
            out.push(Violation::new(id, Rule::TooFewOptions, "item needs at least 2 options"));
        }
        if item.correct_index >= item.options.len() {
            out.push(Violation::new(
                id,
                Rule::CorrectIndexOutOfRange,
                alloc::format!(
                    "correct_index {} out of range for {} options",
                    item.correct_index,
                    item.options.len()
                ),
            ));
        }
        for (dim, value) in &item.features {
            match bank.vocabularies.get(dim) {
                None => out.push(Violation::new(
                    id,
                    Rule::UnknownFeatureDimension,
                    alloc::format!("unknown feature dimension {dim}"),
                )),
                Some(vocab) if !vocab.iter().any(|v| v == value) => out.push(Violation::new(
                    id,
                    Rule::UnknownFeatureValue,
                    alloc::format!("feature value not in vocabulary: {dim}={value}"),
                )),
                Some(_) => {}
            }
        }
    }

    for dim in &bank.covering_dimensions {
        let Some(vocab) = bank.vocabularies.get(dim) else {
            continue;
        };
        for value in vocab {
            let covered = bank.items.iter().any(|item| {
                item.is_scored() && item.features.get(dim).is_some_and(|v| v == value)
            });
            if !covered {
                out.push(Violation::new(
                    None,
                    Rule::UncoverableFeature,
                    alloc::format!("feature uncoverable: {dim}={value}"),
                ));
            }
        }
    }

    if let Some(refs) = &bank.static_reference_ids {
        for id in refs {
            if !seen.contains(id.as_str()) {
                out.push(Violation::new(
                    Some(id),
                    Rule::UnknownReferenceId,
                    "static reference id not in bank",
                ));
            }
        }
    }

    out
}

impl ItemBank {
    /// Returns the bank unchanged if it satisfies every invariant.
    pub fn validated(self) -> Result<Self> {
        let violations = validate_bank(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidBank(violations))
        }
    }

    pub fn item(&self, item_id: &str) -> Option<&Item> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    pub fn index_of(&self, item_id: &str) -> Option<usize> {
        self.items.iter().position(|i| i.item_id == item_id)
    }

    pub fn scored_items(&self) -> impl Iterator<Item = &Item> {
        self.items.iter().filter(|i| i.is_scored())
    }

    pub fn unscored_items(&self) -> impl Iterator<Item = &Item> {
        self.items.iter().filter(|i| !i.is_scored())
    }

    /// Vocabulary pairs of the covering dimensions.
    pub fn coverage_targets(&self, dimensions: &[String]) -> Result<Vec<FeatureTag>> {
        let mut out = Vec::new();
        for dim in dimensions {
            for value in self.vocabulary(dim)? {
                out.push(FeatureTag::new(dim.clone(), value.clone()));
            }
        }
        Ok(out)
    }

    fn vocabulary(&self, dimension: &str) -> Result<&[String]> {
        self.vocabularies
            .get(dimension)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownDimension(dimension.into()))
    }
}

/// Vocabulary of a covering dimension, in declared order.
pub fn feature_values<'a>(bank: &'a ItemBank, dimension: &str) -> Result<&'a [String]> {
    if !bank.covering_dimensions.iter().any(|d| d == dimension) {
        return Err(Error::UnknownDimension(dimension.into()));
    }
    bank.vocabulary(dimension)
}
