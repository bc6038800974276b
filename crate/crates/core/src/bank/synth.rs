//! Synthetic banks shaped like the two reference test families.
//!
//! Parameters are drawn from `a ~ LogNormal(ln 1, 0.5)` and
//! `b ~ Normal(0, 1)`. They stand in for published calibrations and carry no
//! claim to match any real item.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use super::vocab::{self, CANNOT_BE_INFERRED};
use super::{Item, ItemBank, ItemKind, Stimulus, TestFamily, ThetaPrior};
use crate::error::{Error, Result};
use crate::irt::ItemParams;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub family: TestFamily,
    pub bank_id: String,
    pub n_scored: usize,
    pub n_unscored: usize,
    /// Unscored items that carry the "cannot be inferred" option as a distractor.
    pub n_cbi_unscored: usize,
    /// Covering dimensions with their vocabularies, in order.
    pub vocabularies: Vec<(String, Vec<String>)>,
    pub log_a_mean: f64,
    pub log_a_sd: f64,
    pub b_mean: f64,
    pub b_sd: f64,
    pub theta_prior: ThetaPrior,
    /// Size of the fixed reference form; `None` means no reference form.
    pub static_reference_len: Option<usize>,
}

fn owned(values: &[&str]) -> Vec<String> {
    values.iter().map(|s| s.to_string()).collect()
}

impl SynthSpec {
    /// 53 scored items over 12 chart types and 8 tasks; the whole bank is
    /// the reference form.
    pub fn vlat_like() -> Self {
        Self {
            family: TestFamily::VlatLike,
            bank_id: "synthetic-vlat".into(),
            n_scored: 53,
            n_unscored: 0,
            n_cbi_unscored: 0,
            vocabularies: alloc::vec![
                (vocab::CHART_TYPE.into(), owned(&vocab::VLAT_CHART_TYPES)),
                (vocab::TASK.into(), owned(&vocab::VLAT_TASKS)),
            ],
            log_a_mean: 0.0,
            log_a_sd: 0.5,
            b_mean: 0.0,
            b_sd: 1.0,
            theta_prior: ThetaPrior { mean: 0.0, sd: 1.0 },
            static_reference_len: Some(53),
        }
    }

    /// 45 trick items over 11 misleaders plus 15 normal items, 4 of which
    /// show the "cannot be inferred" distractor; a 15-item reference form.
    pub fn calvi_like() -> Self {
        Self {
            family: TestFamily::CalviLike,
            bank_id: "synthetic-calvi".into(),
            n_scored: 45,
            n_unscored: 15,
            n_cbi_unscored: 4,
            vocabularies: alloc::vec![(vocab::MISLEADER.into(), owned(&vocab::CALVI_MISLEADERS))],
            log_a_mean: 0.0,
            log_a_sd: 0.5,
            b_mean: 0.0,
            b_sd: 1.0,
            theta_prior: ThetaPrior {
                mean: -1.0,
                sd: 1.0,
            },
            static_reference_len: Some(15),
        }
    }

    pub fn for_family(family: TestFamily) -> Result<Self> {
        match family {
            TestFamily::VlatLike => Ok(Self::vlat_like()),
            TestFamily::CalviLike => Ok(Self::calvi_like()),
            TestFamily::Custom => Err(Error::InfeasibleSpec(
                "custom banks have no default synthetic spec".into(),
            )),
        }
    }

    fn total_values(&self) -> usize {
        self.vocabularies.iter().map(|(_, v)| v.len()).sum()
    }
}

fn round4(x: f64) -> f64 {
    crate::math::floor(x * 1e4 + 0.5) / 1e4
}

/// Deterministic synthetic bank for `seed`.
pub fn synth_bank(seed: u64, spec: &SynthSpec) -> Result<ItemBank> {
    if spec.n_scored < spec.total_values() {
        return Err(Error::InfeasibleSpec(format!(
            "{} scored items cannot cover {} feature values",
            spec.n_scored,
            spec.total_values()
        )));
    }
    if spec.n_cbi_unscored > spec.n_unscored {
        return Err(Error::InfeasibleSpec(format!(
            "{} flagged unscored items requested but only {} unscored",
            spec.n_cbi_unscored, spec.n_unscored
        )));
    }
    if spec.vocabularies.iter().any(|(_, v)| v.is_empty()) {
        return Err(Error::InfeasibleSpec("empty vocabulary".into()));
    }
    if let Some(len) = spec.static_reference_len {
        let widest = spec.vocabularies.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        if len > spec.n_scored || len < widest {
            return Err(Error::InfeasibleSpec(format!(
                "reference form of {len} items is not constructible"
            )));
        }
    }
    if !(spec.log_a_sd >= 0.0) || !(spec.b_sd >= 0.0) {
        return Err(Error::InfeasibleSpec("parameter spreads must be non-negative".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_dist = LogNormal::new(spec.log_a_mean, spec.log_a_sd)
        .map_err(|e| Error::InfeasibleSpec(format!("{e}")))?;
    let b_dist =
        Normal::new(spec.b_mean, spec.b_sd).map_err(|e| Error::InfeasibleSpec(format!("{e}")))?;

    // Feature assignment: the first `widest` items walk every vocabulary so
    // each value is carried at least once; the rest draw uniformly.
    let widest = spec.vocabularies.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let mut assignments: Vec<BTreeMap<String, String>> = Vec::with_capacity(spec.n_scored);
    let offsets: Vec<usize> = spec
        .vocabularies
        .iter()
        .map(|(_, v)| rng.random_range(0..v.len()))
        .collect();
    for i in 0..spec.n_scored {
        let mut features = BTreeMap::new();
        for (d, (dim, values)) in spec.vocabularies.iter().enumerate() {
            let value = if i < widest {
                &values[(i + offsets[d]) % values.len()]
            } else {
                &values[rng.random_range(0..values.len())]
            };
            features.insert(dim.clone(), value.clone());
        }
        assignments.push(features);
    }
    assignments.shuffle(&mut rng);

    let mut items = Vec::with_capacity(spec.n_scored + spec.n_unscored);
    for (i, features) in assignments.into_iter().enumerate() {
        let a = round4(a_dist.sample(&mut rng)).max(1e-4);
        let b = round4(b_dist.sample(&mut rng));
        let n_options = 3 + rng.random_range(0..2usize);
        let mut options: Vec<String> =
            (0..n_options).map(|k| format!("Option {}", (b'A' + k as u8) as char)).collect();
        let with_cbi = spec.family == TestFamily::CalviLike && rng.random::<f64>() < 0.3;
        let correct_index = if with_cbi {
            options.push(CANNOT_BE_INFERRED.into());
            options.len() - 1
        } else {
            rng.random_range(0..n_options)
        };
        let id = format!("s{:03}", i + 1);
        items.push(Item {
            item_id: id.clone(),
            kind: ItemKind::Scored,
            params: Some(ItemParams { a, b }),
            features,
            stimulus: Stimulus {
                image_ref: format!("synthetic://{id}.png"),
                alt_text: format!("Synthetic chart for item {id}"),
            },
            question: format!("Synthetic question for item {id}"),
            options,
            correct_index,
            has_cbi_option: with_cbi,
        });
    }

    for i in 0..spec.n_unscored {
        let flagged = i < spec.n_cbi_unscored;
        let n_options = 3 + rng.random_range(0..2usize);
        let mut options: Vec<String> =
            (0..n_options).map(|k| format!("Option {}", (b'A' + k as u8) as char)).collect();
        let correct_index = rng.random_range(0..n_options);
        if flagged {
            options.push(CANNOT_BE_INFERRED.into());
        }
        let id = format!("u{:03}", i + 1);
        items.push(Item {
            item_id: id.clone(),
            kind: ItemKind::UnscoredNormal,
            params: None,
            features: BTreeMap::new(),
            stimulus: Stimulus {
                image_ref: format!("synthetic://{id}.png"),
                alt_text: format!("Synthetic chart for item {id}"),
            },
            question: format!("Synthetic question for item {id}"),
            options,
            correct_index,
            has_cbi_option: flagged,
        });
    }

    let static_reference_ids = spec
        .static_reference_len
        .map(|len| reference_form(&items[..spec.n_scored], spec, len, &mut rng));

    let bank = ItemBank {
        bank_id: spec.bank_id.clone(),
        test_family: spec.family,
        theta_prior: spec.theta_prior,
        covering_dimensions: spec.vocabularies.iter().map(|(d, _)| d.clone()).collect(),
        vocabularies: spec.vocabularies.iter().cloned().collect(),
        static_reference_ids,
        items,
    };
    bank.validated()
}

/// A fixed form that covers every value: one random carrier per uncovered
/// value, then random fill, returned in bank order.
fn reference_form(
    scored: &[Item],
    spec: &SynthSpec,
    len: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    let mut chosen = alloc::vec![false; scored.len()];
    let mut count = 0;
    for (dim, values) in &spec.vocabularies {
        for value in values {
            let already = scored
                .iter()
                .zip(&chosen)
                .any(|(it, &c)| c && it.features.get(dim) == Some(value));
            if already {
                continue;
            }
            let carriers: Vec<usize> = scored
                .iter()
                .enumerate()
                .filter(|(_, it)| it.features.get(dim) == Some(value))
                .map(|(i, _)| i)
                .collect();
            let pick = carriers[rng.random_range(0..carriers.len())];
            chosen[pick] = true;
            count += 1;
        }
    }
    let mut rest: Vec<usize> = (0..scored.len()).filter(|&i| !chosen[i]).collect();
    rest.shuffle(rng);
    for i in rest.into_iter().take(len.saturating_sub(count)) {
        chosen[i] = true;
    }
    scored
        .iter()
        .zip(chosen)
        .filter(|(_, c)| *c)
        .map(|(it, _)| it.item_id.clone())
        .collect()
}
