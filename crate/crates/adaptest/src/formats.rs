//! On-disk formats: bank JSON, response-matrix CSV, transcript JSON lines,
//! score-pair CSV, and the CSV exports of simulations and MCMC draws.

use std::fs;
use std::io::Write;
use std::path::Path;

use adaptest_core::bank::{ItemBank, ItemKind};
use adaptest_core::calibration::{CalibrationResult, MatrixItem, ResponseMatrix};
use adaptest_core::engine::SessionEvent;
use adaptest_core::eval::{PairedObservation, RetestObservation};
use adaptest_core::irt::ItemParams;
use adaptest_core::mcmc::{McmcRun, PosteriorSummary};
use adaptest_core::sim::{RecoveryReport, SweepResult};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How unknown keys in a bank file are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeyPolicy {
    #[default]
    Strict,
    /// Unknown keys are dropped with a warning.
    Lenient,
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses a bank without checking its invariants. Returns the bank and the
/// paths of any unknown keys; under [`KeyPolicy::Strict`] those are an error.
pub fn parse_bank_unchecked(text: &str, path: &Path, policy: KeyPolicy) -> Result<(ItemBank, Vec<String>)> {
    let mut ignored = Vec::new();
    let de = &mut serde_json::Deserializer::from_str(text);
    let bank: ItemBank = serde_ignored::deserialize(de, |p| ignored.push(p.to_string()))
        .map_err(|e| Error::parse(path, e))?;
    if policy == KeyPolicy::Strict && !ignored.is_empty() {
        return Err(Error::UnknownKeys {
            path: path.to_path_buf(),
            keys: ignored,
        });
    }
    Ok((bank, ignored))
}

pub fn parse_bank(text: &str, path: &Path, policy: KeyPolicy) -> Result<(ItemBank, Vec<String>)> {
    let (bank, ignored) = parse_bank_unchecked(text, path, policy)?;
    Ok((bank.validated()?, ignored))
}

/// Loads and validates the bank at `path`.
pub fn load_bank(path: &Path, policy: KeyPolicy) -> Result<ItemBank> {
    let (bank, ignored) = parse_bank(&read_to_string(path)?, path, policy)?;
    for key in ignored {
        tracing::warn!(path = %path.display(), key, "ignoring unknown bank key");
    }
    Ok(bank)
}

pub fn bank_to_json(bank: &ItemBank) -> String {
    let mut s = serde_json::to_string_pretty(bank).expect("banks always serialize");
    s.push('\n');
    s
}

pub fn save_bank(path: &Path, bank: &ItemBank) -> Result<()> {
    write_file(path, bank_to_json(bank).as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a `person_id, item…` CSV with cells `0`, `1` or `NA`.
///
/// Item kinds come from `bank` when given; otherwise every column is scored.
pub fn read_response_matrix(path: &Path, bank: Option<&ItemBank>) -> Result<ResponseMatrix> {
    let text = read_to_string(path)?;
    parse_response_matrix(&text, path, bank)
}

pub fn parse_response_matrix(text: &str, path: &Path, bank: Option<&ItemBank>) -> Result<ResponseMatrix> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::parse(path, e))?.clone();
    if header.get(0) != Some("person_id") {
        return Err(Error::parse(path, "first column must be person_id"));
    }
    let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut persons = Vec::new();
    let mut cells = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        persons.push(record[0].to_string());
        for (col, cell) in record.iter().skip(1).enumerate() {
            cells.push(match cell {
                "1" => Some(true),
                "0" => Some(false),
                "NA" => None,
                other => {
                    return Err(Error::parse(
                        path,
                        format!("row {}, column {}: expected 0, 1 or NA, got {other:?}", row + 2, ids[col]),
                    ))
                }
            });
        }
    }
    let matrix = match bank {
        Some(bank) => ResponseMatrix::with_kinds_from(bank, persons, ids, cells)?,
        None => {
            let items = ids
                .into_iter()
                .map(|item_id| MatrixItem {
                    item_id,
                    kind: ItemKind::Scored,
                })
                .collect();
            ResponseMatrix::new(persons, items, cells)?
        }
    };
    Ok(matrix)
}

pub fn response_matrix_csv(m: &ResponseMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("person_id").chain(m.items().iter().map(|i| i.item_id.as_str()));
    w.write_record(header).expect("in-memory write");
    for (p, person) in m.persons().iter().enumerate() {
        let cells = m.row(p).iter().map(|c| match c {
            Some(true) => "1",
            Some(false) => "0",
            None => "NA",
        });
        w.write_record(std::iter::once(person.as_str()).chain(cells))
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn read_transcript(path: &Path) -> Result<Vec<SessionEvent>> {
    parse_transcript(&read_to_string(path)?, path)
}

pub fn parse_transcript(text: &str, path: &Path) -> Result<Vec<SessionEvent>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn event_line(event: &SessionEvent) -> String {
    let mut s = serde_json::to_string(event).expect("events always serialize");
    s.push('\n');
    s
}

pub fn transcript_jsonl(events: &[SessionEvent]) -> String {
    events.iter().map(event_line).collect()
}

#[derive(Debug, Deserialize)]
struct PairRow {
    person_id: String,
    theta_1: f64,
    se_1: f64,
    theta_2: f64,
    se_2: f64,
}

fn read_pairs(path: &Path) -> Result<Vec<PairRow>> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::parse(path, format!("row {}: {e}", i + 2))))
        .collect()
}

/// Test-retest scores; occasion 1 then occasion 2.
pub fn read_retest(path: &Path) -> Result<Vec<RetestObservation>> {
    Ok(read_pairs(path)?
        .into_iter()
        .map(|r| RetestObservation {
            person_id: r.person_id,
            theta_t1: r.theta_1,
            se_t1: r.se_1,
            theta_t2: r.theta_2,
            se_t2: r.se_2,
        })
        .collect())
}

/// Paired scores; the original test in columns 1, the adaptive one in 2.
pub fn read_paired(path: &Path) -> Result<Vec<PairedObservation>> {
    Ok(read_pairs(path)?
        .into_iter()
        .map(|r| PairedObservation {
            person_id: r.person_id,
            theta_original: r.theta_1,
            se_original: r.se_1,
            theta_adaptive: r.theta_2,
            se_adaptive: r.se_2,
        })
        .collect())
}

pub fn retest_csv(obs: &[RetestObservation]) -> String {
    let mut out = String::from("person_id,theta_1,se_1,theta_2,se_2\n");
    for o in obs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            o.person_id, o.theta_t1, o.se_t1, o.theta_t2, o.se_t2
        ));
    }
    out
}

pub fn paired_csv(obs: &[PairedObservation]) -> String {
    let mut out = String::from("person_id,theta_1,se_1,theta_2,se_2\n");
    for o in obs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            o.person_id, o.theta_original, o.se_original, o.theta_adaptive, o.se_adaptive
        ));
    }
    out
}

pub fn sweep_csv(sweep: &SweepResult) -> String {
    let mut out = String::from("length,person,rel_se_diff\n");
    for l in &sweep.lengths {
        for (p, v) in l.values.iter().enumerate() {
            out.push_str(&format!("{},{p},{v}\n", l.length));
        }
    }
    out
}

pub fn recovery_csv(report: &RecoveryReport) -> String {
    let mut out = String::from("person,mistake_step,recovery_length,censored\n");
    for p in &report.persons {
        for e in &p.events {
            let len = e.recovery_length.map(|l| l.to_string()).unwrap_or_else(|| "NA".into());
            out.push_str(&format!("{},{},{len},{}\n", p.person, e.mistake_step, e.censored()));
        }
    }
    out
}

/// Kept draws, one row per chain and iteration.
pub fn draws_csv(run: &McmcRun) -> String {
    let mut out = String::from("chain,iter");
    for n in &run.names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    let n_chains = run.draws.first().map_or(0, Vec::len);
    for c in 0..n_chains {
        for i in 0..run.draws[0][c].len() {
            out.push_str(&format!("{c},{i}"));
            for param in &run.draws {
                out.push_str(&format!(",{}", param[c][i]));
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentItem {
    pub item_id: String,
    pub params: ItemParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentEstimate {
    pub item_id: String,
    pub a: PosteriorSummary,
    pub b: PosteriorSummary,
    pub quasi_separated: bool,
}

/// Calibration output whose `items` can be merged into a bank file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankFragment {
    pub items: Vec<FragmentItem>,
    pub estimates: Vec<FragmentEstimate>,
    pub warnings: Vec<String>,
}

impl BankFragment {
    pub fn from_result(result: &CalibrationResult) -> Self {
        Self {
            items: result
                .items
                .iter()
                .map(|i| FragmentItem {
                    item_id: i.item_id.clone(),
                    params: i.params(),
                })
                .collect(),
            estimates: result
                .items
                .iter()
                .map(|i| FragmentEstimate {
                    item_id: i.item_id.clone(),
                    a: i.a,
                    b: i.b,
                    quasi_separated: i.quasi_separated,
                })
                .collect(),
            warnings: result.warnings.clone(),
        }
    }

    /// Copies the fitted parameters into `bank` and revalidates it.
    pub fn apply(&self, mut bank: ItemBank) -> Result<ItemBank> {
        for fi in &self.items {
            let item = bank
                .items
                .iter_mut()
                .find(|i| i.item_id == fi.item_id)
                .ok_or_else(|| adaptest_core::Error::UnknownItem(fi.item_id.clone()))?;
            item.params = Some(fi.params);
        }
        Ok(bank.validated()?)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output always serializes");
    s.push('\n');
    s
}

/// Writes `bytes` to `path`, or to stdout when there is none.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_file(p, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}
