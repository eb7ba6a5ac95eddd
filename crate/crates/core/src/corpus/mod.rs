//! Dialog data model, corpus ingestion, outcome ratios and labels, stage
//! splitting, filtering and deterministic train/dev/test splits.

mod raw;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tactic::Role;

pub use raw::convert_raw_dialog;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("need at least {needed} labeled training dialogs, found {found}")]
    TooFewLabeled { needed: usize, found: usize },
    #[error("invalid split fractions dev={dev} test={test}")]
    BadFractions { dev: f64, test: f64 },
    #[error("unknown corpus format `{0}` (expected raw or normalized)")]
    UnknownFormat(String),
    #[error("failed to serialize dialog: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Product category of a listing. `house` is accepted as an alias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Car,
    #[serde(alias = "house")]
    Housing,
    Electronics,
    Bike,
    Furniture,
    Phone,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Car,
        Category::Housing,
        Category::Electronics,
        Category::Bike,
        Category::Furniture,
        Category::Phone,
    ];

    pub fn index(self) -> usize {
        Category::ALL.iter().position(|c| *c == self).unwrap()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Car => "car",
            Category::Housing => "housing",
            Category::Electronics => "electronics",
            Category::Bike => "bike",
            Category::Furniture => "furniture",
            Category::Phone => "phone",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown product category `{0}`")]
pub struct UnknownCategory(pub String);

impl FromStr for Category {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "car" => Ok(Category::Car),
            "housing" | "house" => Ok(Category::Housing),
            "electronics" => Ok(Category::Electronics),
            "bike" => Ok(Category::Bike),
            "furniture" => Ok(Category::Furniture),
            "phone" => Ok(Category::Phone),
            other => Err(UnknownCategory(other.to_string())),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A product listing plus the buyer's private target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub id: String,
    pub title: String,
    pub description: String,
    pub category: Category,
    pub list_price: f64,
    pub buyer_target: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.list_price.is_finite() && self.list_price > 0.0) {
            return Err(format!("list_price must be positive, got {}", self.list_price));
        }
        if !(self.buyer_target.is_finite() && self.buyer_target > 0.0) {
            return Err(format!(
                "buyer_target must be positive, got {}",
                self.buyer_target
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Message(String),
    Offer(f64),
    Accept,
    Reject,
    Quit,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Message(_) => "message",
            EventKind::Offer(_) => "offer",
            EventKind::Accept => "accept",
            EventKind::Reject => "reject",
            EventKind::Quit => "quit",
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            EventKind::Message(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_message(&self) -> bool {
        matches!(self, EventKind::Message(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EventRepr", into = "EventRepr")]
pub struct Event {
    pub index: usize,
    pub speaker: Role,
    pub kind: EventKind,
}

impl Event {
    pub fn new(index: usize, speaker: Role, kind: EventKind) -> Self {
        Self {
            index,
            speaker,
            kind,
        }
    }
}

/// Flat wire form of an [`Event`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct EventRepr {
    index: usize,
    speaker: Role,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    price: Option<f64>,
}

impl TryFrom<EventRepr> for Event {
    type Error = String;

    fn try_from(r: EventRepr) -> Result<Self, Self::Error> {
        let kind = match r.kind.as_str() {
            "message" => EventKind::Message(
                r.text
                    .ok_or_else(|| format!("message event {} has no text", r.index))?,
            ),
            "offer" => {
                let price = r
                    .price
                    .ok_or_else(|| format!("offer event {} has no price", r.index))?;
                if !price.is_finite() || price < 0.0 {
                    return Err(format!("offer event {} has invalid price {price}", r.index));
                }
                EventKind::Offer(price)
            }
            "accept" => EventKind::Accept,
            "reject" => EventKind::Reject,
            "quit" => EventKind::Quit,
            other => return Err(format!("unknown event kind `{other}`")),
        };
        Ok(Event {
            index: r.index,
            speaker: r.speaker,
            kind,
        })
    }
}

impl From<Event> for EventRepr {
    fn from(e: Event) -> Self {
        let name = e.kind.name().to_string();
        let (text, price) = match e.kind {
            EventKind::Message(t) => (Some(t), None),
            EventKind::Offer(p) => (None, Some(p)),
            _ => (None, None),
        };
        EventRepr {
            index: e.index,
            speaker: e.speaker,
            kind: name,
            text,
            price,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outcome {
    Agreed { sale_price: f64 },
    NoDeal,
}

impl Outcome {
    pub fn sale_price(&self) -> Option<f64> {
        match self {
            Outcome::Agreed { sale_price } => Some(*sale_price),
            Outcome::NoDeal => None,
        }
    }

    /// Outcome implied by an event log: agreed at the price of the offer
    /// that the first `accept` answers, otherwise no deal.
    pub fn derive(events: &[Event]) -> Result<Outcome, String> {
        let mut pending: Option<f64> = None;
        for e in events {
            match e.kind {
                EventKind::Offer(p) => pending = Some(p),
                EventKind::Accept => {
                    return match pending {
                        Some(p) => Ok(Outcome::Agreed { sale_price: p }),
                        None => Err(format!("accept at event {} without an offer", e.index)),
                    };
                }
                EventKind::Reject => pending = None,
                _ => {}
            }
        }
        Ok(Outcome::NoDeal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialog {
    pub id: String,
    pub scenario: Scenario,
    pub events: Vec<Event>,
    pub outcome: Outcome,
}

impl Dialog {
    /// Checks every dialog invariant; returns the first violation.
    pub fn validate(&self) -> Result<(), String> {
        self.scenario.validate()?;
        let mut last_msg: Option<Role> = None;
        for (i, e) in self.events.iter().enumerate() {
            if e.index != i {
                return Err(format!("event index {} at position {i}", e.index));
            }
            if e.kind.is_message() {
                if last_msg == Some(e.speaker) {
                    return Err(format!(
                        "consecutive messages by {} at event {i}",
                        e.speaker
                    ));
                }
                last_msg = Some(e.speaker);
            }
        }
        let derived = Outcome::derive(&self.events)?;
        if derived != self.outcome {
            return Err(format!(
                "declared outcome {:?} disagrees with event log ({:?})",
                self.outcome, derived
            ));
        }
        Ok(())
    }

    pub fn messages(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.kind.is_message())
    }

    pub fn message_count(&self) -> usize {
        self.messages().count()
    }

    /// True when the dialog ended without any offer decision.
    pub fn is_incomplete(&self) -> bool {
        !self
            .events
            .iter()
            .any(|e| matches!(e.kind, EventKind::Accept | EventKind::Reject))
    }

    pub fn to_json_line(&self) -> Result<String, CorpusError> {
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Raw,
    Normalized,
}

impl FromStr for CorpusFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(CorpusFormat::Raw),
            "normalized" => Ok(CorpusFormat::Normalized),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

/// A dialog that failed schema or invariant checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// Position in the input (line number for JSONL, array index for arrays).
    pub position: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedCorpus {
    pub dialogs: Vec<Dialog>,
    pub rejected: Vec<Rejection>,
}

/// Parses a corpus. Normalized input is one dialog per line; a JSON array
/// of normalized dialogs is also accepted. Raw input is the public
/// dataset's JSON array.
pub fn parse_corpus(bytes: &[u8], format: CorpusFormat) -> Result<ParsedCorpus, CorpusError> {
    let first = bytes.iter().position(|b| !b.is_ascii_whitespace());
    let is_array = first.map(|i| bytes[i] == b'[').unwrap_or(false);
    match (format, is_array) {
        (_, true) => {
            let items: Vec<serde_json::Value> =
                serde_json::from_slice(bytes).map_err(|e| json_error(bytes, 0, &e))?;
            let mut out = ParsedCorpus::default();
            for (pos, item) in items.into_iter().enumerate() {
                let converted = match format {
                    CorpusFormat::Raw => convert_raw_dialog(&item),
                    CorpusFormat::Normalized => normalized_from_value(item),
                };
                push_checked(&mut out, pos, converted);
            }
            Ok(out)
        }
        (CorpusFormat::Normalized, false) => {
            let mut out = ParsedCorpus::default();
            let mut offset = 0usize;
            for (lineno, line) in bytes.split(|b| *b == b'\n').enumerate() {
                let start = offset;
                offset += line.len() + 1;
                if line.iter().all(|b| b.is_ascii_whitespace()) {
                    continue;
                }
                let value: serde_json::Value =
                    serde_json::from_slice(line).map_err(|e| json_error(line, start, &e))?;
                push_checked(&mut out, lineno + 1, normalized_from_value(value));
            }
            Ok(out)
        }
        (CorpusFormat::Raw, false) => {
            if first.is_none() {
                return Ok(ParsedCorpus::default());
            }
            let value: serde_json::Value =
                serde_json::from_slice(bytes).map_err(|e| json_error(bytes, 0, &e))?;
            let mut out = ParsedCorpus::default();
            push_checked(&mut out, 0, convert_raw_dialog(&value));
            Ok(out)
        }
    }
}

fn normalized_from_value(value: serde_json::Value) -> Result<Dialog, (Option<String>, String)> {
    let id = value
        .get("id")
        .and_then(|v| v.as_str())
        .map(str::to_string);

    #[derive(Deserialize)]
    struct Loose {
        id: String,
        scenario: Scenario,
        events: Vec<Event>,
        outcome: Option<Outcome>,
    }

    let loose: Loose = serde_json::from_value(value).map_err(|e| (id.clone(), e.to_string()))?;
    let derived = Outcome::derive(&loose.events).map_err(|r| (id.clone(), r))?;
    Ok(Dialog {
        id: loose.id,
        scenario: loose.scenario,
        events: loose.events,
        outcome: loose.outcome.unwrap_or(derived),
    })
}

fn push_checked(
    out: &mut ParsedCorpus,
    position: usize,
    converted: Result<Dialog, (Option<String>, String)>,
) {
    match converted {
        Ok(d) => match d.validate() {
            Ok(()) => out.dialogs.push(d),
            Err(reason) => out.rejected.push(Rejection {
                position,
                id: Some(d.id),
                reason,
            }),
        },
        Err((id, reason)) => out.rejected.push(Rejection {
            position,
            id,
            reason,
        }),
    }
}

fn json_error(slice: &[u8], base: usize, e: &serde_json::Error) -> CorpusError {
    // serde_json reports 1-based line/column; turn that into a byte offset.
    let mut offset = 0usize;
    let mut line = 1usize;
    for (i, b) in slice.iter().enumerate() {
        if line == e.line() {
            offset = i;
            break;
        }
        if *b == b'\n' {
            line += 1;
        }
        offset = i + 1;
    }
    let offset = base + offset + e.column().saturating_sub(1);
    CorpusError::Json {
        offset,
        message: e.to_string(),
    }
}

/// Serializes dialogs as normalized JSON lines.
pub fn to_jsonl(dialogs: &[Dialog]) -> Result<String, CorpusError> {
    let mut out = String::new();
    for d in dialogs {
        out.push_str(&d.to_json_line()?);
        out.push('\n');
    }
    Ok(out)
}

/// Sale-to-list ratio smoothed by the buyer target:
/// `(sale - target) / (list - target)`. `None` without a deal or when
/// list price equals the target.
pub fn compute_ratio(d: &Dialog) -> Option<f64> {
    let sale = d.outcome.sale_price()?;
    sale_to_list(sale, d.scenario.list_price, d.scenario.buyer_target)
}

pub fn sale_to_list(sale: f64, list_price: f64, buyer_target: f64) -> Option<f64> {
    let denom = list_price - buyer_target;
    if denom == 0.0 {
        return None;
    }
    Some((sale - buyer_target) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessLabel {
    Negative,
    Excluded,
    Positive,
}

impl SuccessLabel {
    pub fn as_bool(self) -> Option<bool> {
        match self {
            SuccessLabel::Positive => Some(true),
            SuccessLabel::Negative => Some(false),
            SuccessLabel::Excluded => None,
        }
    }
}

pub const DEFAULT_TAIL_FRACTION: f64 = 0.22;
pub const MIN_LABELED_DIALOGS: usize = 10;

/// Cut points learned from the training ratios. Dev and test reuse them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeThresholds {
    pub lower: f64,
    pub upper: f64,
}

impl OutcomeThresholds {
    /// Nearest-rank cut points: `lower` is the k-th smallest ratio and
    /// `upper` the k-th largest, with `k = ceil(tail * n)`.
    pub fn fit(ratios: &[f64], tail: f64) -> Result<Self, CorpusError> {
        if ratios.len() < MIN_LABELED_DIALOGS {
            return Err(CorpusError::TooFewLabeled {
                needed: MIN_LABELED_DIALOGS,
                found: ratios.len(),
            });
        }
        let mut sorted = ratios.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let k = nearest_rank(tail, n);
        Ok(Self {
            lower: sorted[k - 1],
            upper: sorted[n - k],
        })
    }

    pub fn label(&self, ratio: Option<f64>) -> SuccessLabel {
        match ratio {
            Some(r) if r >= self.upper => SuccessLabel::Positive,
            Some(r) if r <= self.lower => SuccessLabel::Negative,
            _ => SuccessLabel::Excluded,
        }
    }
}

/// `ceil(fraction * n)` clamped to `1..=n`, computed in integer
/// thousandths so that e.g. 0.22 * 100 is exactly 22.
pub fn nearest_rank(fraction: f64, n: usize) -> usize {
    let milli = (fraction * 1000.0).round() as usize;
    let k = (milli * n).div_ceil(1000);
    k.clamp(1, n.max(1))
}

/// Labels training dialogs by the top/bottom tail rule and returns the
/// thresholds for reuse on other splits.
pub fn label_outcomes(
    train: &[Dialog],
    tail: f64,
) -> Result<(OutcomeThresholds, BTreeMap<String, SuccessLabel>), CorpusError> {
    let ratios: Vec<f64> = train.iter().filter_map(compute_ratio).collect();
    let thresholds = OutcomeThresholds::fit(&ratios, tail)?;
    Ok((thresholds, apply_labels(&thresholds, train)))
}

pub fn apply_labels(
    thresholds: &OutcomeThresholds,
    dialogs: &[Dialog],
) -> BTreeMap<String, SuccessLabel> {
    dialogs
        .iter()
        .map(|d| (d.id.clone(), thresholds.label(compute_ratio(d))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "stage1")]
    One,
    #[serde(rename = "stage2")]
    Two,
}

impl Stage {
    pub fn slot(self) -> usize {
        match self {
            Stage::One => 0,
            Stage::Two => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::One => "stage1",
            Stage::Two => "stage2",
        }
    }
}

/// Boundary between small talk and price negotiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageSplit {
    pub boundary: Option<usize>,
}

impl StageSplit {
    pub fn stage_of(&self, index: usize) -> Stage {
        match self.boundary {
            Some(b) if index >= b => Stage::Two,
            _ => Stage::One,
        }
    }
}

/// First event that is an offer or a message the price-proposal
/// predicate accepts.
pub fn split_stages<F>(events: &[Event], mut proposes_price: F) -> StageSplit
where
    F: FnMut(&Event) -> bool,
{
    let boundary = events.iter().position(|e| match &e.kind {
        EventKind::Offer(_) => true,
        EventKind::Message(_) => proposes_price(e),
        _ => false,
    });
    StageSplit { boundary }
}

pub const MIN_MESSAGE_TURNS: usize = 5;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    pub too_short: usize,
    pub incomplete: usize,
}

/// Drops dialogs with four or fewer message turns and dialogs that ended
/// before any offer was accepted or rejected.
pub fn filter_corpus(dialogs: Vec<Dialog>) -> (Vec<Dialog>, FilterReport) {
    let mut report = FilterReport::default();
    let kept: Vec<Dialog> = dialogs
        .into_iter()
        .filter(|d| {
            if d.message_count() < MIN_MESSAGE_TURNS {
                report.too_short += 1;
                false
            } else if d.is_incomplete() {
                report.incomplete += 1;
                false
            } else {
                true
            }
        })
        .collect();
    report.kept = kept.len();
    (kept, report)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<Dialog>,
    pub dev: Vec<Dialog>,
    pub test: Vec<Dialog>,
}

/// Seeded shuffle followed by a cut into dev, test and train (the rest).
pub fn split_corpus(
    dialogs: Vec<Dialog>,
    dev_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<CorpusSplit, CorpusError> {
    let ok = |f: f64| f > 0.0 && f < 1.0;
    if !ok(dev_fraction) || !ok(test_fraction) || dev_fraction + test_fraction >= 1.0 {
        return Err(CorpusError::BadFractions {
            dev: dev_fraction,
            test: test_fraction,
        });
    }
    let mut dialogs = dialogs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dialogs.shuffle(&mut rng);
    let n = dialogs.len();
    let n_dev = (dev_fraction * n as f64).round() as usize;
    let n_test = ((test_fraction * n as f64).round() as usize).min(n - n_dev);
    let test = dialogs.split_off(n - n_test);
    let dev = dialogs.split_off(n - n_test - n_dev);
    Ok(CorpusSplit {
        train: dialogs,
        dev,
        test,
    })
}
