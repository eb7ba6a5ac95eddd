//! Turns a selected tactic set into an instruction plus example utterances
//! retrieved from successful training dialogs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SuccessLabel;
use crate::detector::AnnotatedDialog;
use crate::tactic::{Tactic, TacticRegistry};

const BUILTIN_TEMPLATES: &str = include_str!("../data/templates.json");

pub const DEFAULT_EXAMPLE_BEARING: &[Tactic] = &[
    Tactic::Hedge,
    Tactic::FactiveVerb,
    Tactic::CertaintyWord,
    Tactic::SideOffer,
];

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("reading templates: {0}")]
    Io(#[from] std::io::Error),
    #[error("trigger {0:?} appears twice")]
    Duplicate(Vec<Tactic>),
    #[error("empty trigger")]
    EmptyTrigger,
    #[error("no single-tactic template for `{0}`")]
    MissingFallback(Tactic),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Trigger {
    One(Tactic),
    Set(Vec<Tactic>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionTemplate {
    pub trigger: Trigger,
    pub text: String,
    #[serde(default)]
    pub priority: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    text: String,
    priority: i64,
}

/// Templates keyed by exact tactic set. Single-tactic sets double as the
/// fallbacks used to compose instructions for unlisted combinations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    by_set: BTreeMap<BTreeSet<Tactic>, Entry>,
}

impl Templates {
    pub fn from_list(list: Vec<SuggestionTemplate>) -> Result<Self, TemplateError> {
        let mut by_set = BTreeMap::new();
        for t in list {
            let set: BTreeSet<Tactic> = match t.trigger {
                Trigger::One(x) => [x].into(),
                Trigger::Set(v) => v.into_iter().collect(),
            };
            if set.is_empty() {
                return Err(TemplateError::EmptyTrigger);
            }
            let key: Vec<Tactic> = set.iter().copied().collect();
            let entry = Entry {
                text: t.text,
                priority: t.priority,
            };
            if by_set.insert(set, entry).is_some() {
                return Err(TemplateError::Duplicate(key));
            }
        }
        Ok(Self { by_set })
    }

    pub fn parse(json: &str) -> Result<Self, TemplateError> {
        Self::from_list(serde_json::from_str(json)?)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TEMPLATES).expect("bundled templates are valid")
    }

    /// Every registry tactic needs a single-tactic template.
    pub fn validate(&self, registry: &TacticRegistry) -> Result<(), TemplateError> {
        for t in registry.iter() {
            if !self.by_set.contains_key(&BTreeSet::from([t])) {
                return Err(TemplateError::MissingFallback(t));
            }
        }
        Ok(())
    }

    /// The exact-set template if there is one, otherwise the single-tactic
    /// templates by descending priority joined with "; ".
    pub fn realize(&self, selected: &BTreeSet<Tactic>) -> String {
        if selected.is_empty() {
            return String::new();
        }
        if let Some(e) = self.by_set.get(selected) {
            return e.text.clone();
        }
        let mut parts: Vec<(&Entry, Tactic)> = selected
            .iter()
            .filter_map(|t| self.by_set.get(&BTreeSet::from([*t])).map(|e| (e, *t)))
            .collect();
        parts.sort_by(|(a, ta), (b, tb)| b.priority.cmp(&a.priority).then(ta.cmp(tb)));
        parts
            .iter()
            .map(|(e, _)| e.text.as_str())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub text: String,
    pub turn_tactics: BTreeSet<Tactic>,
    pub dialog_tactics: BTreeSet<Tactic>,
    pub dialog_id: String,
    pub turn: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarIndex {
    pub entries: Vec<IndexEntry>,
}

/// Indexes every message turn with at least one tactic, from positive
/// dialogs only unless `positives_only` is false. Entries are ordered by
/// (dialog id, turn).
pub fn build_index(
    dialogs: &[AnnotatedDialog],
    labels: &BTreeMap<String, SuccessLabel>,
    positives_only: bool,
) -> ExemplarIndex {
    let mut entries = Vec::new();
    for d in dialogs {
        let positive = labels.get(&d.dialog.id) == Some(&SuccessLabel::Positive);
        if positives_only && !positive {
            continue;
        }
        let dialog_tactics: BTreeSet<Tactic> =
            d.annotations.iter().flat_map(|a| a.tactics()).collect();
        for (event, ann) in d.dialog.events.iter().zip(&d.annotations) {
            let Some(text) = event.kind.text() else { continue };
            let turn_tactics = ann.tactics();
            if turn_tactics.is_empty() {
                continue;
            }
            entries.push(IndexEntry {
                text: text.to_string(),
                turn_tactics,
                dialog_tactics: dialog_tactics.clone(),
                dialog_id: d.dialog.id.clone(),
                turn: event.index,
            });
        }
    }
    if entries.is_empty() {
        log::warn!("exemplar index is empty");
    }
    entries.sort_by(|a, b| (&a.dialog_id, a.turn).cmp(&(&b.dialog_id, b.turn)));
    ExemplarIndex { entries }
}

/// Jaccard similarity as an exact fraction (intersection, union).
pub fn jaccard(a: &BTreeSet<Tactic>, b: &BTreeSet<Tactic>) -> (usize, usize) {
    let inter = a.intersection(b).count();
    (inter, a.len() + b.len() - inter)
}

fn cmp_fraction((n1, d1): (usize, usize), (n2, d2): (usize, usize)) -> Ordering {
    // An empty union counts as similarity 0.
    let (n1, d1) = if d1 == 0 { (0, 1) } else { (n1, d1) };
    let (n2, d2) = if d2 == 0 { (0, 1) } else { (n2, d2) };
    (n1 * d2).cmp(&(n2 * d1))
}

impl ExemplarIndex {
    /// The indexed turn containing `tactic` whose source dialog's tactic set
    /// is most similar to `current`; ties go to the smallest (dialog id, turn).
    pub fn retrieve(&self, tactic: Tactic, current: &BTreeSet<Tactic>) -> Option<&IndexEntry> {
        let mut best: Option<(&IndexEntry, (usize, usize))> = None;
        for e in self.entries.iter().filter(|e| e.turn_tactics.contains(&tactic)) {
            let sim = jaccard(&e.dialog_tactics, current);
            let better = match &best {
                None => true,
                Some((b, bs)) => match cmp_fraction(sim, *bs) {
                    Ordering::Greater => true,
                    Ordering::Equal => (&e.dialog_id, e.turn) < (&b.dialog_id, b.turn),
                    Ordering::Less => false,
                },
            };
            if better {
                best = Some((e, sim));
            }
        }
        best.map(|(e, _)| e)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub tactic: Tactic,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub tactics: BTreeSet<Tactic>,
    pub instruction: String,
    pub exemplars: Vec<Exemplar>,
}

#[derive(Debug, Clone)]
pub struct Realizer {
    pub templates: Templates,
    pub index: ExemplarIndex,
    pub example_bearing: BTreeSet<Tactic>,
}

impl Realizer {
    pub fn new(templates: Templates, index: ExemplarIndex) -> Self {
        Self {
            templates,
            index,
            example_bearing: DEFAULT_EXAMPLE_BEARING.iter().copied().collect(),
        }
    }

    /// `current` is every tactic detected so far in the session.
    pub fn suggest(&self, selected: &BTreeSet<Tactic>, current: &BTreeSet<Tactic>) -> Suggestion {
        let exemplars = selected
            .iter()
            .filter(|t| self.example_bearing.contains(t))
            .filter_map(|t| {
                self.index.retrieve(*t, current).map(|e| Exemplar {
                    tactic: *t,
                    text: e.text.clone(),
                })
            })
            .collect();
        Suggestion {
            tactics: selected.clone(),
            instruction: self.templates.realize(selected),
            exemplars,
        }
    }
}
