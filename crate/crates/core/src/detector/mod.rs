//! Turn-level tactic annotation: keyword rules plus learned classifiers.

pub mod embeddings;
pub mod features;
pub mod learned;
pub mod meteor;
pub mod rules;
pub mod tokenize;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dialog, Event, EventKind, Scenario, StageSplit};
use crate::tactic::{Role, Tactic, TacticRegistry, LEARNED_TACTICS};
use embeddings::Embeddings;
use features::TurnView;
use learned::{Classifier, DetectorError, DetectorModel};
pub use rules::{LexiconSet, Mention};
use tokenize::words;

/// Tactics found in one event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TacticAnnotation {
    pub turn: usize,
    pub speaker: Role,
    /// Word-anchored tactics, left to right.
    pub mentions: Vec<Mention>,
    /// Turn-level tactics (the `b` vector).
    pub flags: BTreeSet<Tactic>,
    /// The event proposes a price (an offer, or a message the
    /// propose_price detector accepts). Tracked even when propose_price
    /// is not in the registry since stages depend on it.
    pub proposal: bool,
    pub first_person_count: usize,
}

impl TacticAnnotation {
    pub fn empty(turn: usize, speaker: Role) -> Self {
        Self {
            turn,
            speaker,
            mentions: Vec::new(),
            flags: BTreeSet::new(),
            proposal: false,
            first_person_count: 0,
        }
    }

    pub fn tactics(&self) -> BTreeSet<Tactic> {
        self.mentions
            .iter()
            .map(|m| m.tactic)
            .chain(self.flags.iter().copied())
            .collect()
    }

    pub fn has(&self, tactic: Tactic) -> bool {
        self.flags.contains(&tactic) || self.mentions.iter().any(|m| m.tactic == tactic)
    }

    pub fn presence(&self, registry: &TacticRegistry) -> Vec<bool> {
        registry.to_vector(&self.tactics())
    }

    pub fn flag_vector(&self, registry: &TacticRegistry) -> Vec<bool> {
        registry.to_vector(&self.flags)
    }

    /// Mentions count individually, turn flags once.
    pub fn count(&self, tactic: Tactic) -> usize {
        let m = self.mentions.iter().filter(|m| m.tactic == tactic).count();
        m + usize::from(self.flags.contains(&tactic))
    }
}

/// Boundary at the first proposing event.
pub fn stage_split(annotations: &[TacticAnnotation]) -> StageSplit {
    StageSplit {
        boundary: annotations.iter().find(|a| a.proposal).map(|a| a.turn),
    }
}

#[derive(Debug, Clone)]
pub struct Detector {
    registry: TacticRegistry,
    lexicons: Arc<LexiconSet>,
    embeddings: Option<Arc<Embeddings>>,
    dominance_threshold: f64,
    classifiers: BTreeMap<Tactic, Classifier>,
}

impl Detector {
    /// Keyword rules only; learned tactics use their rule fallbacks or
    /// stay silent.
    pub fn rule_only(registry: TacticRegistry, lexicons: Arc<LexiconSet>) -> Self {
        let classifiers = LEARNED_TACTICS
            .iter()
            .map(|t| (*t, Classifier::fallback_for(*t)))
            .collect();
        Self {
            registry,
            lexicons,
            embeddings: None,
            dominance_threshold: rules::DEFAULT_DOMINANCE_THRESHOLD,
            classifiers,
        }
    }

    pub fn from_model(
        model: &DetectorModel,
        lexicons: Arc<LexiconSet>,
        embeddings: Option<Arc<Embeddings>>,
    ) -> Result<Self, DetectorError> {
        let mut d = Self::rule_only(model.registry.clone(), lexicons);
        d.embeddings = embeddings;
        d.dominance_threshold = model.dominance_threshold;
        for (t, c) in &model.classifiers {
            d.classifiers.insert(*t, c.clone());
        }
        Ok(d)
    }

    pub fn with_dominance_threshold(mut self, threshold: f64) -> Self {
        self.dominance_threshold = threshold;
        self
    }

    pub fn registry(&self) -> &TacticRegistry {
        &self.registry
    }

    pub fn lexicons(&self) -> &LexiconSet {
        &self.lexicons
    }

    pub fn dominance_threshold(&self) -> f64 {
        self.dominance_threshold
    }

    fn learned_fires(&self, tactic: Tactic, view: &TurnView<'_>) -> bool {
        self.classifiers
            .get(&tactic)
            .is_some_and(|c| c.fires(tactic, view, self.embeddings.as_deref(), &self.lexicons))
    }

    /// Annotates `events[index]` given the annotations of all earlier
    /// events (needed for did_not_propose_first).
    pub fn annotate_event(
        &self,
        events: &[Event],
        index: usize,
        prior: &[TacticAnnotation],
        scenario: &Scenario,
        description: &[String],
    ) -> TacticAnnotation {
        let event = &events[index];
        let mut ann = TacticAnnotation::empty(event.index, event.speaker);
        match &event.kind {
            EventKind::Message(text) => {
                let tokens = words(text);
                let hits = rules::detect_rules(&tokens, &self.lexicons, self.dominance_threshold);
                ann.mentions = hits.mentions;
                ann.flags = hits.flags;
                ann.first_person_count = hits.first_person_count;
                let prev = events[..index]
                    .iter()
                    .rev()
                    .find(|e| e.speaker != event.speaker && e.kind.is_message())
                    .and_then(|e| e.kind.text())
                    .map(words);
                let view = TurnView {
                    tokens: &tokens,
                    description,
                    previous_other: prev.as_deref(),
                    list_price: scenario.list_price,
                };
                for &t in LEARNED_TACTICS {
                    if self.learned_fires(t, &view) {
                        ann.flags.insert(t);
                    }
                }
                ann.proposal = ann.flags.contains(&Tactic::ProposePrice);
            }
            EventKind::Offer(_) => {
                ann.flags.insert(Tactic::ProposePrice);
                ann.proposal = true;
            }
            EventKind::Accept | EventKind::Reject | EventKind::Quit => return ann,
        }
        if did_not_propose_first(prior, event.speaker) {
            ann.flags.insert(Tactic::DidNotProposeFirst);
        }
        ann.mentions.retain(|m| self.registry.contains(m.tactic));
        ann.flags.retain(|t| self.registry.contains(*t));
        ann
    }

    /// Annotation for every event of the dialog, in order.
    pub fn annotate_dialog(&self, dialog: &Dialog) -> Vec<TacticAnnotation> {
        self.annotate_events(&dialog.events, &dialog.scenario)
    }

    pub fn annotate_events(&self, events: &[Event], scenario: &Scenario) -> Vec<TacticAnnotation> {
        let description = words(&scenario.description);
        let mut out: Vec<TacticAnnotation> = Vec::with_capacity(events.len());
        for i in 0..events.len() {
            let a = self.annotate_event(events, i, &out, scenario, &description);
            out.push(a);
        }
        out
    }

    /// A single message with no dialog context.
    pub fn annotate_text(&self, text: &str, speaker: Role, scenario: &Scenario) -> TacticAnnotation {
        let events = [Event::new(0, speaker, EventKind::Message(text.to_string()))];
        self.annotate_events(&events, scenario).remove(0)
    }
}

/// Fires on the first event `speaker` produces after the other party
/// made the dialog's first price proposal.
fn did_not_propose_first(prior: &[TacticAnnotation], speaker: Role) -> bool {
    let Some(first) = prior.iter().position(|a| a.proposal) else {
        return false;
    };
    prior[first].speaker != speaker && !prior[first + 1..].iter().any(|a| a.speaker == speaker)
}

/// A dialog with one annotation per event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedDialog {
    pub dialog: Dialog,
    pub annotations: Vec<TacticAnnotation>,
}

impl AnnotatedDialog {
    pub fn new(detector: &Detector, dialog: Dialog) -> Self {
        let annotations = detector.annotate_dialog(&dialog);
        Self { dialog, annotations }
    }

    pub fn stages(&self) -> StageSplit {
        stage_split(&self.annotations)
    }
}
