//! Live sessions: event log, incremental annotation and the coaching loop.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::protocol::{ProtocolError, Status};
use crate::corpus::{Dialog, Event, EventKind, Outcome, Scenario};
use crate::detector::tokenize::words;
use crate::detector::{Detector, TacticAnnotation};
use crate::outcome::{current_stage, prefix_features, OutcomeModel};
use crate::predictor::PredictorModel;
use crate::realizer::{Realizer, Suggestion};
use crate::tactic::{Role, Tactic};

#[derive(Debug, Error)]
pub enum CoachError {
    #[error("{0} registry differs from the detector registry")]
    Registry(&'static str),
}

/// The four-step pipeline: annotations come from the session, then
/// predict, select and realize.
#[derive(Debug)]
pub struct Coach {
    pub predictor: Arc<PredictorModel>,
    pub outcome: Arc<OutcomeModel>,
    pub realizer: Arc<Realizer>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoachStep {
    pub probabilities: Vec<f64>,
    pub candidates: BTreeSet<Tactic>,
    pub selected: BTreeSet<Tactic>,
    pub suggestion: Suggestion,
}

impl Coach {
    pub fn new(
        detector: &Detector,
        predictor: Arc<PredictorModel>,
        outcome: Arc<OutcomeModel>,
        realizer: Arc<Realizer>,
    ) -> Result<Self, CoachError> {
        if predictor.registry != *detector.registry() {
            return Err(CoachError::Registry("predictor"));
        }
        if outcome.registry != *detector.registry() {
            return Err(CoachError::Registry("outcome model"));
        }
        Ok(Self {
            predictor,
            outcome,
            realizer,
        })
    }

    pub fn advise(
        &self,
        events: &[Event],
        annotations: &[TacticAnnotation],
        scenario: &Scenario,
    ) -> CoachStep {
        let probabilities = self
            .predictor
            .predict_next(events, annotations, scenario.category);
        let candidates = self.predictor.candidates(&probabilities);
        let features = prefix_features(annotations, &self.outcome.registry);
        let selected = self
            .outcome
            .select_tactics(&candidates, &features, current_stage(annotations))
            .expect("outcome model matches registry");
        let current: BTreeSet<Tactic> = annotations.iter().flat_map(|a| a.tactics()).collect();
        let suggestion = self.realizer.suggest(&selected, &current);
        CoachStep {
            probabilities,
            candidates,
            selected,
            suggestion,
        }
    }
}

/// One coaching step and what the seller did next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Index of the next event at the time of the suggestion.
    pub turn: usize,
    pub candidates: BTreeSet<Tactic>,
    pub selected: BTreeSet<Tactic>,
    pub suggestion: Suggestion,
    /// Per selected tactic, whether the seller's next message or offer
    /// used it. `None` when the record was superseded before the seller
    /// spoke or the session ended first.
    pub followed: Option<BTreeMap<Tactic, bool>>,
}

/// Fraction of resolved (turn, tactic) suggestion pairs the seller used.
pub fn adherence(trace: &[TraceRecord]) -> Option<f64> {
    let mut pairs = 0usize;
    let mut used = 0usize;
    for r in trace {
        if let Some(f) = &r.followed {
            pairs += f.len();
            used += f.values().filter(|v| **v).count();
        }
    }
    (pairs > 0).then(|| used as f64 / pairs as f64)
}

/// Exported session: the corpus dialog schema plus annotations and the
/// coach trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(flatten)]
    pub dialog: Dialog,
    pub status: Status,
    pub annotations: Vec<TacticAnnotation>,
    pub coached: bool,
    pub coach_trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub scenario: Scenario,
    detector: Arc<Detector>,
    coach: Option<Arc<Coach>>,
    description: Vec<String>,
    events: Vec<Event>,
    annotations: Vec<TacticAnnotation>,
    status: Status,
    trace: Vec<TraceRecord>,
    pending: Option<usize>,
}

impl Session {
    /// A fresh session. With a coach, the seller's opening suggestion is
    /// computed right away.
    pub fn new(
        id: impl Into<String>,
        scenario: Scenario,
        detector: Arc<Detector>,
        coach: Option<Arc<Coach>>,
    ) -> Self {
        let description = words(&scenario.description);
        let mut s = Self {
            id: id.into(),
            scenario,
            detector,
            coach,
            description,
            events: Vec::new(),
            annotations: Vec::new(),
            status: Status::default(),
            trace: Vec::new(),
            pending: None,
        };
        s.run_coach();
        s
    }

    pub fn status(&self) -> &Status {
        &self.status
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn annotations(&self) -> &[TacticAnnotation] {
        &self.annotations
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn is_coached(&self) -> bool {
        self.coach.is_some()
    }

    /// The suggestion the seller currently has on screen, if any.
    pub fn suggestion(&self) -> Option<&Suggestion> {
        self.pending.map(|i| &self.trace[i].suggestion)
    }

    /// Applies one event. On a protocol error the session is unchanged.
    pub fn apply(&mut self, speaker: Role, kind: EventKind) -> Result<Option<Suggestion>, ProtocolError> {
        let next = self.status.apply(speaker, &kind)?;
        let index = self.events.len();
        self.events.push(Event::new(index, speaker, kind));
        let ann = self.detector.annotate_event(
            &self.events,
            index,
            &self.annotations,
            &self.scenario,
            &self.description,
        );
        self.annotations.push(ann);
        self.status = next;

        if speaker == Role::Seller {
            self.resolve_pending(index);
        }
        if self.status.is_closed() {
            self.pending = None;
            return Ok(None);
        }
        Ok(self.run_coach())
    }

    /// Idle expiry: the party whose turn it is quits (the buyer when
    /// either could act).
    pub fn expire(&mut self) -> Result<(), ProtocolError> {
        let who = self.status.turn().unwrap_or(Role::Buyer);
        self.apply(who, EventKind::Quit).map(|_| ())
    }

    fn resolve_pending(&mut self, index: usize) {
        let Some(p) = self.pending else { return };
        let ann = &self.annotations[index];
        let used = match self.events[index].kind {
            EventKind::Message(_) | EventKind::Offer(_) => true,
            EventKind::Accept | EventKind::Quit => false,
            // Answering an offer is not yet the seller's coached turn.
            EventKind::Reject => return,
        };
        let record = &mut self.trace[p];
        record.followed = Some(
            record
                .selected
                .iter()
                .map(|t| (*t, used && ann.has(*t)))
                .collect(),
        );
        self.pending = None;
    }

    fn run_coach(&mut self) -> Option<Suggestion> {
        let coach = self.coach.as_ref()?;
        if !self.status.seller_to_act() {
            return None;
        }
        let step = coach.advise(&self.events, &self.annotations, &self.scenario);
        // An unanswered earlier suggestion is superseded.
        self.trace.push(TraceRecord {
            turn: self.events.len(),
            candidates: step.candidates,
            selected: step.selected,
            suggestion: step.suggestion.clone(),
            followed: None,
        });
        self.pending = Some(self.trace.len() - 1);
        Some(step.suggestion)
    }

    pub fn dialog(&self) -> Dialog {
        let outcome = match &self.status {
            Status::Closed { outcome } => *outcome,
            _ => Outcome::NoDeal,
        };
        Dialog {
            id: self.id.clone(),
            scenario: self.scenario.clone(),
            events: self.events.clone(),
            outcome,
        }
    }

    pub fn transcript(&self) -> Transcript {
        Transcript {
            dialog: self.dialog(),
            status: self.status.clone(),
            annotations: self.annotations.clone(),
            coached: self.is_coached(),
            coach_trace: self.trace.clone(),
        }
    }
}
