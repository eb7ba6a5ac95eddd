//! Per-tactic logistic classifiers for the turn-level tactics that keyword
//! rules cannot capture.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::embeddings::Embeddings;
use super::features::{extract_classifier_features, TurnView, QUESTION_WORDS};
use super::rules::{price_positions, LexiconSet};
use super::tokenize::words;
use crate::corpus::Scenario;
use crate::lexicon::count_matches;
use crate::logistic::{self, LogisticError, LogisticModel, DEFAULT_L2_GRID};
use crate::tactic::{Tactic, TacticRegistry, LEARNED_TACTICS};

pub const DETECTOR_FORMAT_VERSION: u32 = 1;
pub const MIN_ANNOTATED_TURNS: usize = 20;
pub const CV_FOLDS: usize = 5;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("need at least {MIN_ANNOTATED_TURNS} annotated turns, got {0}")]
    TooFewExamples(usize),
    #[error("classifier for {0}: {1}")]
    Fit(Tactic, LogisticError),
    #[error("detector artifact: {0}")]
    Artifact(String),
}

/// One hand-labelled turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedTurn {
    pub scenario: Scenario,
    pub text: String,
    /// The other party's message right before this turn, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous_text: Option<String>,
    pub labels: BTreeSet<Tactic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    Logistic { model: LogisticModel },
    AlwaysNegative,
    /// Price-token or interest-phrase rule; only meaningful for
    /// propose_price and communicate_interests.
    RuleFallback,
}

impl Classifier {
    pub fn fires(
        &self,
        tactic: Tactic,
        view: &TurnView<'_>,
        embeddings: Option<&Embeddings>,
        lex: &LexiconSet,
    ) -> bool {
        match self {
            Classifier::Logistic { model } => {
                let x = extract_classifier_features(tactic, view, embeddings, &lex.interests);
                model.predict_proba(&x).map(|p| p > 0.5).unwrap_or(false)
            }
            Classifier::AlwaysNegative => false,
            Classifier::RuleFallback => match tactic {
                Tactic::ProposePrice => !price_positions(view.tokens, view.list_price).is_empty(),
                Tactic::CommunicateInterests => count_matches(view.tokens, &lex.interests).0 > 0,
                _ => false,
            },
        }
    }

    /// What a tactic falls back to without a usable trained model.
    pub fn fallback_for(tactic: Tactic) -> Classifier {
        match tactic {
            Tactic::ProposePrice | Tactic::CommunicateInterests => Classifier::RuleFallback,
            _ => Classifier::AlwaysNegative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticReport {
    pub classifier: String,
    pub examples: usize,
    pub positives: usize,
    pub l2: Option<f64>,
    pub cv_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub format_version: u32,
    pub registry: TacticRegistry,
    pub dominance_threshold: f64,
    pub question_words: Vec<String>,
    pub classifiers: BTreeMap<Tactic, Classifier>,
    pub report: BTreeMap<Tactic, TacticReport>,
    #[serde(default)]
    pub config_hash: String,
}

impl DetectorModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("detector model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DetectorError> {
        let m: DetectorModel =
            serde_json::from_str(text).map_err(|e| DetectorError::Artifact(e.to_string()))?;
        if m.format_version != DETECTOR_FORMAT_VERSION {
            return Err(DetectorError::Artifact(format!(
                "unsupported format version {}",
                m.format_version
            )));
        }
        if !m.dominance_threshold.is_finite() {
            return Err(DetectorError::Artifact("non-finite dominance threshold".into()));
        }
        for c in m.classifiers.values() {
            if let Classifier::Logistic { model } = c {
                if model.weights.iter().chain([&model.bias]).any(|w| !w.is_finite()) {
                    return Err(DetectorError::Artifact("non-finite classifier weight".into()));
                }
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorTraining {
    pub l2_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for DetectorTraining {
    fn default() -> Self {
        Self {
            l2_grid: DEFAULT_L2_GRID.to_vec(),
            folds: CV_FOLDS,
            seed: 0,
        }
    }
}

/// Feature rows for one tactic over the annotated turns.
pub fn feature_rows(
    tactic: Tactic,
    turns: &[AnnotatedTurn],
    embeddings: Option<&Embeddings>,
    lex: &LexiconSet,
) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut x = Vec::with_capacity(turns.len());
    let mut y = Vec::with_capacity(turns.len());
    for t in turns {
        let tokens = words(&t.text);
        let description = words(&t.scenario.description);
        let prev = t.previous_text.as_deref().map(words);
        let view = TurnView {
            tokens: &tokens,
            description: &description,
            previous_other: prev.as_deref(),
            list_price: t.scenario.list_price,
        };
        x.push(extract_classifier_features(tactic, &view, embeddings, &lex.interests));
        y.push(t.labels.contains(&tactic));
    }
    (x, y)
}

/// Trains one classifier per learned tactic in the registry. The ℓ2
/// strength is chosen by k-fold accuracy; single-class tactics fall back
/// with a warning.
pub fn train_detectors(
    turns: &[AnnotatedTurn],
    registry: &TacticRegistry,
    lex: &LexiconSet,
    embeddings: Option<&Embeddings>,
    dominance_threshold: f64,
    opts: &DetectorTraining,
) -> Result<DetectorModel, DetectorError> {
    if turns.len() < MIN_ANNOTATED_TURNS {
        return Err(DetectorError::TooFewExamples(turns.len()));
    }
    let mut classifiers = BTreeMap::new();
    let mut report = BTreeMap::new();
    for &tactic in LEARNED_TACTICS.iter().filter(|t| registry.contains(**t)) {
        let (x, y) = feature_rows(tactic, turns, embeddings, lex);
        let positives = y.iter().filter(|v| **v).count();
        if positives == 0 || positives == y.len() {
            let fallback = Classifier::fallback_for(tactic);
            log::warn!(
                "{tactic}: {positives} of {} annotated turns are positive; using {}",
                y.len(),
                kind_name(&fallback)
            );
            report.insert(
                tactic,
                TacticReport {
                    classifier: kind_name(&fallback).into(),
                    examples: y.len(),
                    positives,
                    l2: None,
                    cv_accuracy: None,
                },
            );
            classifiers.insert(tactic, fallback);
            continue;
        }
        let mut best: Option<(f64, f64)> = None;
        for &l2 in &opts.l2_grid {
            let acc = logistic::cross_validate(&x, &y, l2, opts.folds, opts.seed)
                .map_err(|e| DetectorError::Fit(tactic, e))?;
            if best.is_none_or(|(_, a)| acc > a) {
                best = Some((l2, acc));
            }
        }
        let (l2, acc) = best.ok_or(DetectorError::Fit(tactic, LogisticError::Empty))?;
        let model = logistic::fit(&x, &y, l2).map_err(|e| DetectorError::Fit(tactic, e))?;
        report.insert(
            tactic,
            TacticReport {
                classifier: "logistic".into(),
                examples: y.len(),
                positives,
                l2: Some(l2),
                cv_accuracy: Some(acc),
            },
        );
        classifiers.insert(tactic, Classifier::Logistic { model });
    }
    Ok(DetectorModel {
        format_version: DETECTOR_FORMAT_VERSION,
        registry: registry.clone(),
        dominance_threshold,
        question_words: QUESTION_WORDS.iter().map(|s| s.to_string()).collect(),
        classifiers,
        report,
        config_hash: String::new(),
    })
}

fn kind_name(c: &Classifier) -> &'static str {
    match c {
        Classifier::Logistic { .. } => "logistic",
        Classifier::AlwaysNegative => "always_negative",
        Classifier::RuleFallback => "rule_fallback",
    }
}
