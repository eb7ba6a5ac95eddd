//! Next seller move prediction.

pub mod artifact;
pub mod calibrate;
pub mod lstm;
pub mod model;
pub mod train;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Category, Event};
use crate::detector::{AnnotatedDialog, TacticAnnotation};
use crate::tactic::{Tactic, TacticRegistry};
use model::{encode_history, target_events, Ablation, EncodedHistory, Params, TacticStep, Vocab, SEP};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error(
        "loss became non-finite at epoch {epoch}, example {example} (learning rate {lr}); \
         lower the learning rate or tighten gradient clipping"
    )]
    Diverged { epoch: usize, example: usize, lr: f64 },
    #[error("embedding table has dimension {table}, model expects {model}")]
    EmbeddingDim { table: usize, model: usize },
    #[error("registry mismatch: {0}")]
    Registry(String),
    #[error("predictor artifact: {0}")]
    Artifact(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub clip_norm: Option<f64>,
    pub freeze_words: bool,
    /// Word rows copied from a pretrained table; 0 means random init.
    pub pretrained_rows: usize,
    pub log: Vec<EpochLog>,
    #[serde(default)]
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub registry: TacticRegistry,
    pub vocab: Vocab,
    pub params: Params,
    pub thresholds: Vec<f64>,
    pub ablation: Ablation,
    pub meta: TrainingMeta,
}

/// Inputs and seller targets for a set of annotated dialogs.
#[derive(Debug, Clone)]
pub struct PredictorData {
    pub histories: Vec<EncodedHistory>,
    pub examples: Vec<Example>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub history: usize,
    /// Index of the seller event being predicted; its history is every
    /// earlier event.
    pub event: usize,
    pub target: Vec<bool>,
}

impl PredictorData {
    pub fn build(dialogs: &[AnnotatedDialog], vocab: &Vocab, registry: &TacticRegistry) -> Self {
        let mut histories = Vec::with_capacity(dialogs.len());
        let mut examples = Vec::new();
        for (h, d) in dialogs.iter().enumerate() {
            histories.push(encode_history(
                &d.dialog.events,
                &d.annotations,
                d.dialog.scenario.category,
                vocab,
                registry,
            ));
            for e in target_events(&d.dialog.events) {
                let target = d
                    .annotations
                    .get(e)
                    .map(|a| a.presence(registry))
                    .unwrap_or_else(|| vec![false; registry.len()]);
                examples.push(Example {
                    history: h,
                    event: e,
                    target,
                });
            }
        }
        Self {
            histories,
            examples,
        }
    }

    pub fn inputs(&self, ex: &Example) -> (&[usize], &[TacticStep], Category) {
        let h = &self.histories[ex.history];
        let (w, s) = h.prefix(ex.event);
        (w, s, h.category)
    }

    pub fn gold(&self) -> Vec<Vec<bool>> {
        self.examples.iter().map(|e| e.target.clone()).collect()
    }
}

impl PredictorModel {
    /// Word-encoder state after the given turns (joined by separators).
    pub fn encode_turns(&self, turns: &[Vec<String>]) -> Vec<f64> {
        let mut ids = Vec::new();
        for (k, t) in turns.iter().enumerate() {
            if k > 0 {
                ids.push(SEP);
            }
            ids.extend(t.iter().map(|w| self.vocab.id(w)));
        }
        self.params.encode_words(&ids).h
    }

    /// Tactic-encoder state after the given annotations.
    pub fn encode_tactics(&self, annotations: &[TacticAnnotation]) -> Vec<f64> {
        let mut steps = Vec::new();
        for a in annotations {
            model::push_steps(a, &self.registry, &mut steps);
        }
        self.params.encode_steps(&steps).h
    }

    pub fn predict_inputs(&self, words: &[usize], steps: &[TacticStep], category: Category) -> Vec<f64> {
        self.params
            .forward::<rand_chacha::ChaCha8Rng>(words, steps, category, self.ablation, None)
            .probs
    }

    /// Probability of each registry tactic in the seller's next turn.
    pub fn predict_next(
        &self,
        events: &[Event],
        annotations: &[TacticAnnotation],
        category: Category,
    ) -> Vec<f64> {
        let h = encode_history(events, annotations, category, &self.vocab, &self.registry);
        self.predict_inputs(&h.words, &h.steps, category)
    }

    pub fn predict_data(&self, data: &PredictorData) -> Vec<Vec<f64>> {
        data.examples
            .iter()
            .map(|ex| {
                let (w, s, c) = data.inputs(ex);
                self.predict_inputs(w, s, c)
            })
            .collect()
    }

    /// Thresholded candidate set.
    pub fn candidates(&self, probs: &[f64]) -> BTreeSet<Tactic> {
        self.registry
            .from_vector(&calibrate::decide(probs, &self.thresholds))
    }

    pub fn calibrate(&mut self, dev: &PredictorData) {
        let probs = self.predict_data(dev);
        self.thresholds = calibrate::calibrate_thresholds(&probs, &dev.gold(), self.registry.len());
    }

    pub fn evaluate(&self, test: &PredictorData) -> calibrate::F1Report {
        let probs = self.predict_data(test);
        let decisions: Vec<Vec<bool>> = probs
            .iter()
            .map(|p| calibrate::decide(p, &self.thresholds))
            .collect();
        calibrate::score(&decisions, &test.gold(), self.registry.len())
    }
}
