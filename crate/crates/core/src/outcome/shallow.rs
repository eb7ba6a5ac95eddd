//! Shallow lexical baseline: per-role 1/2/3-gram counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AccuracyReport, OutcomeError};
use crate::corpus::{Dialog, SuccessLabel};
use crate::detector::tokenize::words;
use crate::logistic::{self, LogisticModel};
use crate::tactic::Role;

pub const MIN_NGRAM_COUNT: usize = 3;
pub const MAX_N: usize = 3;

fn ngrams(tokens: &[String]) -> impl Iterator<Item = String> + '_ {
    (1..=MAX_N).flat_map(move |n| tokens.windows(n).map(|w| w.join(" ")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramVocab {
    pub grams: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl NgramVocab {
    /// N-grams seen at least `min_count` times across all training messages.
    pub fn build(dialogs: &[Dialog], min_count: usize) -> Result<Self, OutcomeError> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for d in dialogs {
            for text in d.messages().filter_map(|e| e.kind.text()) {
                for g in ngrams(&words(text)) {
                    *counts.entry(g).or_default() += 1;
                }
            }
        }
        let grams: Vec<String> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count)
            .map(|(g, _)| g)
            .collect();
        if grams.is_empty() {
            return Err(OutcomeError::EmptyVocabulary);
        }
        Ok(Self::from_grams(grams))
    }

    pub fn from_grams(grams: Vec<String>) -> Self {
        let index = grams.iter().cloned().enumerate().map(|(i, g)| (g, i)).collect();
        Self { grams, index }
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    /// Seller counts first, then buyer counts.
    pub fn features(&self, dialog: &Dialog) -> Vec<f64> {
        let n = self.len();
        let mut x = vec![0.0; 2 * n];
        for e in dialog.messages() {
            let Some(text) = e.kind.text() else { continue };
            let offset = if e.speaker == Role::Seller { 0 } else { n };
            for g in ngrams(&words(text)) {
                if let Some(&i) = self.index.get(&g) {
                    x[offset + i] += 1.0;
                }
            }
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShallowModel {
    pub vocab: NgramVocab,
    pub model: LogisticModel,
    pub accuracy: AccuracyReport,
}

impl ShallowModel {
    pub fn predict_success(&self, dialog: &Dialog) -> Result<f64, OutcomeError> {
        Ok(self.model.predict_proba(&self.vocab.features(dialog))?)
    }

    pub fn accuracy_on(
        &self,
        dialogs: &[Dialog],
        labels: &BTreeMap<String, SuccessLabel>,
    ) -> Result<f64, OutcomeError> {
        let (x, y) = dataset(&self.vocab, dialogs, labels);
        Ok(self.model.accuracy(&x, &y)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("shallow model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, OutcomeError> {
        let mut m: ShallowModel =
            serde_json::from_str(text).map_err(|e| OutcomeError::Artifact(e.to_string()))?;
        m.vocab = NgramVocab::from_grams(std::mem::take(&mut m.vocab.grams));
        if m.model.weights.len() != 2 * m.vocab.len() {
            return Err(OutcomeError::Artifact("weights do not match vocabulary".into()));
        }
        Ok(m)
    }
}

fn dataset(
    vocab: &NgramVocab,
    dialogs: &[Dialog],
    labels: &BTreeMap<String, SuccessLabel>,
) -> (Vec<Vec<f64>>, Vec<bool>) {
    dialogs
        .iter()
        .filter_map(|d| {
            let y = labels.get(&d.id)?.as_bool()?;
            Some((vocab.features(d), y))
        })
        .unzip()
}

pub fn train_shallow_baseline(
    train: &[Dialog],
    dev: &[Dialog],
    labels: &BTreeMap<String, SuccessLabel>,
    l2_grid: &[f64],
) -> Result<ShallowModel, OutcomeError> {
    let labeled: Vec<Dialog> = train
        .iter()
        .filter(|d| labels.get(&d.id).and_then(|l| l.as_bool()).is_some())
        .cloned()
        .collect();
    let vocab = NgramVocab::build(&labeled, MIN_NGRAM_COUNT)?;
    let (tx, ty) = dataset(&vocab, &labeled, labels);
    let (dx, dy) = dataset(&vocab, dev, labels);
    if tx.is_empty() {
        return Err(OutcomeError::NoData("train"));
    }
    let (model, dev_acc) = if dx.is_empty() {
        (logistic::fit(&tx, &ty, l2_grid[0])?, 0.0)
    } else {
        logistic::fit_select_on_dev(&tx, &ty, &dx, &dy, l2_grid)?
    };
    let train_acc = model.accuracy(&tx, &ty)?;
    Ok(ShallowModel {
        vocab,
        model,
        accuracy: AccuracyReport {
            train: train_acc,
            dev: dev_acc,
            test: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ngrams_up_to_three() {
        let t: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let g: Vec<String> = ngrams(&t).collect();
        assert_eq!(g, ["a", "b", "c", "a b", "b c", "a b c"]);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        assert!(matches!(
            NgramVocab::build(&[], MIN_NGRAM_COUNT),
            Err(OutcomeError::EmptyVocabulary)
        ));
    }
}
