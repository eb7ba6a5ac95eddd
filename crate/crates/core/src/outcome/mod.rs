//! Outcome classifier over staged tactic counts, and counterfactual
//! selection of the seller's next tactics.

pub mod ablation;
pub mod shallow;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Stage, StageSplit, SuccessLabel};
use crate::detector::{stage_split, AnnotatedDialog, TacticAnnotation};
use crate::logistic::{self, LogisticError, LogisticModel};
use crate::tactic::{Role, Tactic, TacticRegistry};

pub const OUTCOME_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum OutcomeError {
    #[error(transparent)]
    Fit(#[from] LogisticError),
    #[error("n-gram vocabulary is empty after the frequency cut")]
    EmptyVocabulary,
    #[error("no labeled dialogs in the {0} split")]
    NoData(&'static str),
    #[error("outcome artifact: {0}")]
    Artifact(String),
}

/// Position of (tactic, role, stage) in the feature vector.
pub fn feature_index(tactic_idx: usize, role: Role, stage: Stage) -> usize {
    tactic_idx * 4 + role.slot() * 2 + stage.slot()
}

pub fn feature_names(registry: &TacticRegistry) -> Vec<String> {
    let mut names = vec![String::new(); registry.len() * 4];
    for (t, tactic) in registry.iter().enumerate() {
        for role in [Role::Seller, Role::Buyer] {
            for stage in [Stage::One, Stage::Two] {
                names[feature_index(t, role, stage)] =
                    format!("{}/{}/{}", tactic.as_str(), role.as_str(), stage.as_str());
            }
        }
    }
    names
}

/// Tactic counts per (tactic, role, stage). Mentions count once each,
/// turn-level flags once per turn.
pub fn extract_outcome_features(
    annotations: &[TacticAnnotation],
    split: StageSplit,
    registry: &TacticRegistry,
) -> Vec<f64> {
    let mut x = vec![0.0; registry.len() * 4];
    for ann in annotations {
        let stage = split.stage_of(ann.turn);
        for (t, tactic) in registry.iter().enumerate() {
            let c = ann.count(tactic);
            if c > 0 {
                x[feature_index(t, ann.speaker, stage)] += c as f64;
            }
        }
    }
    x
}

/// Features of a live prefix, staged by the prefix's own boundary.
pub fn prefix_features(annotations: &[TacticAnnotation], registry: &TacticRegistry) -> Vec<f64> {
    extract_outcome_features(annotations, stage_split(annotations), registry)
}

/// Stage two once any proposal has been made.
pub fn current_stage(annotations: &[TacticAnnotation]) -> Stage {
    if annotations.iter().any(|a| a.proposal) {
        Stage::Two
    } else {
        Stage::One
    }
}

/// Feature rows and labels of the dialogs that carry a success label.
pub fn outcome_dataset(
    dialogs: &[AnnotatedDialog],
    labels: &BTreeMap<String, SuccessLabel>,
    registry: &TacticRegistry,
) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for d in dialogs {
        let Some(label) = labels.get(&d.dialog.id).and_then(|l| l.as_bool()) else {
            continue;
        };
        x.push(extract_outcome_features(&d.annotations, d.stages(), registry));
        y.push(label);
    }
    (x, y)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub train: f64,
    pub dev: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub format_version: u32,
    pub registry: TacticRegistry,
    pub feature_names: Vec<String>,
    pub model: LogisticModel,
    pub accuracy: AccuracyReport,
    #[serde(default)]
    pub config_hash: String,
}

impl OutcomeModel {
    /// An untrained model: every prediction is 0.5.
    pub fn zeros(registry: TacticRegistry) -> Self {
        let names = feature_names(&registry);
        Self {
            format_version: OUTCOME_FORMAT_VERSION,
            model: LogisticModel::zeros(names.len()),
            registry,
            feature_names: names,
            accuracy: AccuracyReport::default(),
            config_hash: String::new(),
        }
    }

    pub fn predict_success(&self, features: &[f64]) -> Result<f64, LogisticError> {
        self.model.predict_proba(features)
    }

    /// Keeps each candidate whose extra seller use in the current stage
    /// raises the success probability. Compared in logit space, which is
    /// the same order as probability without sigmoid saturation.
    pub fn select_tactics(
        &self,
        candidates: &BTreeSet<Tactic>,
        features: &[f64],
        stage: Stage,
    ) -> Result<BTreeSet<Tactic>, LogisticError> {
        let base = self.model.logit(features)?;
        let mut selected = BTreeSet::new();
        for &t in candidates {
            let Some(idx) = self.registry.index_of(t) else {
                continue;
            };
            let mut x = features.to_vec();
            x[feature_index(idx, Role::Seller, stage)] += 1.0;
            if self.model.logit(&x)? > base {
                selected.insert(t);
            }
        }
        Ok(selected)
    }

    pub fn accuracy_on(&self, x: &[Vec<f64>], y: &[bool]) -> Result<f64, LogisticError> {
        self.model.accuracy(x, y)
    }

    /// Seller weights per tactic, strongest stage-2 weight first. Weights
    /// live in the standardized feature space; `scale` gives the training
    /// standard deviation of each raw count.
    pub fn report_weights(&self) -> Vec<WeightRow> {
        let mut rows: Vec<WeightRow> = self
            .registry
            .iter()
            .enumerate()
            .map(|(t, tactic)| {
                let i1 = feature_index(t, Role::Seller, Stage::One);
                let i2 = feature_index(t, Role::Seller, Stage::Two);
                WeightRow {
                    tactic,
                    stage1: self.model.weights[i1],
                    stage2: self.model.weights[i2],
                    scale1: self.model.scaling.scale[i1],
                    scale2: self.model.scaling.scale[i2],
                }
            })
            .collect();
        rows.sort_by(|a, b| b.stage2.abs().total_cmp(&a.stage2.abs()));
        rows
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("outcome model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, OutcomeError> {
        let m: OutcomeModel =
            serde_json::from_str(text).map_err(|e| OutcomeError::Artifact(e.to_string()))?;
        if m.format_version != OUTCOME_FORMAT_VERSION {
            return Err(OutcomeError::Artifact(format!(
                "unsupported format version {}",
                m.format_version
            )));
        }
        let dim = m.registry.len() * 4;
        if m.feature_names != feature_names(&m.registry)
            || m.model.weights.len() != dim
            || m.model.scaling.mean.len() != dim
            || m.model.scaling.scale.len() != dim
        {
            return Err(OutcomeError::Artifact("feature layout does not match registry".into()));
        }
        let finite = m.model.weights.iter().all(|w| w.is_finite()) && m.model.bias.is_finite();
        if !finite {
            return Err(OutcomeError::Artifact("non-finite weights".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub tactic: Tactic,
    pub stage1: f64,
    pub stage2: f64,
    pub scale1: f64,
    pub scale2: f64,
}

/// Fits the outcome classifier on labeled train dialogs, picking ℓ2 on dev.
pub fn train_outcome(
    train: &[AnnotatedDialog],
    dev: &[AnnotatedDialog],
    labels: &BTreeMap<String, SuccessLabel>,
    registry: &TacticRegistry,
    l2_grid: &[f64],
) -> Result<OutcomeModel, OutcomeError> {
    let (tx, ty) = outcome_dataset(train, labels, registry);
    let (dx, dy) = outcome_dataset(dev, labels, registry);
    fit_rows(&tx, &ty, &dx, &dy, registry, l2_grid)
}

pub(crate) fn fit_rows(
    tx: &[Vec<f64>],
    ty: &[bool],
    dx: &[Vec<f64>],
    dy: &[bool],
    registry: &TacticRegistry,
    l2_grid: &[f64],
) -> Result<OutcomeModel, OutcomeError> {
    if tx.is_empty() {
        return Err(OutcomeError::NoData("train"));
    }
    // Without dev data the first grid value is used.
    let (model, dev_acc) = if dx.is_empty() {
        let m = logistic::fit(tx, ty, l2_grid[0])?;
        (m, 0.0)
    } else {
        logistic::fit_select_on_dev(tx, ty, dx, dy, l2_grid)?
    };
    let train_acc = model.accuracy(tx, ty)?;
    let mut out = OutcomeModel::zeros(registry.clone());
    out.model = model;
    out.accuracy = AccuracyReport {
        train: train_acc,
        dev: dev_acc,
        test: None,
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::Mention;

    fn ann(turn: usize, speaker: Role) -> TacticAnnotation {
        TacticAnnotation::empty(turn, speaker)
    }

    #[test]
    fn empty_dialog_is_zero() {
        let reg = TacticRegistry::default();
        assert_eq!(prefix_features(&[], &reg), vec![0.0; reg.len() * 4]);
    }

    #[test]
    fn seller_greeting_before_boundary_counts_in_stage_one() {
        let reg = TacticRegistry::default();
        let mut a0 = ann(0, Role::Seller);
        a0.mentions.push(Mention { position: 0, tactic: Tactic::PoliteGreeting });
        let x = extract_outcome_features(
            &[a0, ann(1, Role::Buyer), ann(2, Role::Seller)],
            StageSplit { boundary: Some(2) },
            &reg,
        );
        let idx = feature_index(reg.index_of(Tactic::PoliteGreeting).unwrap(), Role::Seller, Stage::One);
        assert_eq!(x[idx], 1.0);
        assert_eq!(x.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn mentions_count_individually() {
        let reg = TacticRegistry::default();
        let mut a = ann(0, Role::Buyer);
        a.mentions.push(Mention { position: 1, tactic: Tactic::Hedge });
        a.mentions.push(Mention { position: 4, tactic: Tactic::Hedge });
        a.flags.insert(Tactic::ProposePrice);
        a.proposal = true;
        let x = prefix_features(&[a], &reg);
        let h = reg.index_of(Tactic::Hedge).unwrap();
        let p = reg.index_of(Tactic::ProposePrice).unwrap();
        assert_eq!(x[feature_index(h, Role::Buyer, Stage::Two)], 2.0);
        assert_eq!(x[feature_index(p, Role::Buyer, Stage::Two)], 1.0);
    }

    #[test]
    fn names_follow_layout() {
        let reg = TacticRegistry::default();
        let names = feature_names(&reg);
        assert_eq!(names[0], "describe_product/seller/stage1");
        assert_eq!(names[3], "describe_product/buyer/stage2");
    }

    #[test]
    fn zero_model_predicts_half_and_selects_nothing() {
        let reg = TacticRegistry::default();
        let m = OutcomeModel::zeros(reg.clone());
        let x = vec![1.0; reg.len() * 4];
        assert_eq!(m.predict_success(&x).unwrap(), 0.5);
        let all: BTreeSet<Tactic> = reg.iter().collect();
        assert!(m.select_tactics(&all, &x, Stage::Two).unwrap().is_empty());
        assert!(m.report_weights().iter().all(|r| r.stage1 == 0.0 && r.stage2 == 0.0));
        assert!(m.predict_success(&x[1..]).is_err());
    }
}
