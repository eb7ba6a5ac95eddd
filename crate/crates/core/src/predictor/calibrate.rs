//! Per-tactic threshold calibration and F1 scoring.

use serde::{Deserialize, Serialize};

pub const GRID_STEPS: usize = 1000;
pub const ABSENT_THRESHOLD: f64 = 0.5;

pub fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

fn counts(probs: &[f64], gold: &[bool], gamma: f64) -> (usize, usize, usize) {
    let mut c = (0, 0, 0);
    for (p, y) in probs.iter().zip(gold) {
        match (*p > gamma, *y) {
            (true, true) => c.0 += 1,
            (true, false) => c.1 += 1,
            (false, true) => c.2 += 1,
            _ => {}
        }
    }
    c
}

pub fn f1_at(probs: &[f64], gold: &[bool], gamma: f64) -> f64 {
    let (tp, fp, fn_) = counts(probs, gold, gamma);
    f1(tp, fp, fn_)
}

/// Grid value `i/1000` maximizing F1 of `p > γ`; ties go to the smallest
/// γ, and a tactic with no gold positives gets 0.5.
pub fn calibrate_one(probs: &[f64], gold: &[bool]) -> f64 {
    if !gold.iter().any(|y| *y) {
        return ABSENT_THRESHOLD;
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..=GRID_STEPS {
        let gamma = i as f64 / GRID_STEPS as f64;
        let score = f1_at(probs, gold, gamma);
        if score > best.0 {
            best = (score, gamma);
        }
    }
    best.1
}

/// `probs[n][j]`, `gold[n][j]` for example n and tactic j.
pub fn calibrate_thresholds(probs: &[Vec<f64>], gold: &[Vec<bool>], tactics: usize) -> Vec<f64> {
    (0..tactics)
        .map(|j| {
            let p: Vec<f64> = probs.iter().map(|r| r[j]).collect();
            let y: Vec<bool> = gold.iter().map(|r| r[j]).collect();
            calibrate_one(&p, &y)
        })
        .collect()
}

pub fn decide(probs: &[f64], thresholds: &[f64]) -> Vec<bool> {
    probs.iter().zip(thresholds).map(|(p, g)| p > g).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub micro_f1: f64,
    pub macro_f1: f64,
    /// `None` for tactics with no gold and no predicted positives.
    pub per_tactic: Vec<Option<f64>>,
    pub examples: usize,
}

/// Micro and macro F1 over all (example, tactic) decisions. Tactics that
/// never occur in gold or predictions are left out of the macro average.
pub fn score(decisions: &[Vec<bool>], gold: &[Vec<bool>], tactics: usize) -> F1Report {
    let mut total = (0, 0, 0);
    let mut per_tactic = Vec::with_capacity(tactics);
    for j in 0..tactics {
        let mut c = (0, 0, 0);
        for (d, y) in decisions.iter().zip(gold) {
            match (d[j], y[j]) {
                (true, true) => c.0 += 1,
                (true, false) => c.1 += 1,
                (false, true) => c.2 += 1,
                _ => {}
            }
        }
        total = (total.0 + c.0, total.1 + c.1, total.2 + c.2);
        per_tactic.push((c != (0, 0, 0)).then(|| f1(c.0, c.1, c.2)));
    }
    let defined: Vec<f64> = per_tactic.iter().flatten().copied().collect();
    let macro_f1 = if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    F1Report {
        micro_f1: f1(total.0, total.1, total.2),
        macro_f1,
        per_tactic,
        examples: gold.len(),
    }
}

/// Predicts every tactic with its training frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalBaseline {
    pub frequency: Vec<f64>,
}

impl MarginalBaseline {
    pub fn fit(gold: &[Vec<bool>], tactics: usize) -> Self {
        let n = gold.len().max(1) as f64;
        let frequency = (0..tactics)
            .map(|j| gold.iter().filter(|r| r[j]).count() as f64 / n)
            .collect();
        Self { frequency }
    }

    pub fn predict(&self, examples: usize) -> Vec<Vec<f64>> {
        vec![self.frequency.clone(); examples]
    }
}
