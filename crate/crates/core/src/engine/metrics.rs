//! Evaluation of completed sessions.

use serde::{Deserialize, Serialize};

use super::session::{adherence, Transcript};
use crate::corpus::{compute_ratio, MIN_MESSAGE_TURNS};
use crate::tactic::{Role, Tactic};

/// Coached sellers who used fewer than this share of suggested tactics are
/// dropped.
pub const MIN_ADHERENCE: f64 = 0.2;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub kept: usize,
    pub too_short: usize,
    pub low_adherence: usize,
}

/// Drops sessions with fewer than five message turns and coached sessions
/// below the adherence floor. Coached sessions without any resolved
/// suggestion are kept.
pub fn filter_sessions(sessions: &[Transcript]) -> (Vec<&Transcript>, FilterCounts) {
    let mut counts = FilterCounts::default();
    let kept: Vec<&Transcript> = sessions
        .iter()
        .filter(|t| {
            if t.dialog.message_count() < MIN_MESSAGE_TURNS {
                counts.too_short += 1;
                return false;
            }
            if t.coached && adherence(&t.coach_trace).is_some_and(|a| a < MIN_ADHERENCE) {
                counts.low_adherence += 1;
                return false;
            }
            true
        })
        .collect();
    counts.kept = kept.len();
    (kept, counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sessions: usize,
    pub completion: f64,
    /// Mean sale-to-list ratio over agreed sessions.
    pub mean_ratio: Option<f64>,
    /// Relative change of mean ratio against the baseline set.
    pub delta_profit: Option<f64>,
    pub seller_proposals: f64,
    /// Share of seller messages proposing a price that also use another
    /// tactic.
    pub co_tactic_rate: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn mean_ratio(sessions: &[&Transcript]) -> Option<f64> {
    let r: Vec<f64> = sessions.iter().filter_map(|t| compute_ratio(&t.dialog)).collect();
    mean(&r)
}

/// Metrics over already filtered sessions. `baseline` feeds Δ%profit.
pub fn metrics(sessions: &[&Transcript], baseline: Option<&[&Transcript]>) -> Metrics {
    let n = sessions.len();
    let agreed = sessions
        .iter()
        .filter(|t| t.dialog.outcome.sale_price().is_some())
        .count();
    let mut proposals = 0usize;
    let mut propose_msgs = 0usize;
    let mut with_other = 0usize;
    for t in sessions {
        for (e, a) in t.dialog.events.iter().zip(&t.annotations) {
            if e.speaker != Role::Seller || !a.has(Tactic::ProposePrice) {
                continue;
            }
            proposals += 1;
            if e.kind.is_message() {
                propose_msgs += 1;
                if a.tactics().len() > 1 {
                    with_other += 1;
                }
            }
        }
    }
    let ratio = mean_ratio(sessions);
    let delta_profit = match (ratio, baseline.and_then(mean_ratio)) {
        (Some(r), Some(b)) if b != 0.0 => Some((r - b) / b),
        _ => None,
    };
    Metrics {
        sessions: n,
        completion: if n == 0 { 0.0 } else { agreed as f64 / n as f64 },
        mean_ratio: ratio,
        delta_profit,
        seller_proposals: if n == 0 { 0.0 } else { proposals as f64 / n as f64 },
        co_tactic_rate: (propose_msgs > 0).then(|| with_other as f64 / propose_msgs as f64),
    }
}
