//! Feature vectors for the learned tactic classifiers.

use super::embeddings::{cosine_distance, Embeddings};
use super::meteor::meteor;
use super::rules::price_positions;
use crate::lexicon::{count_matches, Lexicon};
use crate::tactic::Tactic;

pub const QUESTION_WORDS: [&str; 12] = [
    "why", "how", "does", "do", "is", "are", "what", "when", "can", "could", "would", "?",
];

/// Everything a classifier may look at for one turn.
#[derive(Debug, Clone, Copy)]
pub struct TurnView<'a> {
    pub tokens: &'a [String],
    pub description: &'a [String],
    /// The other party's message right before this turn.
    pub previous_other: Option<&'a [String]>,
    pub list_price: f64,
}

/// `[overlap_count, meteor, cosine_distance]`.
pub fn description_features(
    tokens: &[String],
    description: &[String],
    embeddings: Option<&Embeddings>,
) -> [f64; 3] {
    let overlap = tokens.iter().filter(|t| description.contains(t)).count() as f64;
    let m = meteor(tokens, description);
    let dist = match embeddings {
        Some(e) => cosine_distance(&e.mean(tokens), &e.mean(description)),
        None => 1.0,
    };
    [overlap, m, dist]
}

pub fn question_indicators(previous: Option<&[String]>) -> [f64; QUESTION_WORDS.len()] {
    let mut out = [0.0; QUESTION_WORDS.len()];
    if let Some(prev) = previous {
        for (slot, q) in out.iter_mut().zip(QUESTION_WORDS) {
            if prev.iter().any(|t| t == q) {
                *slot = 1.0;
            }
        }
    }
    out
}

/// Feature vector for `tactic`. All tactics share the description
/// features; address_concerns adds question indicators from the previous
/// turn, propose_price adds price-token evidence and communicate_interests
/// adds the interest-phrase count.
pub fn extract_classifier_features(
    tactic: Tactic,
    view: &TurnView<'_>,
    embeddings: Option<&Embeddings>,
    interests: &Lexicon,
) -> Vec<f64> {
    let mut f = description_features(view.tokens, view.description, embeddings).to_vec();
    match tactic {
        Tactic::AddressConcerns => f.extend(question_indicators(view.previous_other)),
        Tactic::ProposePrice => {
            let n = price_positions(view.tokens, view.list_price).len() as f64;
            f.push(if n > 0.0 { 1.0 } else { 0.0 });
            f.push(n);
        }
        Tactic::CommunicateInterests => f.push(count_matches(view.tokens, interests).0 as f64),
        _ => {}
    }
    f
}
