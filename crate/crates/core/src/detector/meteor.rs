//! Exact-match METEOR.
//!
//! Candidate tokens are aligned left to right to unused reference tokens
//! with the same text. When several reference positions are available the
//! one that extends the current chunk wins, otherwise the leftmost.

pub const ALPHA: f64 = 0.9;
pub const PENALTY_GAMMA: f64 = 0.5;
pub const PENALTY_BETA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

pub fn align(candidate: &[String], reference: &[String]) -> Alignment {
    let mut used = vec![false; reference.len()];
    let mut prev: Option<usize> = None;
    let mut matches = 0;
    let mut chunks = 0;
    for tok in candidate {
        let next = prev.map(|p| p + 1);
        let contiguous = next
            .filter(|&j| j < reference.len() && !used[j] && reference[j] == *tok);
        let pick = contiguous.or_else(|| {
            reference
                .iter()
                .enumerate()
                .position(|(j, r)| !used[j] && r == tok)
        });
        match pick {
            Some(j) => {
                if contiguous.is_none() {
                    chunks += 1;
                }
                used[j] = true;
                matches += 1;
                prev = Some(j);
            }
            None => prev = None,
        }
    }
    Alignment { matches, chunks }
}

pub fn meteor(candidate: &[String], reference: &[String]) -> f64 {
    let Alignment { matches, chunks } = align(candidate, reference);
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let p = m / candidate.len() as f64;
    let r = m / reference.len() as f64;
    let fmean = p * r / (ALPHA * p + (1.0 - ALPHA) * r);
    let penalty = PENALTY_GAMMA * (chunks as f64 / m).powf(PENALTY_BETA);
    fmean * (1.0 - penalty)
}
