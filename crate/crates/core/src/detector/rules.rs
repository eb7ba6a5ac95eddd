//! Keyword, phrase and rating rules for the word-level tactics.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lexicon::{builtin, count_matches, mean_dominance, DominanceTable, Lexicon, LexiconError};
use crate::tactic::Tactic;

/// Used when no corpus has been seen to calibrate the dominance cut.
pub const DEFAULT_DOMINANCE_THRESHOLD: f64 = 6.3;
/// Percentile of per-turn mean dominance above which a turn fires.
pub const DOMINANCE_PERCENTILE: f64 = 0.75;

#[derive(Debug, Clone)]
pub struct LexiconSet {
    pub hedges: Lexicon,
    pub factive: Lexicon,
    pub certainty: Lexicon,
    pub gratitude: Lexicon,
    pub greeting: Lexicon,
    pub apology: Lexicon,
    pub first_person: Lexicon,
    pub family: Lexicon,
    pub friend: Lexicon,
    pub informal: Lexicon,
    pub positive: Lexicon,
    pub negative: Lexicon,
    pub side_offer: Lexicon,
    pub interests: Lexicon,
    pub dominance: DominanceTable,
}

fn builtin_lexicon(text: &str) -> Lexicon {
    Lexicon::parse(text).expect("bundled lexicon is valid")
}

impl LexiconSet {
    pub fn builtin() -> Self {
        Self {
            hedges: builtin_lexicon(builtin::HEDGES),
            factive: builtin_lexicon(builtin::FACTIVE),
            certainty: builtin_lexicon(builtin::CERTAINTY),
            gratitude: builtin_lexicon(builtin::GRATITUDE),
            greeting: builtin_lexicon(builtin::GREETING),
            apology: builtin_lexicon(builtin::APOLOGY),
            first_person: builtin_lexicon(builtin::FIRST_PERSON),
            family: builtin_lexicon(builtin::FAMILY),
            friend: builtin_lexicon(builtin::FRIEND),
            informal: builtin_lexicon(builtin::INFORMAL),
            positive: builtin_lexicon(builtin::POSITIVE),
            negative: builtin_lexicon(builtin::NEGATIVE),
            side_offer: builtin_lexicon(builtin::SIDE_OFFER),
            interests: builtin_lexicon(builtin::INTERESTS),
            dominance: DominanceTable::from_csv(builtin::DOMINANCE_EXCERPT.as_bytes())
                .expect("bundled dominance excerpt is valid"),
        }
    }

    /// Bundled lists, with any file of the same name found in `dir`
    /// taking precedence (`hedges.txt`, ..., `dominance.csv`).
    pub fn with_overrides(dir: &Path) -> Result<Self, LexiconError> {
        let mut set = Self::builtin();
        let slots: [(&str, &mut Lexicon); 14] = [
            ("hedges.txt", &mut set.hedges),
            ("factive.txt", &mut set.factive),
            ("certainty.txt", &mut set.certainty),
            ("gratitude.txt", &mut set.gratitude),
            ("greeting.txt", &mut set.greeting),
            ("apology.txt", &mut set.apology),
            ("first_person.txt", &mut set.first_person),
            ("family.txt", &mut set.family),
            ("friend.txt", &mut set.friend),
            ("informal.txt", &mut set.informal),
            ("positive.txt", &mut set.positive),
            ("negative.txt", &mut set.negative),
            ("side_offer.txt", &mut set.side_offer),
            ("interests.txt", &mut set.interests),
        ];
        for (file, slot) in slots {
            let path = dir.join(file);
            if path.exists() {
                *slot = Lexicon::load(&path)?;
            }
        }
        let dom = dir.join("dominance.csv");
        if dom.exists() {
            set.dominance = DominanceTable::load(&dom)?;
        }
        Ok(set)
    }

    fn word_lexicons(&self) -> [(Tactic, &Lexicon); 13] {
        [
            (Tactic::SideOffer, &self.side_offer),
            (Tactic::Hedge, &self.hedges),
            (Tactic::FactiveVerb, &self.factive),
            (Tactic::CertaintyWord, &self.certainty),
            (Tactic::PoliteGratitude, &self.gratitude),
            (Tactic::PoliteGreeting, &self.greeting),
            (Tactic::PoliteApology, &self.apology),
            (Tactic::FirstPersonDisclosure, &self.first_person),
            (Tactic::MentionFamily, &self.family),
            (Tactic::MentionFriend, &self.friend),
            (Tactic::Informal, &self.informal),
            (Tactic::SentimentPositive, &self.positive),
            (Tactic::SentimentNegative, &self.negative),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mention {
    pub position: usize,
    pub tactic: Tactic,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleHits {
    /// Ordered by position, then by tactic id order.
    pub mentions: Vec<Mention>,
    pub flags: BTreeSet<Tactic>,
    pub first_person_count: usize,
    pub mean_dominance: Option<f64>,
}

impl RuleHits {
    pub fn tactics(&self) -> BTreeSet<Tactic> {
        self.mentions
            .iter()
            .map(|m| m.tactic)
            .chain(self.flags.iter().copied())
            .collect()
    }
}

pub fn detect_rules(tokens: &[String], lex: &LexiconSet, dominance_threshold: f64) -> RuleHits {
    let mut hits = RuleHits::default();
    for (tactic, lexicon) in lex.word_lexicons() {
        let (count, positions) = count_matches(tokens, lexicon);
        if tactic == Tactic::FirstPersonDisclosure {
            hits.first_person_count = count;
        }
        hits.mentions
            .extend(positions.into_iter().map(|position| Mention { position, tactic }));
    }
    for (position, tok) in tokens.iter().enumerate() {
        if tok == "please" {
            let tactic = if position == 0 {
                Tactic::PolitePleaseStart
            } else {
                Tactic::PolitePleaseLater
            };
            hits.mentions.push(Mention { position, tactic });
        }
    }
    hits.mentions.sort();
    hits.mean_dominance = mean_dominance(tokens, &lex.dominance);
    if hits.mean_dominance.is_some_and(|m| m > dominance_threshold) {
        hits.flags.insert(Tactic::Dominance);
    }
    hits
}

/// Nearest-rank 75th percentile of the defined per-turn means.
pub fn calibrate_dominance<'a, I>(turns: I, table: &DominanceTable) -> Option<f64>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut means: Vec<f64> = turns
        .into_iter()
        .filter_map(|t| mean_dominance(t, table))
        .collect();
    if means.is_empty() {
        return None;
    }
    means.sort_by(f64::total_cmp);
    let rank = crate::corpus::nearest_rank(DOMINANCE_PERCENTILE, means.len());
    Some(means[rank.max(1) - 1])
}

/// Numeric value of an amount token such as `9000`, `$9k`, `12,500` or
/// `640.0`.
pub fn parse_amount(token: &str) -> Option<f64> {
    let body = token.strip_prefix('$').unwrap_or(token);
    let (body, scale) = match body.strip_suffix('k') {
        Some(b) => (b, 1000.0),
        None => (body, 1.0),
    };
    if body.is_empty() || !body.starts_with(|c: char| c.is_ascii_digit()) {
        return None;
    }
    if !body.chars().all(|c| c.is_ascii_digit() || c == ',' || c == '.') {
        return None;
    }
    body.replace(',', "").parse::<f64>().ok().map(|v| v * scale)
}

/// Tokens that read as a price for an item listed at `list_price`:
/// `$` amounts, and bare amounts between 0.3 and 2 times the listing.
pub fn price_positions(tokens: &[String], list_price: f64) -> Vec<usize> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| match parse_amount(t) {
            Some(v) if t.starts_with('$') => v > 0.0,
            Some(v) => v >= 0.3 * list_price && v <= 2.0 * list_price,
            None => false,
        })
        .map(|(i, _)| i)
        .collect()
}
