//! Word lists and word ratings behind the rule-based tactic detectors.
//!
//! Lexicon files are UTF-8: the first line is `#category: <name>`, then
//! one entry per line. An entry is a literal token sequence; a trailing `*`
//! turns its last token into a prefix match.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("{path}: {reason}")]
    Load { path: PathBuf, reason: String },
    #[error("{path}: line {line}: {reason}")]
    Entry {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("dominance table {path}: {reason}")]
    Dominance { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pattern {
    tokens: Vec<String>,
    prefix: bool,
}

impl Pattern {
    pub fn parse(entry: &str) -> Result<Self, String> {
        let entry = entry.trim().to_lowercase();
        if entry.is_empty() {
            return Err("empty entry".into());
        }
        let (body, prefix) = match entry.strip_suffix('*') {
            Some(b) => (b.trim_end().to_string(), true),
            None => (entry.clone(), false),
        };
        if body.contains('*') {
            return Err(format!("`*` is only allowed at the end: `{entry}`"));
        }
        let tokens: Vec<String> = body.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err(format!("entry `{entry}` has no tokens"));
        }
        Ok(Self { tokens, prefix })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn matches_at(&self, tokens: &[String], at: usize) -> bool {
        if at + self.tokens.len() > tokens.len() {
            return false;
        }
        let last = self.tokens.len() - 1;
        self.tokens.iter().enumerate().all(|(i, p)| {
            let t = &tokens[at + i];
            if i == last && self.prefix {
                t.starts_with(p.as_str())
            } else {
                t == p
            }
        })
    }
}

/// A named, deduplicated set of lowercase patterns.
#[derive(Debug, Clone)]
pub struct Lexicon {
    category: String,
    patterns: Vec<Pattern>,
    // first token -> pattern indices, longest first
    by_first: HashMap<String, Vec<usize>>,
    // single-token prefix patterns, longest first
    prefix_first: Vec<usize>,
}

impl Lexicon {
    pub fn new<I, S>(category: &str, entries: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for e in entries {
            set.insert(Pattern::parse(e.as_ref())?);
        }
        if set.is_empty() {
            return Err(format!("lexicon `{category}` has no entries"));
        }
        Ok(Self::index(category.to_string(), set.into_iter().collect()))
    }

    fn index(category: String, mut patterns: Vec<Pattern>) -> Self {
        patterns.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        let mut by_first: HashMap<String, Vec<usize>> = HashMap::new();
        let mut prefix_first = Vec::new();
        for (i, p) in patterns.iter().enumerate() {
            if p.prefix && p.len() == 1 {
                prefix_first.push(i);
            } else {
                by_first.entry(p.tokens[0].clone()).or_default().push(i);
            }
        }
        Self {
            category,
            patterns,
            by_first,
            prefix_first,
        }
    }

    /// Parses the lexicon file format from a string.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty file")?;
        let category = header
            .trim()
            .strip_prefix("#category:")
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .ok_or("missing `#category:` header")?;
        let mut set = BTreeSet::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let p = Pattern::parse(line).map_err(|e| format!("line {}: {e}", i + 2))?;
            set.insert(p);
        }
        if set.is_empty() {
            return Err(format!("lexicon `{category}` has no entries"));
        }
        Ok(Self::index(category.to_string(), set.into_iter().collect()))
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = fs::read_to_string(path).map_err(|e| LexiconError::Load {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::parse(&text).map_err(|reason| LexiconError::Load {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    fn longest_match_at(&self, tokens: &[String], at: usize) -> Option<usize> {
        let literal = self
            .by_first
            .get(&tokens[at])
            .and_then(|cands| cands.iter().find(|i| self.patterns[**i].matches_at(tokens, at)));
        let prefix = self
            .prefix_first
            .iter()
            .find(|i| self.patterns[**i].matches_at(tokens, at));
        match (literal, prefix) {
            (Some(a), Some(b)) => Some(self.patterns[*a].len().max(self.patterns[*b].len())),
            (Some(a), None) => Some(self.patterns[*a].len()),
            (None, Some(b)) => Some(self.patterns[*b].len()),
            (None, None) => None,
        }
    }

    /// Non-overlapping matches scanning left to right, longest pattern
    /// first at each position. Returns the start index of every match.
    pub fn match_positions(&self, tokens: &[String]) -> Vec<usize> {
        let mut positions = Vec::new();
        let mut at = 0;
        while at < tokens.len() {
            match self.longest_match_at(tokens, at) {
                Some(len) => {
                    positions.push(at);
                    at += len;
                }
                None => at += 1,
            }
        }
        positions
    }
}

/// Number of matches and their start positions.
pub fn count_matches(tokens: &[String], lex: &Lexicon) -> (usize, Vec<usize>) {
    let positions = lex.match_positions(tokens);
    (positions.len(), positions)
}

/// Word → dominance rating. Absent words have no rating.
#[derive(Debug, Clone, Default)]
pub struct DominanceTable {
    scores: HashMap<String, f64>,
}

impl DominanceTable {
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut scores = HashMap::new();
        for (w, s) in pairs {
            let w = w.into();
            if !s.is_finite() {
                return Err(format!("non-finite score for `{w}`"));
            }
            scores.insert(w.to_lowercase(), s);
        }
        Ok(Self { scores })
    }

    /// Reads a `word,dominance` CSV (header required, extra columns ignored).
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self, String> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
        let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
        let (w, d) = match (col("word"), col("dominance")) {
            (Some(w), Some(d)) => (w, d),
            _ => return Err("header must contain `word,dominance`".into()),
        };
        let mut pairs = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let word = rec.get(w).unwrap_or_default().trim().to_string();
            let score: f64 = rec
                .get(d)
                .unwrap_or_default()
                .trim()
                .parse()
                .map_err(|_| format!("row {}: bad dominance value", i + 2))?;
            pairs.push((word, score));
        }
        Self::from_pairs(pairs)
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let f = fs::File::open(path).map_err(|e| LexiconError::Dominance {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_csv(f).map_err(|reason| LexiconError::Dominance {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn get(&self, word: &str) -> Option<f64> {
        self.scores.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Mean rating over the rated tokens, `None` if nothing is rated.
pub fn mean_dominance(tokens: &[String], table: &DominanceTable) -> Option<f64> {
    let (sum, n) = tokens
        .iter()
        .filter_map(|t| table.get(t))
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

macro_rules! builtin {
    ($($name:ident => $file:literal,)*) => {
        /// Lexicons shipped with the crate.
        pub mod builtin {
            $(pub const $name: &str = include_str!(concat!("../lexicons/", $file));)*

            pub const ALL: &[(&str, &str)] = &[$(($file, $name),)*];
        }
    };
}

builtin! {
    HEDGES => "hedges.txt",
    FACTIVE => "factive.txt",
    CERTAINTY => "certainty.txt",
    GRATITUDE => "gratitude.txt",
    GREETING => "greeting.txt",
    APOLOGY => "apology.txt",
    FIRST_PERSON => "first_person.txt",
    FAMILY => "family.txt",
    FRIEND => "friend.txt",
    INFORMAL => "informal.txt",
    POSITIVE => "positive.txt",
    NEGATIVE => "negative.txt",
    SIDE_OFFER => "side_offer.txt",
    INTERESTS => "interests.txt",
    DOMINANCE_EXCERPT => "dominance_excerpt.csv",
}
