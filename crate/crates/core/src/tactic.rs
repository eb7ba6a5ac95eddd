//! Tactic identifiers, speaker roles and the ordered registry that fixes
//! vector layouts for every trained model.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which side of the bargain a participant plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Seller,
    Buyer,
}

impl Role {
    pub fn other(self) -> Role {
        match self {
            Role::Seller => Role::Buyer,
            Role::Buyer => Role::Seller,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Seller => "seller",
            Role::Buyer => "buyer",
        }
    }

    /// Position of the role in feature layouts (seller first).
    pub fn slot(self) -> usize {
        match self {
            Role::Seller => 0,
            Role::Buyer => 1,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

macro_rules! tactics {
    ($($variant:ident => $name:literal,)*) => {
        /// A detectable, actionable negotiation move.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum Tactic {
            $($variant,)*
        }

        impl Tactic {
            pub const ALL: &'static [Tactic] = &[$(Tactic::$variant,)*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(Tactic::$variant => $name,)*
                }
            }
        }

        impl FromStr for Tactic {
            type Err = UnknownTactic;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(Tactic::$variant),)*
                    other => Err(UnknownTactic(other.to_string())),
                }
            }
        }
    };
}

tactics! {
    DescribeProduct => "describe_product",
    RephraseDescription => "rephrase_description",
    EmbellishProduct => "embellish_product",
    AddressConcerns => "address_concerns",
    CommunicateInterests => "communicate_interests",
    ProposePrice => "propose_price",
    DidNotProposeFirst => "did_not_propose_first",
    SideOffer => "side_offer",
    Hedge => "hedge",
    FactiveVerb => "factive_verb",
    CertaintyWord => "certainty_word",
    PoliteGratitude => "polite_gratitude",
    PoliteGreeting => "polite_greeting",
    PoliteApology => "polite_apology",
    PolitePleaseStart => "polite_please_start",
    PolitePleaseLater => "polite_please_later",
    FirstPersonDisclosure => "first_person_disclosure",
    MentionFamily => "mention_family",
    MentionFriend => "mention_friend",
    Informal => "informal",
    Dominance => "dominance",
    SentimentPositive => "sentiment_positive",
    SentimentNegative => "sentiment_negative",
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown tactic id `{0}`")]
pub struct UnknownTactic(pub String);

impl fmt::Display for Tactic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a tactic shows up inside a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchoring {
    /// Tied to word positions; yields ordered mentions.
    Word,
    /// Fires for the turn as a whole (the `b` flag vector).
    Turn,
}

impl Tactic {
    pub fn anchoring(self) -> Anchoring {
        use Tactic::*;
        match self {
            DescribeProduct | RephraseDescription | EmbellishProduct | AddressConcerns
            | CommunicateInterests | ProposePrice | DidNotProposeFirst | Dominance => {
                Anchoring::Turn
            }
            _ => Anchoring::Word,
        }
    }

    /// Tactics detected by trained per-tactic classifiers.
    pub fn is_learned(self) -> bool {
        LEARNED_TACTICS.contains(&self)
    }
}

pub const LEARNED_TACTICS: &[Tactic] = &[
    Tactic::DescribeProduct,
    Tactic::RephraseDescription,
    Tactic::EmbellishProduct,
    Tactic::AddressConcerns,
    Tactic::ProposePrice,
    Tactic::CommunicateInterests,
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("tactic `{0}` listed twice in registry")]
    Duplicate(Tactic),
    #[error("registry is empty")]
    Empty,
}

/// Ordered tactic list. The order fixes every vector dimension of a
/// trained model, so it is stored inside each artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Tactic>", into = "Vec<Tactic>")]
pub struct TacticRegistry {
    order: Vec<Tactic>,
}

impl TacticRegistry {
    pub fn new(order: Vec<Tactic>) -> Result<Self, RegistryError> {
        if order.is_empty() {
            return Err(RegistryError::Empty);
        }
        let mut seen = BTreeSet::new();
        for t in &order {
            if !seen.insert(*t) {
                return Err(RegistryError::Duplicate(*t));
            }
        }
        Ok(Self { order })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn index_of(&self, tactic: Tactic) -> Option<usize> {
        self.order.iter().position(|t| *t == tactic)
    }

    pub fn get(&self, idx: usize) -> Option<Tactic> {
        self.order.get(idx).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = Tactic> + '_ {
        self.order.iter().copied()
    }

    pub fn as_slice(&self) -> &[Tactic] {
        &self.order
    }

    pub fn contains(&self, tactic: Tactic) -> bool {
        self.order.contains(&tactic)
    }

    /// Binary presence vector for a tactic set, in registry order.
    pub fn to_vector(&self, set: &BTreeSet<Tactic>) -> Vec<bool> {
        self.order.iter().map(|t| set.contains(t)).collect()
    }

    pub fn from_vector(&self, v: &[bool]) -> BTreeSet<Tactic> {
        self.order
            .iter()
            .zip(v)
            .filter(|(_, on)| **on)
            .map(|(t, _)| *t)
            .collect()
    }
}

impl Default for TacticRegistry {
    fn default() -> Self {
        Self {
            order: Tactic::ALL.to_vec(),
        }
    }
}

impl TryFrom<Vec<Tactic>> for TacticRegistry {
    type Error = RegistryError;

    fn try_from(v: Vec<Tactic>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<TacticRegistry> for Vec<Tactic> {
    fn from(r: TacticRegistry) -> Self {
        r.order
    }
}
