//! Rule-based participants for solo demos and end-to-end runs.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::protocol::Status;
use super::session::Session;
use crate::corpus::{EventKind, Scenario};
use crate::detector::rules::{parse_amount, price_positions};
use crate::detector::tokenize::words;
use crate::realizer::Suggestion;
use crate::tactic::{Role, Tactic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuyerPolicy {
    pub seed: u64,
    /// Opening bid relative to the buyer target.
    pub open_delta: f64,
    /// Share of the remaining gap to the limit conceded each round.
    pub concession: f64,
    /// Limit as a fraction of the way from target to list price.
    pub limit_fraction: f64,
    /// Relative slack above the limit that is still accepted.
    pub epsilon: f64,
    /// Bargaining rounds before quitting.
    pub max_rounds: usize,
}

impl Default for BuyerPolicy {
    fn default() -> Self {
        Self {
            seed: 0,
            open_delta: 0.0,
            concession: 0.3,
            limit_fraction: 0.5,
            epsilon: 0.02,
            max_rounds: 6,
        }
    }
}

const GREETINGS: &[&str] = &["hi, is this still available?", "hello, i saw your listing.", "hey there, is it for sale?"];
const QUESTIONS: &[&str] = &[
    "what condition is it in?",
    "how long have you had it?",
    "is there any damage i should know about?",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Greet,
    Ask,
    Bargain,
}

/// Deterministic buyer: greets, asks one question, bids from its target
/// upward by a fixed share of the remaining gap, accepts anything within
/// its limit and quits after `max_rounds` bids.
#[derive(Debug, Clone)]
pub struct ScriptedBuyer {
    policy: BuyerPolicy,
    rng: ChaCha8Rng,
    phase: Phase,
    rounds: usize,
    bid: Option<f64>,
    limit: f64,
    target: f64,
}

impl ScriptedBuyer {
    pub fn new(policy: BuyerPolicy, scenario: &Scenario) -> Self {
        let limit = scenario.buyer_target
            + policy.limit_fraction * (scenario.list_price - scenario.buyer_target);
        Self {
            rng: ChaCha8Rng::seed_from_u64(policy.seed),
            policy,
            phase: Phase::Greet,
            rounds: 0,
            bid: None,
            limit,
            target: scenario.buyer_target,
        }
    }

    pub fn limit(&self) -> f64 {
        self.limit
    }

    fn acceptable(&self, price: f64) -> bool {
        price <= self.limit * (1.0 + self.policy.epsilon)
    }

    /// The buyer's next event, or `None` if it is waiting.
    pub fn act(&mut self, session: &Session) -> Option<EventKind> {
        match session.status() {
            Status::Closed { .. } => None,
            Status::OfferPending { price, proposer, .. } => {
                if *proposer == Role::Buyer {
                    return None;
                }
                Some(if self.acceptable(*price) {
                    EventKind::Accept
                } else {
                    EventKind::Reject
                })
            }
            Status::Open { last_message } => {
                if *last_message == Some(Role::Buyer) {
                    return None;
                }
                Some(self.speak(session))
            }
        }
    }

    fn speak(&mut self, session: &Session) -> EventKind {
        match self.phase {
            Phase::Greet => {
                self.phase = Phase::Ask;
                EventKind::Message(GREETINGS.choose(&mut self.rng).unwrap().to_string())
            }
            Phase::Ask => {
                self.phase = Phase::Bargain;
                EventKind::Message(QUESTIONS.choose(&mut self.rng).unwrap().to_string())
            }
            Phase::Bargain => {
                if let Some(q) = latest_seller_price(session).filter(|q| self.acceptable(*q)) {
                    return EventKind::Offer(q);
                }
                if self.rounds >= self.policy.max_rounds {
                    return EventKind::Quit;
                }
                let bid = match self.bid {
                    None => self.target * (1.0 + self.policy.open_delta),
                    Some(b) => b + self.policy.concession * (self.limit - b),
                };
                let bid = bid.min(self.limit).round();
                self.bid = Some(bid);
                self.rounds += 1;
                EventKind::Message(format!("would you take ${bid}?"))
            }
        }
    }
}

/// Most recent price the seller named, in a message or a rejected offer.
pub fn latest_seller_price(session: &Session) -> Option<f64> {
    latest_price(session, Role::Seller)
}

fn latest_price(session: &Session, role: Role) -> Option<f64> {
    let list = session.scenario.list_price;
    session.events().iter().rev().filter(|e| e.speaker == role).find_map(|e| match &e.kind {
        EventKind::Offer(p) => Some(*p),
        EventKind::Message(text) => {
            let tokens = words(text);
            price_positions(&tokens, list)
                .last()
                .and_then(|i| parse_amount(&tokens[*i]))
        }
        _ => None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SellerScript {
    pub seed: u64,
    /// Whether the seller writes the tactics the coach suggests.
    pub follow_coach: bool,
    /// Lowest price accepted, as a fraction from target to list.
    pub floor_fraction: f64,
    pub concession: f64,
}

impl Default for SellerScript {
    fn default() -> Self {
        Self {
            seed: 0,
            follow_coach: true,
            floor_fraction: 0.3,
            concession: 0.2,
        }
    }
}

const SELLER_SMALL_TALK: &[&str] = &["it is in good shape.", "yes it is still available.", "it works fine."];

/// A phrase the rule lexicons recognize for `tactic`, if there is one.
fn phrase(tactic: Tactic, scenario: &Scenario) -> Option<String> {
    use Tactic::*;
    let p = match tactic {
        DescribeProduct => scenario
            .description
            .split_whitespace()
            .take(8)
            .collect::<Vec<_>>()
            .join(" "),
        CommunicateInterests => "i'd like to sell it soon".into(),
        SideOffer => "i can throw in delivery".into(),
        Hedge => "maybe".into(),
        FactiveVerb => "you know".into(),
        CertaintyWord => "it is definitely worth it".into(),
        PoliteGratitude => "thanks".into(),
        PoliteGreeting => "hi".into(),
        PoliteApology => "sorry".into(),
        PolitePleaseLater => "please consider it".into(),
        MentionFamily => "my family loved it".into(),
        MentionFriend => "a friend of mine wanted it".into(),
        Informal => "cool".into(),
        SentimentPositive => "it is great".into(),
        SentimentNegative => "unfortunately that is too low".into(),
        _ => return None,
    };
    Some(p)
}

/// Seeded seller used in end-to-end runs: either writes whatever the coach
/// suggests or follows a fixed script, conceding from list price toward
/// its floor either way.
#[derive(Debug, Clone)]
pub struct ScriptedSeller {
    script: SellerScript,
    rng: ChaCha8Rng,
    ask: f64,
    floor: f64,
    spoke: bool,
}

impl ScriptedSeller {
    pub fn new(script: SellerScript, scenario: &Scenario) -> Self {
        let floor = scenario.buyer_target
            + script.floor_fraction * (scenario.list_price - scenario.buyer_target);
        Self {
            rng: ChaCha8Rng::seed_from_u64(script.seed),
            script,
            ask: scenario.list_price,
            floor,
            spoke: false,
        }
    }

    pub fn act(&mut self, session: &Session) -> Option<EventKind> {
        match session.status() {
            Status::Closed { .. } => None,
            Status::OfferPending { price, proposer, .. } => {
                if *proposer == Role::Seller {
                    return None;
                }
                Some(if *price >= self.floor {
                    EventKind::Accept
                } else {
                    EventKind::Reject
                })
            }
            Status::Open { last_message } => {
                if *last_message == Some(Role::Seller) {
                    return None;
                }
                if let Some(bid) = latest_price(session, Role::Buyer).filter(|b| *b >= self.floor) {
                    return Some(EventKind::Offer(bid));
                }
                Some(EventKind::Message(self.compose(session)))
            }
        }
    }

    fn next_ask(&mut self) -> f64 {
        let ask = self.ask.round();
        self.ask -= self.script.concession * (self.ask - self.floor);
        ask
    }

    fn compose(&mut self, session: &Session) -> String {
        let suggestion: Option<&Suggestion> = session.suggestion();
        let first = !self.spoke;
        self.spoke = true;
        if self.script.follow_coach {
            if let Some(s) = suggestion.filter(|s| !s.tactics.is_empty()) {
                let mut parts: Vec<String> = s
                    .tactics
                    .iter()
                    .filter_map(|t| phrase(*t, &session.scenario))
                    .collect();
                if s.tactics.contains(&Tactic::PolitePleaseStart) {
                    parts.insert(0, "please".into());
                }
                if s.tactics.contains(&Tactic::ProposePrice) {
                    parts.push(format!("i can do ${}", self.next_ask()));
                }
                if !parts.is_empty() {
                    return format!("{}.", parts.join(", "));
                }
            }
        }
        if first {
            return SELLER_SMALL_TALK.choose(&mut self.rng).unwrap().to_string();
        }
        format!("i can do ${}.", self.next_ask())
    }
}

/// Runs the two participants until the session closes or `max_events` is
/// reached (then the buyer quits). The buyer moves first when either may.
pub fn simulate(session: &mut Session, buyer: &mut ScriptedBuyer, seller: &mut ScriptedSeller, max_events: usize) {
    while !session.status().is_closed() {
        if session.events().len() >= max_events {
            session.apply(Role::Buyer, EventKind::Quit).expect("quit is always legal");
            break;
        }
        let order = match session.status().turn() {
            Some(Role::Seller) => [Role::Seller, Role::Buyer],
            _ => [Role::Buyer, Role::Seller],
        };
        let mut acted = false;
        for role in order {
            let action = match role {
                Role::Buyer => buyer.act(session),
                Role::Seller => seller.act(session),
            };
            if let Some(kind) = action {
                session.apply(role, kind).expect("scripted participants act legally");
                acted = true;
                break;
            }
        }
        if !acted {
            session.apply(Role::Buyer, EventKind::Quit).expect("quit is always legal");
        }
    }
}
