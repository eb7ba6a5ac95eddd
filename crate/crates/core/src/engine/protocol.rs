//! Session status machine.
//!
//! Messages alternate strictly. Either party may make an offer while the
//! session is open; only the other party may then accept or reject it.
//! A reject reopens the session, an accept or a quit closes it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EventKind, Outcome};
use crate::tactic::Role;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Open {
        /// Speaker of the latest message, which may not send the next one.
        last_message: Option<Role>,
    },
    OfferPending {
        price: f64,
        proposer: Role,
        last_message: Option<Role>,
    },
    Closed {
        outcome: Outcome,
    },
}

impl Default for Status {
    fn default() -> Self {
        Status::Open { last_message: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Message,
    Offer,
    Accept,
    Reject,
    Quit,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [
        ActionKind::Message,
        ActionKind::Offer,
        ActionKind::Accept,
        ActionKind::Reject,
        ActionKind::Quit,
    ];

    pub fn of(kind: &EventKind) -> Self {
        match kind {
            EventKind::Message(_) => ActionKind::Message,
            EventKind::Offer(_) => ActionKind::Offer,
            EventKind::Accept => ActionKind::Accept,
            EventKind::Reject => ActionKind::Reject,
            EventKind::Quit => ActionKind::Quit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "code", content = "detail", rename_all = "snake_case")]
pub enum ProtocolError {
    #[error("session is closed")]
    Closed,
    #[error("it is not {0}'s turn to send a message")]
    OutOfTurn(Role),
    #[error("an offer is pending; {0} must accept or reject it")]
    OfferPending(Role),
    #[error("there is no offer to answer")]
    NoOffer,
    #[error("{0} cannot answer their own offer")]
    OwnOffer(Role),
    #[error("offer price must be a positive number")]
    BadPrice,
}

impl ProtocolError {
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::Closed => "closed",
            ProtocolError::OutOfTurn(_) => "out_of_turn",
            ProtocolError::OfferPending(_) => "offer_pending",
            ProtocolError::NoOffer => "no_offer",
            ProtocolError::OwnOffer(_) => "own_offer",
            ProtocolError::BadPrice => "bad_price",
        }
    }
}

impl Status {
    pub fn is_closed(&self) -> bool {
        matches!(self, Status::Closed { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Status::Open { .. } => "open",
            Status::OfferPending { .. } => "offer_pending",
            Status::Closed { .. } => "closed",
        }
    }

    /// Whether `speaker` may perform `action` now. Offer prices are
    /// checked separately in [`Status::apply`].
    pub fn check(&self, speaker: Role, action: ActionKind) -> Result<(), ProtocolError> {
        match (self, action) {
            (Status::Closed { .. }, _) => Err(ProtocolError::Closed),
            (_, ActionKind::Quit) => Ok(()),
            (Status::Open { last_message }, ActionKind::Message) => {
                if *last_message == Some(speaker) {
                    Err(ProtocolError::OutOfTurn(speaker))
                } else {
                    Ok(())
                }
            }
            (Status::Open { .. }, ActionKind::Offer) => Ok(()),
            (Status::Open { .. }, ActionKind::Accept | ActionKind::Reject) => {
                Err(ProtocolError::NoOffer)
            }
            (Status::OfferPending { proposer, .. }, ActionKind::Accept | ActionKind::Reject) => {
                if *proposer == speaker {
                    Err(ProtocolError::OwnOffer(speaker))
                } else {
                    Ok(())
                }
            }
            (Status::OfferPending { proposer, .. }, ActionKind::Message | ActionKind::Offer) => {
                Err(ProtocolError::OfferPending(proposer.other()))
            }
        }
    }

    /// The status after `speaker` performs `kind`.
    pub fn apply(&self, speaker: Role, kind: &EventKind) -> Result<Status, ProtocolError> {
        self.check(speaker, ActionKind::of(kind))?;
        Ok(match (self, kind) {
            (_, EventKind::Quit) => Status::Closed {
                outcome: Outcome::NoDeal,
            },
            (Status::Open { .. }, EventKind::Message(_)) => Status::Open {
                last_message: Some(speaker),
            },
            (Status::Open { last_message }, EventKind::Offer(price)) => {
                if !(price.is_finite() && *price > 0.0) {
                    return Err(ProtocolError::BadPrice);
                }
                Status::OfferPending {
                    price: *price,
                    proposer: speaker,
                    last_message: *last_message,
                }
            }
            (Status::OfferPending { price, .. }, EventKind::Accept) => Status::Closed {
                outcome: Outcome::Agreed { sale_price: *price },
            },
            (Status::OfferPending { last_message, .. }, EventKind::Reject) => Status::Open {
                last_message: *last_message,
            },
            _ => unreachable!("checked above"),
        })
    }

    /// The party expected to act next: `None` when either may (an open
    /// session with no messages yet) or when the session is closed.
    pub fn turn(&self) -> Option<Role> {
        match self {
            Status::Open { last_message } => last_message.map(Role::other),
            Status::OfferPending { proposer, .. } => Some(proposer.other()),
            Status::Closed { .. } => None,
        }
    }

    /// True when the seller may act next, which is when the coach runs.
    pub fn seller_to_act(&self) -> bool {
        !self.is_closed() && self.turn() != Some(Role::Buyer)
    }
}
