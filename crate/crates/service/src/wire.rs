//! JSON messages exchanged over the live channel.

use serde::{Deserialize, Serialize};

use coach_core::corpus::{Event, EventKind};
use coach_core::engine::Status;
use coach_core::realizer::{Exemplar, Suggestion};
use coach_core::tactic::{Role, Tactic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireType {
    Join,
    Joined,
    Message,
    Offer,
    Accept,
    Reject,
    Quit,
    Suggestion,
    State,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSuggestion {
    pub tactics: Vec<Tactic>,
    pub instruction: String,
    pub exemplars: Vec<Exemplar>,
}

impl From<&Suggestion> for WireSuggestion {
    fn from(s: &Suggestion) -> Self {
        Self {
            tactics: s.tactics.iter().copied().collect(),
            instruction: s.instruction.clone(),
            exemplars: s.exemplars.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireState {
    pub events: Vec<Event>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub code: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    #[serde(rename = "type")]
    pub kind: WireType,
    #[serde(default)]
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<WireSuggestion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<WireState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WireError>,
}

impl WireMessage {
    pub fn new(kind: WireType, session_id: &str) -> Self {
        Self {
            kind,
            session_id: session_id.to_string(),
            role: None,
            text: None,
            price: None,
            suggestion: None,
            state: None,
            error: None,
        }
    }

    pub fn joined(session_id: &str, role: Role) -> Self {
        Self {
            role: Some(role),
            ..Self::new(WireType::Joined, session_id)
        }
    }

    pub fn state(session_id: &str, events: &[Event], status: &Status) -> Self {
        Self {
            state: Some(WireState {
                events: events.to_vec(),
                status: status.name().to_string(),
            }),
            ..Self::new(WireType::State, session_id)
        }
    }

    pub fn suggestion(session_id: &str, s: &Suggestion) -> Self {
        Self {
            role: Some(Role::Seller),
            suggestion: Some(s.into()),
            ..Self::new(WireType::Suggestion, session_id)
        }
    }

    pub fn error(session_id: &str, code: &str, detail: impl Into<String>) -> Self {
        Self {
            error: Some(WireError {
                code: code.to_string(),
                detail: detail.into(),
            }),
            ..Self::new(WireType::Error, session_id)
        }
    }

    /// Echo of an applied event.
    pub fn event(session_id: &str, event: &Event) -> Self {
        let (kind, text, price) = match &event.kind {
            EventKind::Message(t) => (WireType::Message, Some(t.clone()), None),
            EventKind::Offer(p) => (WireType::Offer, None, Some(*p)),
            EventKind::Accept => (WireType::Accept, None, None),
            EventKind::Reject => (WireType::Reject, None, None),
            EventKind::Quit => (WireType::Quit, None, None),
        };
        Self {
            role: Some(event.speaker),
            text,
            price,
            ..Self::new(kind, session_id)
        }
    }

    /// The event a client asks to perform, if this is an action message.
    pub fn action(&self) -> Result<Option<EventKind>, &'static str> {
        Ok(Some(match self.kind {
            WireType::Message => EventKind::Message(self.text.clone().ok_or("message needs text")?),
            WireType::Offer => EventKind::Offer(self.price.ok_or("offer needs a price")?),
            WireType::Accept => EventKind::Accept,
            WireType::Reject => EventKind::Reject,
            WireType::Quit => EventKind::Quit,
            WireType::Join => return Ok(None),
            _ => return Err("clients may not send this message type"),
        }))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire message serializes")
    }
}
