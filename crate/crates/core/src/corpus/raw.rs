// Conversion from the public CraigslistBargain JSON layout.
//
// Each raw dialog carries two knowledge bases (one per agent) with the
// listing under `item` and the agent's role and target under `personal`.
// Events are `{agent, action, data}` with `data` a string for messages and
// `{price}` for offers. Consecutive messages from the same agent are merged
// so that the normalized log keeps strict turn-taking.

use serde_json::Value;

use super::{Category, Dialog, Event, EventKind, Outcome, Scenario};
use crate::tactic::Role;

type Rejected = (Option<String>, String);

pub fn convert_raw_dialog(v: &Value) -> Result<Dialog, Rejected> {
    let id = v
        .get("uuid")
        .and_then(Value::as_str)
        .map(str::to_string);
    let fail = |reason: String| (id.clone(), reason);

    let kbs = v
        .pointer("/scenario/kbs")
        .and_then(Value::as_array)
        .ok_or_else(|| fail("missing scenario.kbs".into()))?;
    if kbs.len() != 2 {
        return Err(fail(format!("expected 2 knowledge bases, got {}", kbs.len())));
    }

    let mut roles = [Role::Seller; 2];
    let mut buyer_target = None;
    for (agent, kb) in kbs.iter().enumerate() {
        let role = kb
            .pointer("/personal/Role")
            .and_then(Value::as_str)
            .ok_or_else(|| fail(format!("agent {agent} has no role")))?;
        roles[agent] = match role {
            "seller" => Role::Seller,
            "buyer" => Role::Buyer,
            other => return Err(fail(format!("unknown role `{other}`"))),
        };
        if roles[agent] == Role::Buyer {
            buyer_target = kb.pointer("/personal/Target").and_then(Value::as_f64);
        }
    }
    if roles[0] == roles[1] {
        return Err(fail("both agents have the same role".into()));
    }

    let item = kbs[0]
        .get("item")
        .ok_or_else(|| fail("missing item".into()))?;
    let list_price = item
        .get("Price")
        .and_then(Value::as_f64)
        .ok_or_else(|| fail("missing list price".into()))?;
    let buyer_target = buyer_target.ok_or_else(|| fail("missing buyer target".into()))?;
    let category_name = item
        .get("Category")
        .and_then(Value::as_str)
        .or_else(|| v.pointer("/scenario/category").and_then(Value::as_str))
        .ok_or_else(|| fail("missing category".into()))?;
    let category: Category = category_name.parse().map_err(|e| fail(format!("{e}")))?;
    let title = item
        .get("Title")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let description = match item.get("Description") {
        Some(Value::Array(lines)) => lines
            .iter()
            .filter_map(Value::as_str)
            .collect::<Vec<_>>()
            .join(" "),
        Some(Value::String(s)) => s.clone(),
        _ => String::new(),
    };
    let scenario_id = v
        .pointer("/scenario/uuid")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();

    let raw_events = v
        .get("events")
        .and_then(Value::as_array)
        .ok_or_else(|| fail("missing events".into()))?;
    let mut events: Vec<Event> = Vec::with_capacity(raw_events.len());
    for (pos, ev) in raw_events.iter().enumerate() {
        let agent = ev
            .get("agent")
            .and_then(Value::as_u64)
            .filter(|a| *a < 2)
            .ok_or_else(|| fail(format!("event {pos} has no valid agent")))?;
        let speaker = roles[agent as usize];
        let action = ev
            .get("action")
            .and_then(Value::as_str)
            .ok_or_else(|| fail(format!("event {pos} has no action")))?;
        let data = ev.get("data");
        let kind = match action {
            "message" => {
                let text = data.and_then(Value::as_str).unwrap_or_default().to_string();
                if let Some(last) = events.last_mut() {
                    if last.speaker == speaker {
                        if let EventKind::Message(prev) = &mut last.kind {
                            prev.push(' ');
                            prev.push_str(&text);
                            continue;
                        }
                    }
                }
                EventKind::Message(text)
            }
            "offer" => {
                let price = data
                    .and_then(|d| d.get("price"))
                    .and_then(Value::as_f64)
                    .ok_or_else(|| fail(format!("offer event {pos} has no price")))?;
                EventKind::Offer(price)
            }
            "accept" => EventKind::Accept,
            "reject" => EventKind::Reject,
            "quit" => EventKind::Quit,
            other => return Err(fail(format!("unknown action `{other}` at event {pos}"))),
        };
        let index = events.len();
        events.push(Event::new(index, speaker, kind));
    }

    let outcome = Outcome::derive(&events).map_err(fail)?;
    Ok(Dialog {
        id: id.clone().unwrap_or_default(),
        scenario: Scenario {
            id: scenario_id,
            title,
            description,
            category,
            list_price,
            buyer_target,
        },
        events,
        outcome,
    })
}
