mod common;

use std::collections::BTreeSet;

use coach_core::corpus::{Dialog, EventKind, Outcome};
use coach_core::engine::metrics::{filter_sessions, metrics};
use coach_core::engine::scripted::{BuyerPolicy, ScriptedBuyer};
use coach_core::engine::{adherence, ProtocolError, Session, TraceRecord, Transcript};
use coach_core::tactic::{Role, Tactic};
use common::*;

#[test]
fn legality_table_is_exhaustive_and_matches() {
    assert_eq!(check_legality_table(), 6 * 2 * 5);
}

#[test]
fn buyer_message_yields_a_seller_suggestion() {
    let det = detector();
    let mut s = Session::new("s1", car(), det.clone(), Some(coach(&det)));
    assert!(s.suggestion().is_some(), "seller is coached before the first turn");
    let got = s.apply(Role::Buyer, msg("hi, is it still available?")).unwrap();
    assert!(got.is_some());
    assert!(s.apply(Role::Seller, msg("yes it is")).unwrap().is_none());
    assert!(s.suggestion().is_none());
}

#[test]
fn accept_closes_with_agreed_price_and_illegal_events_leave_session_untouched() {
    let det = detector();
    let mut s = Session::new("s2", car(), det, None);
    s.apply(Role::Buyer, msg("hi")).unwrap();
    let before = s.transcript();
    assert_eq!(s.apply(Role::Buyer, msg("hello?")), Err(ProtocolError::OutOfTurn(Role::Buyer)));
    assert_eq!(s.transcript(), before);
    s.apply(Role::Buyer, EventKind::Offer(9000.0)).unwrap();
    assert_eq!(s.apply(Role::Buyer, EventKind::Accept), Err(ProtocolError::OwnOffer(Role::Buyer)));
    s.apply(Role::Seller, EventKind::Accept).unwrap();
    assert_eq!(s.dialog().outcome, Outcome::Agreed { sale_price: 9000.0 });
    s.dialog().validate().unwrap();
    assert_eq!(s.apply(Role::Seller, msg("bye")), Err(ProtocolError::Closed));
}

#[test]
fn expiry_quits_for_the_party_on_turn() {
    let det = detector();
    let mut s = Session::new("s3", car(), det, None);
    s.apply(Role::Buyer, msg("hi")).unwrap();
    s.expire().unwrap();
    let last = s.events().last().unwrap();
    assert_eq!((last.speaker, &last.kind), (Role::Seller, &EventKind::Quit));
    assert_eq!(s.dialog().outcome, Outcome::NoDeal);
}

#[test]
fn suggestions_reach_only_the_seller_turn_over_fuzzed_sessions() {
    assert!(fuzz_sessions(1000, 77) > 1000);
}

#[test]
fn adherence_counts_turn_tactic_pairs() {
    let all = [record(&[Tactic::Hedge, Tactic::SideOffer], &[true, true])];
    assert_eq!(adherence(&all), Some(1.0));
    let none = [record(&[Tactic::Hedge], &[false])];
    assert_eq!(adherence(&none), Some(0.0));
    let mut ten: Vec<TraceRecord> = (0..4)
        .map(|k| record(&[Tactic::Hedge, Tactic::Informal], &[k == 0, k == 1]))
        .collect();
    ten.push(record(&[Tactic::CertaintyWord, Tactic::Dominance], &[false, false]));
    let mut open = record(&[Tactic::Hedge], &[true]);
    open.followed = None;
    ten.push(open);
    assert_eq!(adherence(&ten), Some(0.2));
    assert_eq!(adherence(&[]), None);
}

#[test]
fn followed_flags_come_from_the_sellers_next_turn() {
    let det = detector();
    let mut s = Session::new("s4", car(), det.clone(), Some(coach(&det)));
    s.apply(Role::Buyer, msg("hi, would you take $8000?")).unwrap();
    let selected = s.trace().last().unwrap().selected.clone();
    s.apply(Role::Seller, msg("i can throw in the roof rack, it is definitely great, i can do $12000"))
        .unwrap();
    let rec = s.trace().last().unwrap();
    let followed = rec.followed.as_ref().unwrap();
    assert_eq!(followed.keys().copied().collect::<BTreeSet<_>>(), selected);
    let ann = &s.annotations()[1];
    for (t, f) in followed {
        assert_eq!(*f, ann.has(*t));
    }
}

#[test]
fn metrics_match_hand_computation_on_six_sessions() {
    check_six_session_metrics();
    let (coached, _) = six_sessions();
    let (kept, _) = filter_sessions(&coached);
    let same = metrics(&kept, Some(&kept));
    assert_eq!(same.delta_profit, Some(0.0));
    assert_eq!(metrics(&kept, Some(&[])).delta_profit, None);
    let single = metrics(&kept[..1], None);
    assert_eq!((single.mean_ratio, single.completion), (Some(0.5), 1.0));
}

#[test]
fn transcript_json_round_trips() {
    let (coached, _) = six_sessions();
    for t in coached {
        let json = serde_json::to_string(&t).unwrap();
        let back: Transcript = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        let as_dialog: Dialog = serde_json::from_str(&json).unwrap();
        assert_eq!(as_dialog, t.dialog);
    }
}

#[test]
fn scripted_runs_replay_deterministically() {
    check_scripted_replay(5);
    let on = scripted_run(true, 5, &car());
    let off = scripted_run(false, 5, &car());
    assert_ne!(on.events(), off.events());
    if std::env::var_os("SHOW_E2E").is_some() {
        for e in on.events().iter().chain(off.events()) {
            eprintln!("{:?} {:?}", e.speaker, e.kind);
        }
        eprintln!("{:?}", on.trace().iter().map(|r| &r.selected).collect::<Vec<_>>());
    }
}

#[test]
fn scripted_buyer_accepts_within_limit_and_quits_against_a_wall() {
    let det = detector();
    let sc = car();
    let policy = BuyerPolicy { max_rounds: 3, ..BuyerPolicy::default() };
    let mut s = Session::new("b1", sc.clone(), det.clone(), None);
    let mut buyer = ScriptedBuyer::new(policy.clone(), &sc);
    s.apply(Role::Seller, EventKind::Offer(buyer.limit())).unwrap();
    assert_eq!(buyer.act(&s), Some(EventKind::Accept));

    let mut s = Session::new("b2", sc.clone(), det, None);
    let mut buyer = ScriptedBuyer::new(policy, &sc);
    let mut quit = false;
    for _ in 0..20 {
        let Some(k) = buyer.act(&s) else { break };
        quit = k == EventKind::Quit;
        s.apply(Role::Buyer, k).unwrap();
        if quit {
            break;
        }
        s.apply(Role::Seller, msg("the price is $14500, firm.")).unwrap();
    }
    assert!(quit);
    let bids = s.events().iter().filter(|e| e.speaker == Role::Buyer && e.kind.text().is_some_and(|t| t.contains('$'))).count();
    assert_eq!(bids, 3);
}
