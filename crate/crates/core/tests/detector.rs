use std::collections::BTreeSet;
use std::sync::Arc;

use coach_core::corpus::{split_stages, Dialog, Event, EventKind, Outcome};
use coach_core::detector::learned::{train_detectors, Classifier, DetectorModel, DetectorTraining};
use coach_core::detector::{stage_split, Detector, LexiconSet};
use coach_core::synth::{catalog, planted_detector_turns};
use coach_core::tactic::{Role, Tactic, TacticRegistry};

fn trained() -> DetectorModel {
    let turns = planted_detector_turns(240, 1);
    train_detectors(
        &turns,
        &TacticRegistry::default(),
        &LexiconSet::builtin(),
        None,
        6.3,
        &DetectorTraining::default(),
    )
    .unwrap()
}

fn msg(i: usize, who: Role, text: &str) -> Event {
    Event::new(i, who, EventKind::Message(text.into()))
}

#[test]
fn planted_classifiers_separate_in_cross_validation() {
    let model = trained();
    for t in [
        Tactic::DescribeProduct,
        Tactic::ProposePrice,
        Tactic::AddressConcerns,
        Tactic::CommunicateInterests,
    ] {
        let r = &model.report[&t];
        assert_eq!(r.classifier, "logistic");
        assert!(r.cv_accuracy.unwrap() >= 0.95, "{t}: {:?}", r);
    }
    // Never labelled in the planted set: falls back to always-negative.
    assert_eq!(model.classifiers[&Tactic::RephraseDescription], Classifier::AlwaysNegative);
    assert_eq!(model.report[&Tactic::EmbellishProduct].positives, 0);
}

#[test]
fn artifact_round_trips() {
    let model = trained();
    let back = DetectorModel::from_json(&model.to_json()).unwrap();
    assert_eq!(back, model);
    let mut broken: serde_json::Value = serde_json::from_str(&model.to_json()).unwrap();
    broken["format_version"] = 99.into();
    assert!(DetectorModel::from_json(&broken.to_string()).is_err());
}

#[test]
fn too_few_turns_is_an_error() {
    let turns = planted_detector_turns(19, 1);
    let err = train_detectors(
        &turns,
        &TacticRegistry::default(),
        &LexiconSet::builtin(),
        None,
        6.3,
        &DetectorTraining::default(),
    );
    assert!(err.is_err());
}

#[test]
fn trained_classifier_fires_propose_price_on_nine_k() {
    let model = trained();
    let det = Detector::from_model(&model, Arc::new(LexiconSet::builtin()), None).unwrap();
    let car = catalog().into_iter().find(|s| s.list_price == 14500.0).unwrap();
    let ann = det.annotate_text("How about $9k?", Role::Buyer, &car);
    assert!(ann.flags.contains(&Tactic::ProposePrice));
    assert!(ann.proposal);
}

#[test]
fn paper_example_sentence_orders_greeting_before_certainty() {
    let det = Detector::rule_only(TacticRegistry::default(), Arc::new(LexiconSet::builtin()));
    let phone = catalog().into_iter().find(|s| s.list_price == 450.0).unwrap();
    let ann = det.annotate_text(
        "Hi there, I've been using this phone for 2 years and it never had any problem.",
        Role::Seller,
        &phone,
    );
    let seq: Vec<Tactic> = ann.mentions.iter().map(|m| m.tactic).collect();
    assert_eq!(seq, [Tactic::PoliteGreeting, Tactic::CertaintyWord]);
}

#[test]
fn empty_turn_is_empty_annotation() {
    let det = Detector::rule_only(TacticRegistry::default(), Arc::new(LexiconSet::builtin()));
    let ann = det.annotate_text("", Role::Seller, &catalog()[0]);
    assert!(ann.tactics().is_empty());
    assert!(ann.presence(det.registry()).iter().all(|p| !p));
}

#[test]
fn stage_boundary_at_detected_message_proposal() {
    let det = Detector::rule_only(TacticRegistry::default(), Arc::new(LexiconSet::builtin()));
    let car = catalog().remove(0);
    let events = vec![
        msg(0, Role::Buyer, "Is it still available?"),
        msg(1, Role::Seller, "How about $9k?"),
        msg(2, Role::Buyer, "Hmm."),
        msg(3, Role::Seller, "It has new tires."),
        Event::new(4, Role::Buyer, EventKind::Offer(9000.0)),
    ];
    let anns = det.annotate_events(&events, &car);
    assert_eq!(stage_split(&anns).boundary, Some(1));
    let via_corpus = split_stages(&events, |e| anns[e.index].proposal);
    assert_eq!(via_corpus, stage_split(&anns));
}

#[test]
fn did_not_propose_first_tracks_first_proposer() {
    let det = Detector::rule_only(TacticRegistry::default(), Arc::new(LexiconSet::builtin()));
    let car = catalog().remove(0);
    let buyer_first = vec![
        msg(0, Role::Seller, "Hello."),
        msg(1, Role::Buyer, "Hi."),
        msg(2, Role::Seller, "It runs well."),
        Event::new(3, Role::Buyer, EventKind::Offer(9000.0)),
        Event::new(4, Role::Seller, EventKind::Offer(12000.0)),
        msg(5, Role::Buyer, "Hmm."),
        msg(6, Role::Seller, "That is fair."),
    ];
    let anns = det.annotate_events(&buyer_first, &car);
    let fired: Vec<usize> = anns
        .iter()
        .filter(|a| a.flags.contains(&Tactic::DidNotProposeFirst))
        .map(|a| a.turn)
        .collect();
    assert_eq!(fired, vec![4]);

    let seller_first = vec![
        Event::new(0, Role::Seller, EventKind::Offer(14000.0)),
        msg(1, Role::Buyer, "Too much."),
    ];
    let anns = det.annotate_events(&seller_first, &car);
    assert!(anns
        .iter()
        .filter(|a| a.speaker == Role::Seller)
        .all(|a| !a.flags.contains(&Tactic::DidNotProposeFirst)));

    let none = vec![msg(0, Role::Seller, "Hello."), msg(1, Role::Buyer, "Hi.")];
    assert!(det
        .annotate_events(&none, &car)
        .iter()
        .all(|a| !a.flags.contains(&Tactic::DidNotProposeFirst)));
}

#[test]
fn presence_matches_mentions_and_flags_and_is_deterministic() {
    let model = trained();
    let det = Detector::from_model(&model, Arc::new(LexiconSet::builtin()), None).unwrap();
    let reg = det.registry().clone();
    for t in planted_detector_turns(60, 9) {
        let dialog = Dialog {
            id: "x".into(),
            scenario: t.scenario.clone(),
            events: vec![
                msg(0, Role::Buyer, t.previous_text.as_deref().unwrap_or("")),
                msg(1, Role::Seller, &t.text),
            ],
            outcome: Outcome::NoDeal,
        };
        let a = det.annotate_dialog(&dialog);
        assert_eq!(a, det.annotate_dialog(&dialog));
        for ann in &a {
            let union: BTreeSet<Tactic> = ann
                .mentions
                .iter()
                .map(|m| m.tactic)
                .chain(ann.flags.iter().copied())
                .collect();
            let presence = ann.presence(&reg);
            for (i, t) in reg.iter().enumerate() {
                assert_eq!(presence[i], union.contains(&t));
            }
            assert!(ann.mentions.windows(2).all(|w| w[0].position <= w[1].position));
        }
    }
}

#[test]
fn registry_restriction_drops_other_tactics() {
    let reg = TacticRegistry::new(vec![Tactic::Hedge]).unwrap();
    let det = Detector::rule_only(reg, Arc::new(LexiconSet::builtin()));
    let ann = det.annotate_text("I could come down a bit.", Role::Seller, &catalog()[0]);
    assert_eq!(ann.tactics(), BTreeSet::from([Tactic::Hedge]));
}
