//! Seeded synthetic data with planted structure, plus the bundled scenario
//! catalog. Used by tests, the acceptance suite and the demo service.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dialog, Event, EventKind, Outcome, Scenario};
use crate::detector::learned::AnnotatedTurn;
use crate::detector::{AnnotatedDialog, Mention, TacticAnnotation};
use crate::tactic::{Role, Tactic};

const CATALOG: &str = include_str!("../data/scenarios.json");

/// Bundled demo scenarios, one per category.
pub fn catalog() -> Vec<Scenario> {
    serde_json::from_str(CATALOG).expect("bundled scenario catalog is valid")
}

const FILLER: &[&str] = &[
    "ok", "sounds", "fine", "let", "me", "think", "about", "that", "sure", "thing", "hmm",
    "yes", "right", "got", "it",
];

/// Annotated turns whose describe_product, propose_price, address_concerns
/// and communicate_interests labels are each carried by a clean feature:
/// description overlap, a `$` amount, a question before the turn, and an
/// interest phrase. rephrase and embellish are never labelled.
pub fn planted_detector_turns(n: usize, seed: u64) -> Vec<AnnotatedTurn> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenarios = catalog();
    (0..n)
        .map(|_| {
            let scenario = scenarios.choose(&mut rng).unwrap().clone();
            let describe = rng.random_bool(0.5);
            let propose = rng.random_bool(0.5);
            let concern = rng.random_bool(0.5);
            let interest = rng.random_bool(0.3);
            let mut words: Vec<String> = Vec::new();
            if describe {
                let desc: Vec<&str> = scenario.description.split_whitespace().collect();
                let start = rng.random_range(0..desc.len().saturating_sub(8).max(1));
                words.extend(desc[start..(start + 8).min(desc.len())].iter().map(|s| s.to_string()));
            } else {
                for _ in 0..rng.random_range(3..7) {
                    words.push(FILLER.choose(&mut rng).unwrap().to_string());
                }
            }
            if interest {
                words.push("i'd like to sell it soon".into());
            }
            if propose {
                let price = (scenario.list_price * rng.random_range(0.6..0.95)).round();
                words.push(format!("how about ${price}?"));
            }
            let previous_text = Some(if concern {
                ["why is it so expensive?", "does it run well?", "how old is it?"]
                    .choose(&mut rng)
                    .unwrap()
                    .to_string()
            } else {
                "ok sounds good.".to_string()
            });
            let mut labels = BTreeSet::new();
            for (on, t) in [
                (describe, Tactic::DescribeProduct),
                (propose, Tactic::ProposePrice),
                (concern, Tactic::AddressConcerns),
                (interest, Tactic::CommunicateInterests),
            ] {
                if on {
                    labels.insert(t);
                }
            }
            AnnotatedTurn {
                scenario,
                text: words.join(" "),
                previous_text,
                labels,
            }
        })
        .collect()
}

const BUYER_LINES: &[&str] = &[
    "hello is this still for sale",
    "what condition is it in",
    "can you tell me more",
    "hmm let me think",
    "ok that sounds interesting",
    "any scratches or damage",
];

const SELLER_LINES: &[&str] = &[
    "it works great",
    "yes it is available",
    "it is in good shape",
    "let me know what you think",
];

/// Annotated dialogs with a planted transition: when the buyer's last turn
/// proposed a price the seller answers with propose_price and a hedge,
/// otherwise with describe_product and positive sentiment. Buyer wording is
/// independent of the proposal flag, so only the tactic sequence carries
/// the signal.
pub fn planted_predictor_corpus(n: usize, seed: u64) -> Vec<AnnotatedDialog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenarios = catalog();
    (0..n)
        .map(|d| {
            let scenario = scenarios.choose(&mut rng).unwrap().clone();
            let rounds = rng.random_range(2..5);
            let mut events = Vec::new();
            let mut annotations = Vec::new();
            for _ in 0..rounds {
                let i = events.len();
                events.push(Event::new(
                    i,
                    Role::Buyer,
                    EventKind::Message(BUYER_LINES.choose(&mut rng).unwrap().to_string()),
                ));
                let proposes = rng.random_bool(0.5);
                let mut b = TacticAnnotation::empty(i, Role::Buyer);
                let opener = *[Tactic::PoliteGreeting, Tactic::Informal, Tactic::Hedge]
                    .choose(&mut rng)
                    .unwrap();
                b.mentions.push(Mention {
                    position: 0,
                    tactic: opener,
                });
                if proposes {
                    b.flags.insert(Tactic::ProposePrice);
                    b.proposal = true;
                }
                annotations.push(b);

                let i = events.len();
                events.push(Event::new(
                    i,
                    Role::Seller,
                    EventKind::Message(SELLER_LINES.choose(&mut rng).unwrap().to_string()),
                ));
                let mut s = TacticAnnotation::empty(i, Role::Seller);
                if proposes {
                    s.flags.insert(Tactic::ProposePrice);
                    s.proposal = true;
                    s.mentions.push(Mention {
                        position: 1,
                        tactic: Tactic::Hedge,
                    });
                } else {
                    s.flags.insert(Tactic::DescribeProduct);
                    s.mentions.push(Mention {
                        position: 2,
                        tactic: Tactic::SentimentPositive,
                    });
                }
                annotations.push(s);
            }
            let i = events.len();
            events.push(Event::new(i, Role::Buyer, EventKind::Quit));
            annotations.push(TacticAnnotation::empty(i, Role::Buyer));
            AnnotatedDialog {
                dialog: Dialog {
                    id: format!("p{d:05}"),
                    scenario,
                    events,
                    outcome: Outcome::NoDeal,
                },
                annotations,
            }
        })
        .collect()
}

const NEUTRAL_LINES: &[&str] = &[
    "i saw your listing online",
    "when can i pick it up",
    "it is in good shape",
    "what is the lowest you would take",
    "that seems a bit high",
    "it has been well kept",
    "i could meet you halfway",
    "let me know what you think",
    "is there any damage",
    "it comes with the original box",
];

const NOISE_TACTICS: &[Tactic] = &[
    Tactic::PoliteGreeting,
    Tactic::PoliteGratitude,
    Tactic::Hedge,
    Tactic::CertaintyWord,
    Tactic::Informal,
    Tactic::SentimentPositive,
    Tactic::SentimentNegative,
    Tactic::FirstPersonDisclosure,
];

/// Completed deals where success is planted in one feature: the seller
/// uses side_offer after the first proposal exactly in the dialogs that
/// end with a high sale-to-list ratio. Every other tactic, including
/// stage-one side offers, and all wording are drawn independently of the
/// outcome. Annotations are constructed directly rather than detected.
pub fn planted_outcome_corpus(n: usize, seed: u64) -> Vec<AnnotatedDialog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenarios = catalog();
    (0..n)
        .map(|d| {
            let scenario = scenarios.choose(&mut rng).unwrap().clone();
            let success = rng.random_bool(0.5);
            let messages = rng.random_range(6..11);
            let boundary = rng.random_range(2..messages - 1);
            let first_speaker = if rng.random_bool(0.5) { Role::Buyer } else { Role::Seller };
            let mut events = Vec::new();
            let mut annotations = Vec::new();
            let mut speaker = first_speaker;
            for i in 0..messages {
                let text = NEUTRAL_LINES.choose(&mut rng).unwrap().to_string();
                events.push(Event::new(i, speaker, EventKind::Message(text)));
                let mut a = TacticAnnotation::empty(i, speaker);
                for _ in 0..rng.random_range(0..3) {
                    let t = *NOISE_TACTICS.choose(&mut rng).unwrap();
                    a.mentions.push(Mention { position: rng.random_range(0..6), tactic: t });
                }
                if rng.random_bool(0.3) {
                    a.flags.insert(Tactic::DescribeProduct);
                }
                if i == boundary {
                    a.flags.insert(Tactic::ProposePrice);
                    a.proposal = true;
                }
                if i < boundary && speaker == Role::Seller && rng.random_bool(0.3) {
                    a.mentions.push(Mention { position: 0, tactic: Tactic::SideOffer });
                }
                if i > boundary && speaker == Role::Buyer && rng.random_bool(0.2) {
                    a.mentions.push(Mention { position: 0, tactic: Tactic::SideOffer });
                }
                a.mentions.sort();
                annotations.push(a);
                speaker = speaker.other();
            }
            if success {
                let seller_stage2: Vec<usize> = (boundary..messages)
                    .filter(|i| annotations[*i].speaker == Role::Seller)
                    .collect();
                let i = *seller_stage2.choose(&mut rng).unwrap();
                annotations[i].mentions.push(Mention { position: 7, tactic: Tactic::SideOffer });
                annotations[i].mentions.sort();
            }
            let ratio = if success {
                rng.random_range(0.6..1.0)
            } else {
                rng.random_range(-0.2..0.4)
            };
            let sale = scenario.buyer_target + ratio * (scenario.list_price - scenario.buyer_target);
            let i = events.len();
            events.push(Event::new(i, Role::Buyer, EventKind::Offer(sale)));
            let mut offer = TacticAnnotation::empty(i, Role::Buyer);
            offer.flags.insert(Tactic::ProposePrice);
            offer.proposal = true;
            annotations.push(offer);
            events.push(Event::new(i + 1, Role::Seller, EventKind::Accept));
            annotations.push(TacticAnnotation::empty(i + 1, Role::Seller));
            AnnotatedDialog {
                dialog: Dialog {
                    id: format!("o{d:05}"),
                    scenario,
                    events,
                    outcome: Outcome::Agreed { sale_price: sale },
                },
                annotations,
            }
        })
        .collect()
}

const EXEMPLAR_LINES: &[&str] = &[
    "i would maybe go a little lower if you can pick it up today.",
    "you know, it has been kept indoors the whole time.",
    "it is definitely in great shape, i guarantee it.",
    "i can throw in delivery for free if we agree today.",
    "i think that is fair, and i noticed it still has the warranty.",
    "it is absolutely worth it, i could deliver it tomorrow.",
];

/// Models for demos and protocol tests: an untrained predictor that
/// proposes every tactic, an outcome model with hand-set seller weights
/// (price proposals, product detail and side offers help in stage two;
/// letting the buyer propose first hurts) and a realizer over a handful of
/// bundled exemplar turns.
pub fn demo_coach(detector: &crate::detector::Detector, seed: u64) -> crate::engine::Coach {
    use std::collections::BTreeMap;
    use std::sync::Arc;

    use crate::corpus::{SuccessLabel, Stage};
    use crate::outcome::{feature_index, OutcomeModel};
    use crate::predictor::model::Vocab;
    use crate::predictor::train::{initialize, PredictorConfig};
    use crate::realizer::{build_index, Realizer, Templates};

    let registry = detector.registry().clone();
    let texts: Vec<String> = catalog()
        .iter()
        .map(|s| s.description.clone())
        .chain(EXEMPLAR_LINES.iter().map(|s| s.to_string()))
        .collect();
    let vocab_words: BTreeSet<String> = texts
        .iter()
        .flat_map(|t| crate::detector::tokenize::words(t))
        .collect();
    let config = PredictorConfig {
        hidden: 16,
        word_dim: Some(8),
        tactic_dim: 8,
        product_dim: 4,
        ..PredictorConfig::default()
    };
    let (mut predictor, _) = initialize(&registry, Vocab::new(vocab_words), &config, None, seed)
        .expect("demo predictor config is valid");
    // Untrained probabilities carry no signal, so every tactic is a
    // candidate and the outcome weights alone decide.
    predictor.thresholds = vec![0.0; registry.len()];

    let mut outcome = OutcomeModel::zeros(registry.clone());
    let weights: &[(Tactic, Stage, f64)] = &[
        (Tactic::ProposePrice, Stage::Two, 2.0),
        (Tactic::DescribeProduct, Stage::One, 0.5),
        (Tactic::DescribeProduct, Stage::Two, 1.0),
        (Tactic::SideOffer, Stage::One, -0.3),
        (Tactic::SideOffer, Stage::Two, 1.1),
        (Tactic::DidNotProposeFirst, Stage::One, -0.6),
        (Tactic::DidNotProposeFirst, Stage::Two, -0.6),
        (Tactic::SentimentNegative, Stage::Two, 0.2),
        (Tactic::Hedge, Stage::Two, 0.3),
        (Tactic::CertaintyWord, Stage::Two, 0.4),
        (Tactic::Informal, Stage::One, 0.4),
        (Tactic::Informal, Stage::Two, -0.4),
        (Tactic::PoliteGreeting, Stage::One, 0.3),
    ];
    for (t, stage, w) in weights {
        if let Some(i) = registry.index_of(*t) {
            outcome.model.weights[feature_index(i, Role::Seller, *stage)] = *w;
        }
    }

    let scenario = catalog().remove(0);
    let mut dialogs = Vec::new();
    let mut labels = BTreeMap::new();
    for (k, line) in EXEMPLAR_LINES.iter().enumerate() {
        let events = vec![
            Event::new(0, Role::Buyer, EventKind::Message("is it still available?".into())),
            Event::new(1, Role::Seller, EventKind::Message(line.to_string())),
            Event::new(2, Role::Buyer, EventKind::Quit),
        ];
        let dialog = Dialog {
            id: format!("exemplar-{k}"),
            scenario: scenario.clone(),
            events,
            outcome: Outcome::NoDeal,
        };
        labels.insert(dialog.id.clone(), SuccessLabel::Positive);
        dialogs.push(AnnotatedDialog::new(detector, dialog));
    }
    let realizer = Realizer::new(Templates::builtin(), build_index(&dialogs, &labels, true));
    crate::engine::Coach::new(detector, Arc::new(predictor), Arc::new(outcome), Arc::new(realizer))
        .expect("demo models share the detector registry")
}
