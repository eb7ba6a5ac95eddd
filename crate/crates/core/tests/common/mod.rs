// Fixtures and independent oracles shared by the topic tests and the
// acceptance run.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use coach_core::corpus::{
    apply_labels, label_outcomes, Category, Dialog, Event, EventKind, Outcome, Scenario, Stage,
    SuccessLabel, DEFAULT_TAIL_FRACTION,
};
use coach_core::detector::{AnnotatedDialog, Detector, LexiconSet, Mention, TacticAnnotation};
use coach_core::engine::metrics::{filter_sessions, metrics, FilterCounts};
use coach_core::engine::scripted::{simulate, BuyerPolicy, ScriptedBuyer, ScriptedSeller, SellerScript};
use coach_core::engine::{ActionKind, Coach, Session, Status, TraceRecord, Transcript};
use coach_core::logistic::{LogisticModel, Scaling, DEFAULT_L2_GRID};
use coach_core::outcome::shallow::train_shallow_baseline;
use coach_core::outcome::{feature_index, outcome_dataset, train_outcome, OutcomeModel};
use coach_core::predictor::calibrate::{calibrate_thresholds, decide, score, MarginalBaseline};
use coach_core::predictor::model::{Ablation, Dims, Grads, Params, TacticStep};
use coach_core::predictor::train::{train_predictor, PredictorConfig};
use coach_core::predictor::PredictorData;
use coach_core::realizer::{ExemplarIndex, IndexEntry, Suggestion};
use coach_core::synth::{catalog, demo_coach, planted_outcome_corpus, planted_predictor_corpus};
use coach_core::tactic::{Role, Tactic, TacticRegistry};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn detector() -> Arc<Detector> {
    Arc::new(Detector::rule_only(TacticRegistry::default(), Arc::new(LexiconSet::builtin())))
}

pub fn coach(det: &Detector) -> Arc<Coach> {
    Arc::new(demo_coach(det, 1))
}

pub fn car() -> Scenario {
    catalog().into_iter().find(|s| s.category == Category::Car).unwrap()
}

pub fn msg(s: &str) -> EventKind {
    EventKind::Message(s.into())
}

pub fn tactic_set(mask: &[bool]) -> BTreeSet<Tactic> {
    TacticRegistry::default().from_vector(mask)
}

// ---- protocol ----

/// Legality written out by hand: (status, speaker, action) -> legal.
pub fn expected_legal(status: &str, speaker: Role, action: ActionKind) -> bool {
    use ActionKind::*;
    match (status, action) {
        ("closed", _) => false,
        (_, Quit) => true,
        ("open_fresh", Message | Offer) => true,
        ("open_after_buyer", Message) => speaker == Role::Seller,
        ("open_after_seller", Message) => speaker == Role::Buyer,
        ("open_after_buyer" | "open_after_seller", Offer) => true,
        ("open_fresh" | "open_after_buyer" | "open_after_seller", Accept | Reject) => false,
        ("pending_from_buyer", Accept | Reject) => speaker == Role::Seller,
        ("pending_from_seller", Accept | Reject) => speaker == Role::Buyer,
        ("pending_from_buyer" | "pending_from_seller", Message | Offer) => false,
        other => panic!("missing row {other:?}"),
    }
}

pub fn kind_for(action: ActionKind) -> EventKind {
    match action {
        ActionKind::Message => msg("hello"),
        ActionKind::Offer => EventKind::Offer(100.0),
        ActionKind::Accept => EventKind::Accept,
        ActionKind::Reject => EventKind::Reject,
        ActionKind::Quit => EventKind::Quit,
    }
}

/// Checks every (status, speaker, action) cell and returns how many.
pub fn check_legality_table() -> usize {
    let statuses = [
        ("open_fresh", Status::Open { last_message: None }),
        ("open_after_buyer", Status::Open { last_message: Some(Role::Buyer) }),
        ("open_after_seller", Status::Open { last_message: Some(Role::Seller) }),
        ("pending_from_buyer", Status::OfferPending { price: 5.0, proposer: Role::Buyer, last_message: None }),
        ("pending_from_seller", Status::OfferPending { price: 5.0, proposer: Role::Seller, last_message: Some(Role::Buyer) }),
        ("closed", Status::Closed { outcome: Outcome::NoDeal }),
    ];
    let mut checked = 0;
    for (name, status) in &statuses {
        for speaker in [Role::Seller, Role::Buyer] {
            for action in ActionKind::ALL {
                let want = expected_legal(name, speaker, action);
                assert_eq!(status.check(speaker, action).is_ok(), want, "{name} {speaker} {action:?}");
                assert_eq!(status.apply(speaker, &kind_for(action)).is_ok(), want, "{name} {speaker} {action:?}");
                checked += 1;
            }
        }
    }
    checked
}

/// Independent computation of "the seller may act next" from the log.
pub fn seller_to_act(events: &[Event]) -> bool {
    let mut last_msg = None;
    let mut pending: Option<Role> = None;
    for e in events {
        match e.kind {
            EventKind::Message(_) => last_msg = Some(e.speaker),
            EventKind::Offer(_) => pending = Some(e.speaker),
            EventKind::Reject => pending = None,
            EventKind::Accept | EventKind::Quit => return false,
        }
    }
    match pending {
        Some(p) => p == Role::Buyer,
        None => last_msg != Some(Role::Seller),
    }
}

const LINES: &[&str] = &[
    "hi there",
    "would you take $9000?",
    "i can throw in the roof rack",
    "it is definitely in great shape",
    "thanks, maybe later",
    "how about 12000",
    "i know it has new tires",
];

/// Plays `runs` random legal interleavings and checks that a suggestion
/// appears exactly when the seller is to act. Returns the suggestion count.
pub fn fuzz_sessions(runs: usize, seed: u64) -> usize {
    let det = detector();
    let coach = coach(&det);
    let scenarios = catalog();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suggestions = 0;
    for run in 0..runs {
        let sc = scenarios[run % scenarios.len()].clone();
        let mut s = Session::new(format!("f{run}"), sc, det.clone(), Some(coach.clone()));
        for _ in 0..rng.random_range(1..14) {
            let legal: Vec<(Role, ActionKind)> = [Role::Seller, Role::Buyer]
                .into_iter()
                .flat_map(|r| ActionKind::ALL.map(|a| (r, a)))
                .filter(|(r, a)| s.status().check(*r, *a).is_ok())
                // Quits are rare so sessions get long.
                .filter(|(_, a)| *a != ActionKind::Quit || rng.random_bool(0.05))
                .collect();
            let Some(&(role, action)) = legal.choose(&mut rng) else { break };
            let kind = match action {
                ActionKind::Message => msg(LINES.choose(&mut rng).unwrap()),
                ActionKind::Offer => EventKind::Offer(rng.random_range(100.0..15000.0f64).round()),
                other => kind_for(other),
            };
            let got = s.apply(role, kind).unwrap();
            assert_eq!(got.is_some(), seller_to_act(s.events()), "run {run}");
            if let Some(sugg) = got {
                suggestions += 1;
                let rec = s.trace().last().unwrap();
                assert_eq!(rec.turn, s.events().len());
                assert!(sugg.tactics.is_subset(&rec.candidates));
                assert_eq!(sugg, rec.suggestion);
            }
        }
        s.dialog().validate().unwrap();
    }
    suggestions
}

// ---- metrics fixture ----

pub fn record(selected: &[Tactic], followed: &[bool]) -> TraceRecord {
    TraceRecord {
        turn: 0,
        candidates: selected.iter().copied().collect(),
        selected: selected.iter().copied().collect(),
        suggestion: Suggestion::default(),
        followed: Some(selected.iter().copied().zip(followed.iter().copied()).collect()),
    }
}

// List 100, target 50, so the ratio of a sale at p is (p - 50) / 50.
pub fn scenario_100() -> Scenario {
    Scenario {
        id: "fixture".into(),
        title: "fixture".into(),
        description: "a fixture item".into(),
        category: Category::Furniture,
        list_price: 100.0,
        buyer_target: 50.0,
    }
}

pub struct Turn(pub Role, pub EventKind, pub &'static [Tactic]);

pub fn transcript(id: &str, coached: bool, turns: Vec<Turn>, trace: Vec<TraceRecord>) -> Transcript {
    let events: Vec<Event> = turns
        .iter()
        .enumerate()
        .map(|(i, t)| Event::new(i, t.0, t.1.clone()))
        .collect();
    let annotations: Vec<TacticAnnotation> = turns
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut a = TacticAnnotation::empty(i, t.0);
            for (k, tac) in t.2.iter().enumerate() {
                if *tac == Tactic::ProposePrice {
                    a.flags.insert(*tac);
                    a.proposal = true;
                } else {
                    a.mentions.push(Mention { position: k, tactic: *tac });
                }
            }
            a
        })
        .collect();
    let outcome = Outcome::derive(&events).unwrap();
    let dialog = Dialog { id: id.into(), scenario: scenario_100(), events, outcome };
    dialog.validate().unwrap();
    Transcript {
        status: Status::Closed { outcome },
        dialog,
        annotations,
        coached,
        coach_trace: trace,
    }
}

fn chat(n: usize) -> Vec<Turn> {
    (0..n)
        .map(|i| {
            let r = if i % 2 == 0 { Role::Buyer } else { Role::Seller };
            Turn(r, msg("hello"), &[])
        })
        .collect()
}

/// Four coached sessions and two baseline sessions.
pub fn six_sessions() -> (Vec<Transcript>, Vec<Transcript>) {
    use Role::*;
    use Tactic::*;
    // S1: agreed at 75 (r = 0.5); seller proposes in a message with a
    // hedge and by offer; adherence 1/2.
    let mut t1 = chat(4);
    t1.push(Turn(Buyer, msg("b"), &[]));
    t1.push(Turn(Seller, msg("s"), &[ProposePrice, Hedge]));
    t1.push(Turn(Seller, EventKind::Offer(75.0), &[ProposePrice]));
    t1.push(Turn(Buyer, EventKind::Accept, &[]));
    let s1 = transcript("s1", true, t1, vec![record(&[Hedge, SideOffer], &[true, false])]);
    // S2: agreed at 90 (r = 0.8); a bare price message; adherence 1/1.
    let mut t2 = chat(4);
    t2.push(Turn(Buyer, msg("b"), &[]));
    t2[3] = Turn(Seller, msg("s"), &[ProposePrice]);
    t2.push(Turn(Buyer, EventKind::Offer(90.0), &[ProposePrice]));
    t2.push(Turn(Seller, EventKind::Accept, &[]));
    let s2 = transcript("s2", true, t2, vec![record(&[ProposePrice], &[true])]);
    // S3: no deal; one price message with certainty; adherence 1/4.
    let mut t3 = chat(6);
    t3[5] = Turn(Seller, msg("s"), &[ProposePrice, CertaintyWord]);
    t3.push(Turn(Buyer, EventKind::Quit, &[]));
    let s3 = transcript(
        "s3",
        true,
        t3,
        vec![record(&[Hedge, Informal, Dominance, SideOffer], &[true, false, false, false])],
    );
    // S4: agreed at 100 but adherence 1/10, dropped.
    let mut t4 = chat(6);
    t4.push(Turn(Buyer, EventKind::Offer(100.0), &[ProposePrice]));
    t4.push(Turn(Seller, EventKind::Accept, &[]));
    let trace4 = (0..5).map(|k| record(&[Hedge, Informal], &[k == 0, false])).collect();
    let s4 = transcript("s4", true, t4, trace4);
    // S5: uncoached, only four messages, dropped.
    let mut t5 = chat(4);
    t5.push(Turn(Buyer, EventKind::Offer(95.0), &[ProposePrice]));
    t5.push(Turn(Seller, EventKind::Accept, &[]));
    let s5 = transcript("s5", false, t5, vec![]);
    // S6: uncoached baseline, agreed at 60 (r = 0.2).
    let mut t6 = chat(5);
    t6.push(Turn(Seller, EventKind::Offer(60.0), &[ProposePrice]));
    t6.push(Turn(Buyer, EventKind::Accept, &[]));
    let s6 = transcript("s6", false, t6, vec![]);
    (vec![s1, s2, s3, s4], vec![s5, s6])
}

/// The six-session metrics against values computed by hand.
pub fn check_six_session_metrics() {
    let (coached, baseline) = six_sessions();
    let (kept, counts) = filter_sessions(&coached);
    assert_eq!(counts, FilterCounts { kept: 3, too_short: 0, low_adherence: 1 });
    let (base, base_counts) = filter_sessions(&baseline);
    assert_eq!(base_counts, FilterCounts { kept: 1, too_short: 1, low_adherence: 0 });

    let m = metrics(&kept, Some(&base));
    assert_eq!(m.sessions, 3);
    assert_eq!(m.completion, 2.0 / 3.0);
    assert_eq!(m.mean_ratio, Some((0.5 + 0.8) / 2.0));
    assert_eq!(m.delta_profit, Some(((0.5 + 0.8) / 2.0 - 0.2) / 0.2));
    assert_eq!(m.seller_proposals, 4.0 / 3.0);
    assert_eq!(m.co_tactic_rate, Some(2.0 / 3.0));
}

pub fn scripted_run(follow: bool, seed: u64, scenario: &Scenario) -> Session {
    let det = detector();
    let mut s = Session::new(format!("e2e-{seed}"), scenario.clone(), det.clone(), Some(coach(&det)));
    let mut buyer = ScriptedBuyer::new(BuyerPolicy { seed, ..BuyerPolicy::default() }, scenario);
    let script = SellerScript { seed, follow_coach: follow, ..SellerScript::default() };
    let mut seller = ScriptedSeller::new(script, scenario);
    simulate(&mut s, &mut buyer, &mut seller, 60);
    s
}

/// Runs every catalog scenario twice in both seller modes and checks the
/// transcripts are byte-identical and rebuildable from the event log.
pub fn check_scripted_replay(seed: u64) {
    for scenario in catalog() {
        for follow in [true, false] {
            let a = scripted_run(follow, seed, &scenario);
            let b = scripted_run(follow, seed, &scenario);
            assert!(a.status().is_closed());
            assert_eq!(
                serde_json::to_string(&a.transcript()).unwrap(),
                serde_json::to_string(&b.transcript()).unwrap()
            );
            let det = detector();
            let mut r = Session::new(a.id.clone(), scenario.clone(), det.clone(), Some(coach(&det)));
            for e in a.events() {
                r.apply(e.speaker, e.kind.clone()).unwrap();
            }
            assert_eq!(r.trace(), a.trace());
            assert_eq!(r.transcript(), a.transcript());
        }
    }
}

// ---- outcome ----

pub struct Planted {
    pub train: Vec<AnnotatedDialog>,
    pub dev: Vec<AnnotatedDialog>,
    pub test: Vec<AnnotatedDialog>,
    pub labels: BTreeMap<String, SuccessLabel>,
}

pub fn planted() -> Planted {
    let mut all = planted_outcome_corpus(2400, 11);
    let test = all.split_off(1400);
    let dev = all.split_off(1000);
    let train = all;
    let raw: Vec<_> = train.iter().map(|d| d.dialog.clone()).collect();
    let (thresholds, mut labels) = label_outcomes(&raw, DEFAULT_TAIL_FRACTION).unwrap();
    for split in [&dev, &test] {
        let raw: Vec<_> = split.iter().map(|d| d.dialog.clone()).collect();
        labels.extend(apply_labels(&thresholds, &raw));
    }
    Planted { train, dev, test, labels }
}

pub fn dialogs(a: &[AnnotatedDialog]) -> Vec<Dialog> {
    a.iter().map(|d| d.dialog.clone()).collect()
}

pub struct PlantedOutcome {
    pub accuracy: f64,
    pub model: OutcomeModel,
    pub shallow_accuracy: f64,
}

pub fn planted_outcome_run(p: &Planted) -> PlantedOutcome {
    let reg = TacticRegistry::default();
    let model = train_outcome(&p.train, &p.dev, &p.labels, &reg, DEFAULT_L2_GRID).unwrap();
    let (sx, sy) = outcome_dataset(&p.test, &p.labels, &reg);
    let accuracy = model.accuracy_on(&sx, &sy).unwrap();
    let shallow =
        train_shallow_baseline(&dialogs(&p.train), &dialogs(&p.dev), &p.labels, DEFAULT_L2_GRID)
            .unwrap();
    let shallow_accuracy = shallow.accuracy_on(&dialogs(&p.test), &p.labels).unwrap();
    PlantedOutcome { accuracy, model, shallow_accuracy }
}

pub fn outcome_model(weights: Vec<f64>, bias: f64, mean: Vec<f64>, scale: Vec<f64>) -> OutcomeModel {
    let mut m = OutcomeModel::zeros(TacticRegistry::default());
    m.model = LogisticModel {
        weights,
        bias,
        l2: 0.0,
        scaling: Scaling { mean, scale },
    };
    m
}

/// Candidates whose extra seller use in `stage` raises the predicted
/// success, found by re-evaluating the model. Compared on the logit since
/// the probability rounds to 1.0 for large logits.
pub fn select_by_brute_force(
    m: &OutcomeModel,
    cands: &BTreeSet<Tactic>,
    x: &[f64],
    stage: Stage,
) -> BTreeSet<Tactic> {
    let reg = TacticRegistry::default();
    let z0 = m.model.logit(x).unwrap();
    cands
        .iter()
        .copied()
        .filter(|t| {
            let mut y = x.to_vec();
            y[feature_index(reg.index_of(*t).unwrap(), Role::Seller, stage)] += 1.0;
            m.model.logit(&y).unwrap() > z0
        })
        .collect()
}

pub fn select_by_sign(m: &OutcomeModel, cands: &BTreeSet<Tactic>, stage: Stage) -> BTreeSet<Tactic> {
    let reg = TacticRegistry::default();
    cands
        .iter()
        .copied()
        .filter(|t| m.model.weights[feature_index(reg.index_of(*t).unwrap(), Role::Seller, stage)] > 0.0)
        .collect()
}

// ---- realizer ----

/// Max Jaccard by floating point over every candidate, ties to the
/// smallest (dialog id, turn).
pub fn retrieve_by_scan(idx: &ExemplarIndex, tactic: Tactic, current: &BTreeSet<Tactic>) -> Option<IndexEntry> {
    let score = |e: &IndexEntry| {
        let inter = e.dialog_tactics.intersection(current).count() as f64;
        let union = e.dialog_tactics.union(current).count() as f64;
        if union == 0.0 { 0.0 } else { inter / union }
    };
    let cands: Vec<&IndexEntry> = idx.entries.iter().filter(|e| e.turn_tactics.contains(&tactic)).collect();
    let best = cands.iter().map(|e| score(e)).fold(f64::NEG_INFINITY, f64::max);
    cands
        .into_iter()
        .filter(|e| (score(e) - best).abs() < 1e-12)
        .min_by(|a, b| (&a.dialog_id, a.turn).cmp(&(&b.dialog_id, b.turn)))
        .cloned()
}

pub fn random_entry(rng: &mut ChaCha8Rng) -> IndexEntry {
    let reg = TacticRegistry::default();
    let k = reg.len();
    let id = rng.random_range(0..6);
    let turn = rng.random_range(0..8);
    let mask = |rng: &mut ChaCha8Rng| -> Vec<bool> { (0..k).map(|_| rng.random_bool(0.3)).collect() };
    let mut turn_tactics = tactic_set(&mask(rng));
    turn_tactics.insert(reg.get(rng.random_range(0..k)).unwrap());
    let mut dialog_tactics = tactic_set(&mask(rng));
    dialog_tactics.extend(turn_tactics.iter().copied());
    IndexEntry {
        text: format!("d{id}/{turn}"),
        turn_tactics,
        dialog_tactics,
        dialog_id: format!("d{id}"),
        turn,
    }
}

// ---- predictor ----

pub fn small_config() -> PredictorConfig {
    PredictorConfig {
        hidden: 16,
        word_dim: Some(12),
        tactic_dim: 8,
        product_dim: 4,
        ..PredictorConfig::default()
    }
}

pub fn tiny_dims() -> Dims {
    Dims {
        vocab: 10,
        tactics: 3,
        word: 3,
        tactic: 2,
        product: 2,
        hidden: 4,
    }
}

pub fn random_steps(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<TacticStep> {
    (0..n)
        .map(|_| TacticStep {
            tactic: if rng.random_bool(0.8) {
                Some(rng.random_range(0..k))
            } else {
                None
            },
            flags: (0..k).map(|_| rng.random_bool(0.4)).collect(),
        })
        .collect()
}

/// Largest relative gap between backprop and central differences over
/// every parameter of a tiny model. Gradients below 1e-7 in magnitude must
/// agree to 1e-9 absolute instead; a miss there counts as infinite error.
pub fn predictor_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Params::init(tiny_dims(), &mut rng);
    // Non-zero output bias so every path is exercised.
    p.out_b.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    let words: Vec<usize> = (0..7).map(|_| rng.random_range(0..10)).collect();
    let steps = random_steps(&mut rng, 5, 3);
    let target = vec![true, false, true];
    let cat = Category::Furniture;

    let loss_of = |p: &Params| {
        let f = p.forward::<ChaCha8Rng>(&words, &steps, cat, Ablation::FULL, None);
        Params::loss(&f, &target)
    };
    let fwd = p.forward::<ChaCha8Rng>(&words, &steps, cat, Ablation::FULL, None);
    let mut g = Grads::zeros(&p);
    p.backward(&fwd, &target, Ablation::FULL, &mut g);

    let h = 1e-5;
    let nudge = |q: &mut Params, name: &str, k: usize, by: f64| {
        let mut t = q.tensors_mut();
        t.iter_mut().find(|(n, _)| *n == name).unwrap().1[k] += by;
    };
    let mut worst: f64 = 0.0;
    let names: Vec<&str> = p.tensors().iter().map(|(n, _)| *n).collect();
    for name in names {
        let analytic = g.dense(name, &p);
        for (k, a) in analytic.iter().enumerate() {
            let mut q = p.clone();
            nudge(&mut q, name, k, h);
            let up = loss_of(&q);
            nudge(&mut q, name, k, -2.0 * h);
            let down = loss_of(&q);
            let numeric = (up - down) / (2.0 * h);
            let scale = a.abs().max(numeric.abs());
            let err = if scale < 1e-7 {
                if (a - numeric).abs() < 1e-9 { 0.0 } else { f64::INFINITY }
            } else {
                (a - numeric).abs() / scale
            };
            worst = worst.max(err);
        }
    }
    worst
}

pub struct PredictorScores {
    pub full: f64,
    pub baseline: f64,
    pub no_tactics: f64,
}

/// Micro-F1 on the planted transition corpus for the full model, the
/// marginal-frequency baseline and the model without the tactic encoder.
pub fn planted_predictor_scores() -> PredictorScores {
    let reg = TacticRegistry::default();
    let train = planted_predictor_corpus(300, 1);
    let dev = planted_predictor_corpus(100, 2);
    let test = planted_predictor_corpus(100, 3);
    let config = small_config();

    let mut full = train_predictor(&train, &dev, &reg, &config, None, 7).unwrap();
    let dev_data = PredictorData::build(&dev, &full.vocab, &reg);
    let test_data = PredictorData::build(&test, &full.vocab, &reg);
    full.calibrate(&dev_data);
    let full_f1 = full.evaluate(&test_data).micro_f1;

    let train_data = PredictorData::build(&train, &full.vocab, &reg);
    let base = MarginalBaseline::fit(&train_data.gold(), reg.len());
    let thresholds = calibrate_thresholds(&base.predict(dev_data.examples.len()), &dev_data.gold(), reg.len());
    let decisions: Vec<Vec<bool>> = base
        .predict(test_data.examples.len())
        .iter()
        .map(|p| decide(p, &thresholds))
        .collect();
    let base_f1 = score(&decisions, &test_data.gold(), reg.len()).micro_f1;

    let ablated_config = PredictorConfig {
        ablation: Ablation::TURN_PRODUCT,
        ..config
    };
    let mut ablated = train_predictor(&train, &dev, &reg, &ablated_config, None, 7).unwrap();
    ablated.calibrate(&dev_data);
    let ablated_f1 = ablated.evaluate(&test_data).micro_f1;
    PredictorScores { full: full_f1, baseline: base_f1, no_tactics: ablated_f1 }
}
