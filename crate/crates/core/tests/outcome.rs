mod common;

use std::collections::BTreeSet;

use coach_core::corpus::{Stage, SuccessLabel};
use coach_core::detector::{stage_split, AnnotatedDialog};
use coach_core::logistic::{sigmoid, DEFAULT_L2_GRID};
use coach_core::outcome::ablation::{ablate_outcome, FeatureGroups, Group};
use coach_core::outcome::shallow::train_shallow_baseline;
use coach_core::outcome::{
    extract_outcome_features, feature_index, outcome_dataset, prefix_features, train_outcome,
    OutcomeModel,
};
use coach_core::synth::planted_outcome_corpus;
use coach_core::tactic::{Role, Tactic, TacticRegistry};
use common::*;
use proptest::prelude::*;

#[test]
fn planted_side_offer_is_recovered_and_shallow_baseline_is_near_chance() {
    let p = planted();
    let reg = TacticRegistry::default();
    let run = planted_outcome_run(&p);
    assert!(run.accuracy >= 0.95, "accuracy {}", run.accuracy);

    let planted_idx = feature_index(reg.index_of(Tactic::SideOffer).unwrap(), Role::Seller, Stage::Two);
    let w = &run.model.model.weights;
    let best = (0..w.len()).max_by(|a, b| w[*a].total_cmp(&w[*b])).unwrap();
    assert_eq!(best, planted_idx);
    assert!(w.iter().enumerate().all(|(i, v)| i == planted_idx || v.abs() < w[planted_idx]));
    assert_eq!(run.model.report_weights()[0].tactic, Tactic::SideOffer);

    let shallow_acc = run.shallow_accuracy;
    assert!((0.4..=0.6).contains(&shallow_acc), "shallow {shallow_acc}");
    let again =
        train_shallow_baseline(&dialogs(&p.train), &dialogs(&p.dev), &p.labels, DEFAULT_L2_GRID)
            .unwrap();
    assert_eq!(again.accuracy_on(&dialogs(&p.test), &p.labels).unwrap(), shallow_acc);
}

#[test]
fn ablation_removes_planted_signal_only_with_its_groups() {
    let p = planted();
    let reg = TacticRegistry::default();
    let groups = FeatureGroups::default();
    let removals = vec![
        vec![Group::Abstract],
        vec![Group::Lexical],
        vec![Group::Stage1],
        vec![Group::Stage2],
        Group::ALL.to_vec(),
    ];
    let r = ablate_outcome(&p.train, &p.dev, &p.test, &p.labels, &reg, &groups, &removals, DEFAULT_L2_GRID)
        .unwrap();
    assert!(r.full_accuracy >= 0.95);
    assert!(r.rows[0].delta < -0.3, "{:?}", r.rows[0]);
    assert!(r.rows[1].delta.abs() <= 0.02, "{:?}", r.rows[1]);
    assert!(r.rows[2].delta.abs() <= 0.02, "{:?}", r.rows[2]);
    assert!(r.rows[3].delta < -0.3, "{:?}", r.rows[3]);

    let (_, ty) = outcome_dataset(&p.train, &p.labels, &reg);
    let (_, sy) = outcome_dataset(&p.test, &p.labels, &reg);
    let majority = ty.iter().filter(|v| **v).count() * 2 >= ty.len();
    let majority_acc = sy.iter().filter(|v| **v == majority).count() as f64 / sy.len() as f64;
    assert!((r.rows[4].accuracy - majority_acc).abs() < 1e-12);
}

#[test]
fn removing_an_all_zero_group_changes_nothing() {
    let p = planted();
    let reg = TacticRegistry::default();
    let groups = FeatureGroups {
        abstract_tactics: [Tactic::MentionFamily, Tactic::Dominance].into(),
        lexical: BTreeSet::new(),
    };
    let r = ablate_outcome(
        &p.train, &p.dev, &p.test, &p.labels, &reg, &groups, &[vec![Group::Abstract]], DEFAULT_L2_GRID,
    )
    .unwrap();
    assert!(r.rows[0].delta.abs() < 1e-9);
}

#[test]
fn artifact_round_trip() {
    let p = planted();
    let reg = TacticRegistry::default();
    let m = train_outcome(&p.train[..300], &p.dev[..100], &p.labels, &reg, DEFAULT_L2_GRID).unwrap();
    let back = OutcomeModel::from_json(&m.to_json()).unwrap();
    assert_eq!(back, m);
    let (x, _) = outcome_dataset(&p.test[..50], &p.labels, &reg);
    for row in &x {
        assert_eq!(m.predict_success(row).unwrap(), back.predict_success(row).unwrap());
    }
    let broken = m.to_json().replace("\"format_version\": 1", "\"format_version\": 9");
    assert!(OutcomeModel::from_json(&broken).is_err());
}

#[test]
fn single_class_training_is_an_error() {
    let p = planted();
    let reg = TacticRegistry::default();
    let positives: Vec<AnnotatedDialog> = p
        .train
        .iter()
        .filter(|d| p.labels[&d.dialog.id] == SuccessLabel::Positive)
        .cloned()
        .collect();
    assert!(train_outcome(&positives, &[], &p.labels, &reg, DEFAULT_L2_GRID).is_err());
}

#[test]
fn describe_product_with_positive_stage_two_weight_is_selected() {
    let reg = TacticRegistry::default();
    let mut m = OutcomeModel::zeros(reg.clone());
    let d = reg.index_of(Tactic::DescribeProduct).unwrap();
    let h = reg.index_of(Tactic::Hedge).unwrap();
    m.model.weights[feature_index(d, Role::Seller, Stage::Two)] = 0.8;
    m.model.weights[feature_index(h, Role::Seller, Stage::Two)] = -0.3;
    let x = vec![0.0; reg.len() * 4];
    let cands: BTreeSet<Tactic> = [Tactic::DescribeProduct, Tactic::Hedge, Tactic::Informal].into();
    let sel = m.select_tactics(&cands, &x, Stage::Two).unwrap();
    assert_eq!(sel, [Tactic::DescribeProduct].into());
    assert!(m.select_tactics(&cands, &x, Stage::One).unwrap().is_empty());
}

fn model_strategy() -> impl Strategy<Value = OutcomeModel> {
    let dim = TacticRegistry::default().len() * 4;
    (
        prop::collection::vec(prop_oneof![Just(0.0), -2.0..2.0f64], dim),
        -1.0..1.0f64,
        prop::collection::vec(0.0..2.0f64, dim),
        prop::collection::vec(0.2..3.0f64, dim),
    )
        .prop_map(|(w, b, mu, s)| outcome_model(w, b, mu, s))
}

proptest! {
    #[test]
    fn selection_matches_brute_force_and_sign_rule(
        m in model_strategy(),
        counts in prop::collection::vec(0u8..4, TacticRegistry::default().len() * 4),
        cand_mask in prop::collection::vec(any::<bool>(), TacticRegistry::default().len()),
        second_stage in any::<bool>(),
    ) {
        let reg = TacticRegistry::default();
        let x: Vec<f64> = counts.iter().map(|c| *c as f64).collect();
        let stage = if second_stage { Stage::Two } else { Stage::One };
        let cands = reg.from_vector(&cand_mask);
        let got = m.select_tactics(&cands, &x, stage).unwrap();
        prop_assert!(got.is_subset(&cands));

        let brute = select_by_brute_force(&m, &cands, &x, stage);
        let sign = select_by_sign(&m, &cands, stage);
        prop_assert_eq!(&got, &brute);
        prop_assert_eq!(&got, &sign);
    }

    #[test]
    fn doubling_a_positively_weighted_feature_raises_probability(v in 0.5..5.0f64, w in 0.1..2.0f64) {
        let reg = TacticRegistry::default();
        let mut m = OutcomeModel::zeros(reg.clone());
        m.model.weights[5] = w;
        let mut x = vec![0.0; reg.len() * 4];
        x[5] = v;
        let p1 = m.predict_success(&x).unwrap();
        x[5] = 2.0 * v;
        let p2 = m.predict_success(&x).unwrap();
        prop_assert!(p2 > p1);
        prop_assert_eq!(p1, sigmoid(w * v));
    }

    #[test]
    fn stage_counts_sum_to_stage_free_counts(seed in 0u64..500) {
        let reg = TacticRegistry::default();
        let d = &planted_outcome_corpus(1, seed)[0];
        let x = extract_outcome_features(&d.annotations, d.stages(), &reg);
        for (t, tactic) in reg.iter().enumerate() {
            for role in [Role::Seller, Role::Buyer] {
                let total: usize = d.annotations.iter()
                    .filter(|a| a.speaker == role)
                    .map(|a| a.count(tactic))
                    .sum();
                let staged = x[feature_index(t, role, Stage::One)] + x[feature_index(t, role, Stage::Two)];
                prop_assert_eq!(staged, total as f64);
            }
        }
        // The first proposal opens stage two, so no party has a stage-one proposal.
        let p = reg.index_of(Tactic::ProposePrice).unwrap();
        prop_assert_eq!(x[feature_index(p, Role::Seller, Stage::One)], 0.0);
        prop_assert_eq!(x[feature_index(p, Role::Buyer, Stage::One)], 0.0);
        // A prefix before any proposal has no stage-two counts.
        let cut = stage_split(&d.annotations).boundary.unwrap();
        let prefix = prefix_features(&d.annotations[..cut], &reg);
        for (t, _) in reg.iter().enumerate() {
            for role in [Role::Seller, Role::Buyer] {
                prop_assert_eq!(prefix[feature_index(t, role, Stage::Two)], 0.0);
            }
        }
    }
}
