use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use coach_core::corpus::to_jsonl;
use coach_core::detector::{Detector, LexiconSet};
use coach_core::engine::scripted::{simulate, BuyerPolicy, ScriptedBuyer, ScriptedSeller, SellerScript};
use coach_core::engine::Session;
use coach_core::synth::{catalog, demo_coach, planted_detector_turns, planted_outcome_corpus};
use coach_core::tactic::TacticRegistry;
use serde_json::Value;

fn coach(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coach"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = coach(args);
    assert!(
        out.status.success(),
        "coach {args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = coach(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_and_subcommand_are_usage_errors() {
    assert_eq!(coach(&["--bogus"]).status.code(), Some(2));
    assert_eq!(coach(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(coach(&["eval", "predictor", "--fast"]).status.code(), Some(2));
}

#[test]
fn missing_artifacts_fail_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = coach(&["--out", s(dir.path()), "label"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("coach ingest"), "{err}");
}

fn write_prefix(dir: &Path) -> PathBuf {
    let path = dir.join("prefix.json");
    let prefix = serde_json::json!({
        "scenario": {
            "title": "2006 Toyota 4Runner",
            "description": "Selling my truck with only 106k original miles, new tires.",
            "category": "car",
            "list_price": 14500,
            "buyer_target": 8700
        },
        "events": [
            {"index": 0, "speaker": "buyer", "kind": "message", "text": "Hi, is the truck still available?"},
            {"index": 1, "speaker": "seller", "kind": "message", "text": "Yes it is, it has new tires."},
            {"index": 2, "speaker": "buyer", "kind": "offer", "price": 9000}
        ]
    });
    std::fs::write(&path, prefix.to_string()).unwrap();
    path
}

#[test]
fn suggest_after_a_low_buyer_offer_proposes_a_price() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = write_prefix(dir.path());
    let out: Value = serde_json::from_str(&ok(&["suggest", "--demo", "--transcript", s(&prefix)])).unwrap();
    assert_eq!(out["seller_to_act"], true);
    let selected: Vec<&str> = out["selected"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(selected.contains(&"propose_price"), "{selected:?}");
    assert_eq!(out["suggestion"]["tactics"], out["selected"]);
    assert!(!out["suggestion"]["instruction"].as_str().unwrap().is_empty());
}

#[test]
fn suggest_rejects_an_illegal_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut prefix: Value = serde_json::from_str(&std::fs::read_to_string(write_prefix(dir.path())).unwrap()).unwrap();
    // Two buyer messages in a row break turn-taking.
    prefix["events"][1]["speaker"] = "buyer".into();
    std::fs::write(&path, prefix.to_string()).unwrap();
    let out = coach(&["suggest", "--demo", "--transcript", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
}

fn write_inputs(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let dialogs: Vec<_> = planted_outcome_corpus(240, 5).into_iter().map(|a| a.dialog).collect();
    let corpus = dir.join("corpus_in.jsonl");
    std::fs::write(&corpus, to_jsonl(&dialogs).unwrap()).unwrap();
    let turns = dir.join("turns.jsonl");
    let lines: Vec<String> = planted_detector_turns(80, 6)
        .iter()
        .map(|t| serde_json::to_string(t).unwrap())
        .collect();
    std::fs::write(&turns, lines.join("\n")).unwrap();
    let config = dir.join("config.json");
    let c = serde_json::json!({
        "seed": 3,
        "split": {"dev": 0.2, "test": 0.2},
        "predictor": {"hidden": 8, "word_dim": 8, "tactic_dim": 4, "product_dim": 4, "epochs": 2}
    });
    std::fs::write(&config, c.to_string()).unwrap();
    (corpus, turns, config)
}

fn pipeline(config: &Path, corpus: &Path, turns: &Path, out: &Path) -> Vec<(String, String)> {
    let g = ["--config", s(config), "--out", s(out)];
    let run = |rest: &[&str]| {
        let args: Vec<&str> = g.iter().chain(rest).copied().collect();
        ok(&args)
    };
    run(&["ingest", "--format", "normalized", s(corpus)]);
    run(&["label"]);
    run(&["train", "detectors", "--turns", s(turns)]);
    run(&["annotate"]);
    run(&["train", "predictor"]);
    run(&["calibrate"]);
    run(&["train", "outcome"]);
    run(&["train", "baseline"]);
    let table = run(&["eval", "predictor", "--ablate"]);
    for row in ["turn", "+product", "+tactics", "marginal baseline"] {
        assert!(table.lines().any(|l| l.starts_with(row)), "missing {row} in\n{table}");
    }
    run(&["eval", "predictor"]);
    let table = run(&["eval", "outcome", "--ablate"]);
    assert!(table.contains("n-gram baseline") && table.contains("- abstract"), "{table}");
    let table = run(&["weights", "--top", "5"]);
    assert_eq!(table.lines().count(), 7, "{table}");

    for name in ["corpus.jsonl", "labels.json", "detector.json", "annotations.jsonl", "outcome.json", "shallow.json", "exemplars.json"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let hash = serde_json::from_str::<Value>(&std::fs::read_to_string(out.join("labels.json")).unwrap()).unwrap()["config_hash"]
        .as_str()
        .unwrap()
        .to_string();
    for name in ["detector.json", "outcome.json", "shallow.json", "exemplars.json"] {
        let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join(name)).unwrap()).unwrap();
        assert_eq!(v["config_hash"], hash.as_str(), "{name}");
    }
    let predictor = coach_core::predictor::artifact::load(&out.join("predictor.ncpm")).unwrap();
    assert_eq!(predictor.meta.config_hash, hash);

    let mut reports: Vec<(String, String)> = std::fs::read_dir(out.join("reports"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    reports.sort();
    reports
}

#[test]
fn pipeline_runs_end_to_end_and_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, turns, config) = write_inputs(dir.path());
    let a = pipeline(&config, &corpus, &turns, &dir.path().join("a"));
    let b = pipeline(&config, &corpus, &turns, &dir.path().join("b"));
    assert_eq!(a.len(), 12, "{:?}", a.iter().map(|r| &r.0).collect::<Vec<_>>());
    for ((na, ra), (nb, rb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert_eq!(ra, rb, "{na} differs between identical runs");
    }

    // Trained models coach a transcript prefix.
    let prefix = write_prefix(dir.path());
    let out = dir.path().join("a");
    let step: Value = serde_json::from_str(&ok(&["--config", s(&config), "--out", s(&out), "suggest", "--transcript", s(&prefix)])).unwrap();
    assert_eq!(step["probabilities"].as_array().unwrap().len(), 23);

    // A config with another tactic order is refused.
    let mut order: Vec<String> = TacticRegistry::default().iter().map(|t| t.as_str().to_string()).collect();
    order.reverse();
    let mut c: Value = serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    c["registry"] = serde_json::json!(order);
    let reordered = dir.path().join("reordered.json");
    std::fs::write(&reordered, c.to_string()).unwrap();
    for cmd in [["eval", "outcome"], ["eval", "predictor"]] {
        let r = coach(&["--config", s(&reordered), "--out", s(&out), cmd[0], cmd[1]]);
        assert_eq!(r.status.code(), Some(1));
        assert!(String::from_utf8_lossy(&r.stderr).contains("tactic order"));
    }
}

fn write_sessions(dir: &Path, follow: bool) {
    std::fs::create_dir_all(dir).unwrap();
    let detector = Arc::new(Detector::rule_only(TacticRegistry::default(), Arc::new(LexiconSet::builtin())));
    let coach = Arc::new(demo_coach(&detector, 0));
    for (k, scenario) in catalog().into_iter().enumerate() {
        let mut session = Session::new(format!("s{k}"), scenario.clone(), detector.clone(), follow.then(|| coach.clone()));
        let mut buyer = ScriptedBuyer::new(BuyerPolicy::default(), &scenario);
        let script = SellerScript { seed: k as u64, follow_coach: follow, ..SellerScript::default() };
        let mut seller = ScriptedSeller::new(script, &scenario);
        simulate(&mut session, &mut buyer, &mut seller, 40);
        let json = serde_json::to_string(&session.transcript()).unwrap();
        std::fs::write(dir.join(format!("s{k}.json")), json).unwrap();
    }
}

#[test]
fn metrics_compare_coached_and_baseline_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let coached = dir.path().join("coached");
    let baseline = dir.path().join("baseline");
    write_sessions(&coached, true);
    write_sessions(&baseline, false);
    let out = dir.path().join("out");
    let table = ok(&["--out", s(&out), "metrics", "--coached", s(&coached), "--baseline", s(&baseline)]);
    assert!(table.lines().any(|l| l.starts_with("baseline")), "{table}");
    assert!(table.lines().any(|l| l.starts_with("coached")), "{table}");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("reports/metrics.json")).unwrap()).unwrap();
    let rows = report.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["metrics"]["delta_profit"].is_null());
    let kept = rows[1]["filter"]["kept"].as_u64().unwrap();
    assert_eq!(rows[1]["metrics"]["sessions"].as_u64().unwrap(), kept);
}
