// One function per subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use coach_core::corpus::{
    apply_labels, filter_corpus, label_outcomes, parse_corpus, split_corpus, to_jsonl, CorpusFormat,
    Dialog, Event, FilterReport, Rejection, Scenario, SuccessLabel,
};
use coach_core::detector::learned::{train_detectors as fit_detectors, AnnotatedTurn};
use coach_core::detector::rules::calibrate_dominance;
use coach_core::detector::tokenize::words;
use coach_core::detector::{AnnotatedDialog, Detector};
use coach_core::engine::metrics::{filter_sessions, metrics as session_metrics, FilterCounts, Metrics};
use coach_core::engine::{CoachStep, Session, Transcript};
use coach_core::outcome::ablation::{ablate_outcome, single_group_removals, AblationReport};
use coach_core::outcome::shallow::{train_shallow_baseline, ShallowModel};
use coach_core::outcome::{outcome_dataset, train_outcome as fit_outcome, WeightRow};
use coach_core::predictor::calibrate::{decide, score, F1Report, MarginalBaseline};
use coach_core::predictor::model::Ablation;
use coach_core::predictor::train::train_predictor as fit_predictor;
use coach_core::predictor::{artifact, PredictorData};
use coach_core::realizer::build_index;
use coach_core::synth::{catalog, demo_coach};
use coach_core::tactic::Role;
use coach_service::{AppState, Models};

use crate::context::*;
use crate::table::{num, opt, Table};

#[derive(Serialize)]
struct IngestReport {
    inputs: Vec<String>,
    parsed: usize,
    rejected: Vec<Rejection>,
    duplicates: Vec<String>,
    filter: FilterReport,
}

pub fn ingest(ctx: &Ctx, inputs: &[PathBuf], format: CorpusFormat) -> Result<()> {
    // Files are parsed in parallel; results keep the order of `inputs`.
    let parsed: Vec<Result<_>> = std::thread::scope(|s| {
        let handles: Vec<_> = inputs
            .iter()
            .map(|p| {
                s.spawn(move || -> Result<_> {
                    let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
                    parse_corpus(&bytes, format).with_context(|| format!("parsing {}", p.display()))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("ingest thread panicked")).collect()
    });
    let mut dialogs: Vec<Dialog> = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = BTreeSet::new();
    let mut duplicates = Vec::new();
    for p in parsed {
        let p = p?;
        rejected.extend(p.rejected);
        for d in p.dialogs {
            if seen.insert(d.id.clone()) {
                dialogs.push(d);
            } else {
                duplicates.push(d.id);
            }
        }
    }
    for r in &rejected {
        log::warn!("rejected dialog at {} ({:?}): {}", r.position, r.id, r.reason);
    }
    for id in &duplicates {
        log::warn!("duplicate dialog id {id}; keeping the first");
    }
    let parsed_count = dialogs.len();
    let (kept, filter) = filter_corpus(dialogs);
    if kept.is_empty() {
        bail!("no dialogs left after filtering");
    }
    ctx.write_artifact(CORPUS, to_jsonl(&kept)?.as_bytes())?;

    let mut t = Table::new(["ingest", "dialogs"]);
    t.row(["parsed".to_string(), parsed_count.to_string()]);
    t.row(["rejected".to_string(), rejected.len().to_string()]);
    t.row(["duplicates".to_string(), duplicates.len().to_string()]);
    t.row(["too short".to_string(), filter.too_short.to_string()]);
    t.row(["incomplete".to_string(), filter.incomplete.to_string()]);
    t.row(["kept".to_string(), filter.kept.to_string()]);
    let report = IngestReport {
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        parsed: parsed_count,
        rejected,
        duplicates,
        filter,
    };
    ctx.report("ingest", &report, &t.render())
}

fn count_labels(ids: &[String], labels: &BTreeMap<String, SuccessLabel>) -> [usize; 3] {
    let mut c = [0; 3];
    for id in ids {
        match labels.get(id) {
            Some(SuccessLabel::Positive) => c[0] += 1,
            Some(SuccessLabel::Negative) => c[1] += 1,
            _ => c[2] += 1,
        }
    }
    c
}

pub fn label(ctx: &Ctx) -> Result<()> {
    let corpus = ctx.corpus()?;
    let split = split_corpus(corpus, ctx.config.split.dev, ctx.config.split.test, ctx.config.seed)?;
    let (thresholds, mut labels) = label_outcomes(&split.train, ctx.config.outcome.tail)?;
    labels.extend(apply_labels(&thresholds, &split.dev));
    labels.extend(apply_labels(&thresholds, &split.test));
    let ids = |ds: &[Dialog]| -> Vec<String> {
        let mut v: Vec<String> = ds.iter().map(|d| d.id.clone()).collect();
        v.sort();
        v
    };
    let file = LabelFile {
        config_hash: ctx.hash.clone(),
        seed: ctx.config.seed,
        thresholds,
        train: ids(&split.train),
        dev: ids(&split.dev),
        test: ids(&split.test),
        labels,
    };
    ctx.write_artifact(LABELS, (serde_json::to_string_pretty(&file)? + "\n").as_bytes())?;

    let mut t = Table::new(["split", "dialogs", "positive", "negative", "excluded"]);
    let mut counts = BTreeMap::new();
    for (name, ids) in [("train", &file.train), ("dev", &file.dev), ("test", &file.test)] {
        let c = count_labels(ids, &file.labels);
        t.row([name.to_string(), ids.len().to_string(), c[0].to_string(), c[1].to_string(), c[2].to_string()]);
        counts.insert(name, c);
    }
    let report = serde_json::json!({
        "config_hash": ctx.hash,
        "thresholds": thresholds,
        "counts": counts,
    });
    let table = format!(
        "{}ratio cut points: negative <= {:.6}, positive >= {:.6}\n",
        t.render(),
        thresholds.lower,
        thresholds.upper
    );
    ctx.report("label", &report, &table)
}

pub fn annotate(ctx: &Ctx) -> Result<()> {
    let detector = ctx.detector()?;
    let corpus = ctx.corpus()?;
    let mut out = String::new();
    let mut counts: BTreeMap<String, [usize; 2]> =
        ctx.registry.iter().map(|t| (t.as_str().to_string(), [0, 0])).collect();
    for d in corpus {
        let a = AnnotatedDialog::new(&detector, d);
        for ann in &a.annotations {
            for t in ann.tactics() {
                if let Some(c) = counts.get_mut(t.as_str()) {
                    c[ann.speaker.slot()] += 1;
                }
            }
        }
        out.push_str(&serde_json::to_string(&a)?);
        out.push('\n');
    }
    ctx.write_artifact(ANNOTATIONS, out.as_bytes())?;
    let mut t = Table::new(["tactic", "seller turns", "buyer turns"]);
    for tactic in ctx.registry.iter() {
        let c = counts[tactic.as_str()];
        t.row([tactic.as_str().to_string(), c[Role::Seller.slot()].to_string(), c[Role::Buyer.slot()].to_string()]);
    }
    ctx.report("annotate", &counts, &t.render())
}

pub fn train_detectors(ctx: &Ctx, turns_path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(turns_path).with_context(|| format!("reading {}", turns_path.display()))?;
    let turns: Vec<AnnotatedTurn> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", turns_path.display(), i + 1)))
        .collect::<Result<_>>()?;
    let lex = ctx.lexicons()?;
    let emb = ctx.embeddings()?;
    let corpus_path = ctx.artifact(CORPUS);
    let calibrated = if corpus_path.exists() {
        let corpus = ctx.corpus()?;
        let tokens: Vec<Vec<String>> = corpus
            .iter()
            .flat_map(|d| d.events.iter())
            .filter_map(|e| e.kind.text())
            .map(words)
            .collect();
        calibrate_dominance(tokens.iter().map(Vec::as_slice), &lex.dominance)
    } else {
        None
    };
    let threshold = calibrated.unwrap_or_else(|| {
        log::warn!("no corpus to calibrate the dominance threshold; using the bundled default");
        Detector::rule_only(ctx.registry.clone(), Arc::new(lex.clone())).dominance_threshold()
    });
    let mut model = fit_detectors(&turns, &ctx.registry, &lex, emb.as_ref(), threshold, &ctx.config.detector)?;
    model.config_hash = ctx.hash.clone();
    ctx.write_artifact(DETECTOR, model.to_json().as_bytes())?;

    let mut t = Table::new(["tactic", "classifier", "examples", "positives", "l2", "cv acc"]);
    for (tactic, r) in &model.report {
        t.row([
            tactic.as_str().to_string(),
            r.classifier.clone(),
            r.examples.to_string(),
            r.positives.to_string(),
            r.l2.map(|v| format!("{v:e}")).unwrap_or_else(|| "-".into()),
            opt(r.cv_accuracy),
        ]);
    }
    let table = format!("{}dominance threshold: {threshold:.4}\n", t.render());
    let report = serde_json::json!({
        "config_hash": ctx.hash,
        "dominance_threshold": threshold,
        "tactics": model.report,
    });
    ctx.report("train_detectors", &report, &table)
}

pub fn train_predictor(ctx: &Ctx) -> Result<()> {
    let s = ctx.splits()?;
    let emb = ctx.embeddings()?;
    let mut model = fit_predictor(&s.train, &s.dev, &ctx.registry, &ctx.config.predictor, emb.as_ref(), ctx.config.seed)?;
    model.meta.config_hash = ctx.hash.clone();
    artifact::save(&model, &ctx.artifact(PREDICTOR))?;
    let mut t = Table::new(["epoch", "train loss", "dev loss"]);
    for e in &model.meta.log {
        t.row([e.epoch.to_string(), format!("{:.4}", e.train_loss), e.dev_loss.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())]);
    }
    ctx.report("train_predictor", &model.meta, &t.render())
}

pub fn calibrate(ctx: &Ctx) -> Result<()> {
    let s = ctx.splits()?;
    let mut model = ctx.predictor()?;
    let dev = PredictorData::build(&s.dev, &model.vocab, &ctx.registry);
    if dev.examples.is_empty() {
        bail!("the dev split has no seller turns to calibrate on");
    }
    model.calibrate(&dev);
    artifact::save(&model, &ctx.artifact(PREDICTOR))?;
    let mut t = Table::new(["tactic", "threshold"]);
    let mut thresholds = BTreeMap::new();
    for (tactic, g) in ctx.registry.iter().zip(&model.thresholds) {
        t.row([tactic.as_str().to_string(), format!("{g:.3}")]);
        thresholds.insert(tactic.as_str(), *g);
    }
    ctx.report("calibrate", &thresholds, &t.render())
}

#[derive(Serialize)]
struct F1Row {
    model: String,
    #[serde(flatten)]
    f1: F1Report,
}

fn f1_table(rows: &[F1Row]) -> String {
    let mut t = Table::new(["model", "micro F1", "macro F1"]);
    for r in rows {
        t.row([r.model.clone(), num(r.f1.micro_f1), num(r.f1.macro_f1)]);
    }
    t.render()
}

fn baseline_row(train: &PredictorData, dev: &PredictorData, test: &PredictorData, tactics: usize) -> F1Row {
    let base = MarginalBaseline::fit(&train.gold(), tactics);
    let thresholds = coach_core::predictor::calibrate::calibrate_thresholds(
        &base.predict(dev.examples.len()),
        &dev.gold(),
        tactics,
    );
    let decisions: Vec<Vec<bool>> = base
        .predict(test.examples.len())
        .iter()
        .map(|p| decide(p, &thresholds))
        .collect();
    F1Row {
        model: "marginal baseline".into(),
        f1: score(&decisions, &test.gold(), tactics),
    }
}

pub fn eval_predictor(ctx: &Ctx, ablate: bool) -> Result<()> {
    let s = ctx.splits()?;
    let n = ctx.registry.len();
    let mut rows = Vec::new();
    if ablate {
        let emb = ctx.embeddings()?;
        for (name, ablation) in [
            ("turn", Ablation::TURN_ONLY),
            ("+product", Ablation::TURN_PRODUCT),
            ("+tactics", Ablation::FULL),
        ] {
            let config = coach_core::predictor::train::PredictorConfig {
                ablation,
                ..ctx.config.predictor.clone()
            };
            let mut m = fit_predictor(&s.train, &s.dev, &ctx.registry, &config, emb.as_ref(), ctx.config.seed)?;
            let dev = PredictorData::build(&s.dev, &m.vocab, &ctx.registry);
            m.calibrate(&dev);
            let test = PredictorData::build(&s.test, &m.vocab, &ctx.registry);
            rows.push(F1Row { model: name.into(), f1: m.evaluate(&test) });
        }
    } else {
        let m = ctx.predictor()?;
        let test = PredictorData::build(&s.test, &m.vocab, &ctx.registry);
        rows.push(F1Row { model: "predictor".into(), f1: m.evaluate(&test) });
    }
    let vocab = coach_core::predictor::train::build_vocab(&s.train, ctx.config.predictor.min_count);
    let data = |d: &[AnnotatedDialog]| PredictorData::build(d, &vocab, &ctx.registry);
    let test = data(&s.test);
    if test.examples.is_empty() {
        bail!("the test split has no seller turns");
    }
    rows.push(baseline_row(&data(&s.train), &data(&s.dev), &test, n));
    let table = f1_table(&rows);
    let name = if ablate { "eval_predictor_ablation" } else { "eval_predictor" };
    let report = serde_json::json!({
        "config_hash": ctx.hash,
        "tactics": ctx.registry.iter().map(|t| t.as_str()).collect::<Vec<_>>(),
        "rows": rows,
    });
    ctx.report(name, &report, &table)
}

pub fn train_outcome(ctx: &Ctx) -> Result<()> {
    let s = ctx.splits()?;
    let mut model = fit_outcome(&s.train, &s.dev, &s.labels, &ctx.registry, &ctx.config.outcome.l2_grid)?;
    let (tx, ty) = outcome_dataset(&s.test, &s.labels, &ctx.registry);
    if !tx.is_empty() {
        model.accuracy.test = Some(model.accuracy_on(&tx, &ty)?);
    }
    model.config_hash = ctx.hash.clone();
    ctx.write_artifact(OUTCOME, model.to_json().as_bytes())?;
    let index = build_index(&s.train, &s.labels, ctx.config.outcome.positives_only);
    ctx.write_artifact(EXEMPLARS, with_hash(&index, &ctx.hash)?.as_bytes())?;

    let mut t = Table::new(["split", "accuracy"]);
    t.row(["train".to_string(), num(model.accuracy.train)]);
    t.row(["dev".to_string(), num(model.accuracy.dev)]);
    t.row(["test".to_string(), opt(model.accuracy.test)]);
    let table = format!("{}exemplars indexed: {}\n", t.render(), index.len());
    let report = serde_json::json!({
        "config_hash": ctx.hash,
        "l2": model.model.l2,
        "accuracy": model.accuracy,
        "exemplars": index.len(),
    });
    ctx.report("train_outcome", &report, &table)
}

/// JSON of `value` with a top-level `config_hash` added.
fn with_hash<T: Serialize>(value: &T, hash: &str) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    if let Value::Object(map) = &mut v {
        map.insert("config_hash".into(), Value::String(hash.into()));
    }
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

pub fn train_baseline(ctx: &Ctx) -> Result<()> {
    let s = ctx.splits()?;
    let plain = |d: &[AnnotatedDialog]| d.iter().map(|a| a.dialog.clone()).collect::<Vec<_>>();
    let mut model = train_shallow_baseline(&plain(&s.train), &plain(&s.dev), &s.labels, &ctx.config.outcome.l2_grid)?;
    let test = plain(&s.test);
    if s.test.iter().any(|d| s.labels.get(&d.dialog.id).and_then(|l| l.as_bool()).is_some()) {
        model.accuracy.test = Some(model.accuracy_on(&test, &s.labels)?);
    }
    ctx.write_artifact(SHALLOW, with_hash(&model, &ctx.hash)?.as_bytes())?;
    let mut t = Table::new(["split", "accuracy"]);
    t.row(["train".to_string(), num(model.accuracy.train)]);
    t.row(["dev".to_string(), num(model.accuracy.dev)]);
    t.row(["test".to_string(), opt(model.accuracy.test)]);
    let table = format!("{}n-gram features: {}\n", t.render(), model.vocab.len());
    let report = serde_json::json!({
        "config_hash": ctx.hash,
        "ngrams": model.vocab.len(),
        "accuracy": model.accuracy,
    });
    ctx.report("train_baseline", &report, &table)
}

pub fn eval_outcome(ctx: &Ctx, ablate: bool) -> Result<()> {
    let s = ctx.splits()?;
    let outcome = ctx.outcome()?;
    let (x, y) = outcome_dataset(&s.test, &s.labels, &ctx.registry);
    if x.is_empty() {
        bail!("the test split has no labeled dialogs");
    }
    let tactics_acc = outcome.accuracy_on(&x, &y)?;
    let shallow_path = ctx.require(SHALLOW, "train baseline")?;
    let shallow = ShallowModel::from_json(&std::fs::read_to_string(&shallow_path)?)?;
    let test: Vec<Dialog> = s.test.iter().map(|a| a.dialog.clone()).collect();
    let shallow_acc = shallow.accuracy_on(&test, &s.labels)?;

    let mut t = Table::new(["model", "accuracy"]);
    t.row(["n-gram baseline".to_string(), num(shallow_acc)]);
    t.row(["tactics".to_string(), num(tactics_acc)]);
    let mut table = t.render();
    let mut ablation: Option<AblationReport> = None;
    if ablate {
        let r = ablate_outcome(
            &s.train,
            &s.dev,
            &s.test,
            &s.labels,
            &ctx.registry,
            &ctx.config.outcome.groups,
            &single_group_removals(),
            &ctx.config.outcome.l2_grid,
        )?;
        let mut a = Table::new(["features", "accuracy", "change"]);
        a.row(["all".to_string(), num(r.full_accuracy), String::new()]);
        for row in &r.rows {
            let names: Vec<String> = row
                .removed
                .iter()
                .map(|g| serde_json::to_value(g).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default())
                .collect();
            a.row([format!("- {}", names.join(", ")), num(row.accuracy), format!("{:+.3}", row.delta)]);
        }
        table.push('\n');
        table.push_str(&a.render());
        ablation = Some(r);
    }
    let report = serde_json::json!({
        "config_hash": ctx.hash,
        "test_dialogs": y.len(),
        "shallow_accuracy": shallow_acc,
        "tactics_accuracy": tactics_acc,
        "ablation": ablation,
    });
    let name = if ablate { "eval_outcome_ablation" } else { "eval_outcome" };
    ctx.report(name, &report, &table)
}

pub fn weights(ctx: &Ctx, top: usize) -> Result<()> {
    let outcome = ctx.outcome()?;
    let rows: Vec<WeightRow> = outcome.report_weights().into_iter().take(top).collect();
    let mut t = Table::new(["tactic", "stage 1", "stage 2"]);
    for r in &rows {
        t.row([r.tactic.as_str().to_string(), format!("{:+.3}", r.stage1), format!("{:+.3}", r.stage2)]);
    }
    let report = serde_json::json!({ "config_hash": ctx.hash, "weights": rows });
    ctx.report("weights", &report, &t.render())
}

fn read_transcripts(dir: &Path) -> Result<Vec<Transcript>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("{} contains no transcripts", dir.display());
    }
    paths.iter().map(|p| read_json(p)).collect()
}

#[derive(Serialize)]
struct MetricsRow {
    condition: String,
    filter: FilterCounts,
    metrics: Metrics,
}

pub fn metrics(ctx: &Ctx, coached: &Path, baseline: Option<&Path>) -> Result<()> {
    let coached = read_transcripts(coached)?;
    let base = baseline.map(read_transcripts).transpose()?;
    let (kept, counts) = filter_sessions(&coached);
    let mut rows = Vec::new();
    let base_kept = base.as_ref().map(|b| filter_sessions(b));
    if let Some((bk, bc)) = &base_kept {
        rows.push(MetricsRow {
            condition: "baseline".into(),
            filter: bc.clone(),
            metrics: session_metrics(bk, None),
        });
    }
    rows.push(MetricsRow {
        condition: "coached".into(),
        filter: counts,
        metrics: session_metrics(&kept, base_kept.as_ref().map(|(k, _)| k.as_slice())),
    });
    let mut t = Table::new(["condition", "sessions", "ratio", "delta profit", "completion", "seller proposals", "co-tactic"]);
    for r in &rows {
        let m = &r.metrics;
        t.row([
            r.condition.clone(),
            m.sessions.to_string(),
            opt(m.mean_ratio),
            m.delta_profit.map(|d| format!("{:+.1}%", d * 100.0)).unwrap_or_else(|| "-".into()),
            format!("{:.1}%", m.completion * 100.0),
            num(m.seller_proposals),
            opt(m.co_tactic_rate),
        ]);
    }
    ctx.report("metrics", &rows, &t.render())
}

/// A transcript prefix: the corpus dialog layout without an outcome.
#[derive(Deserialize)]
struct Prefix {
    #[serde(default)]
    id: String,
    scenario: Scenario,
    events: Vec<Event>,
}

#[derive(Serialize)]
struct SuggestOutput {
    seller_to_act: bool,
    #[serde(flatten)]
    step: CoachStep,
}

pub fn suggest(ctx: &Ctx, path: &Path, demo: bool) -> Result<()> {
    let prefix: Prefix = read_json(path)?;
    prefix.scenario.validate().map_err(anyhow::Error::msg)?;
    let detector = if demo {
        Detector::rule_only(ctx.registry.clone(), Arc::new(ctx.lexicons()?))
    } else {
        ctx.detector()?
    };
    let coach = if demo { demo_coach(&detector, ctx.config.seed) } else { ctx.coach(&detector)? };
    let mut session = Session::new(prefix.id, prefix.scenario.clone(), Arc::new(detector), None);
    for (i, e) in prefix.events.into_iter().enumerate() {
        if e.index != i {
            bail!("event at position {i} has index {}", e.index);
        }
        session
            .apply(e.speaker, e.kind)
            .with_context(|| format!("event {i} is not legal here"))?;
    }
    let seller_to_act = session.status().seller_to_act();
    if !seller_to_act {
        log::warn!("it is not the seller's turn; the suggestion is advisory only");
    }
    let step = coach.advise(session.events(), session.annotations(), &prefix.scenario);
    let out = SuggestOutput { seller_to_act, step };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

pub fn serve(ctx: Ctx, host: Option<String>, port: Option<u16>, demo: bool) -> Result<()> {
    let detector = if demo {
        Detector::rule_only(ctx.registry.clone(), Arc::new(ctx.lexicons()?))
    } else {
        ctx.detector()?
    };
    let trained = [PREDICTOR, OUTCOME, EXEMPLARS].iter().all(|n| ctx.artifact(n).exists());
    let coach = if demo || !trained {
        if !demo {
            log::warn!("trained models not found in {}; serving the demo coach", ctx.artifacts.display());
        }
        demo_coach(&detector, ctx.config.seed)
    } else {
        ctx.coach(&detector)?
    };
    let mut config = ctx.config.service.clone();
    if let Some(h) = host {
        config.host = h;
    }
    if let Some(p) = port {
        config.port = p;
    }
    if config.transcripts.is_none() {
        config.transcripts = Some(ctx.out.join("transcripts"));
    }
    let models = Models {
        detector: Arc::new(detector),
        coach: Some(Arc::new(coach)),
        scenarios: catalog(),
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let addr = format!("{}:{}", config.host, config.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        log::info!("listening on {}", listener.local_addr()?);
        let app = AppState::new(models, config);
        coach_service::serve(listener, app, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}
