//! Next-move tactic predictor: a word encoder over the concatenated
//! history, a tactic encoder over the mention sequence, and one sigmoid
//! output per registry tactic over `[h_s; h_u; E_p(category)]`.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{Lstm, LstmGrad, Trace};
use crate::corpus::{Category, Event, EventKind};
use crate::detector::tokenize::words;
use crate::detector::TacticAnnotation;
use crate::logistic::sigmoid;
use crate::tactic::{Role, TacticRegistry};

pub const UNK: usize = 0;
pub const SEP: usize = 1;
pub const SPECIALS: [&str; 6] = ["<unk>", "<sep>", "<offer>", "<accept>", "<reject>", "<quit>"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Zero the product embedding before the output layer.
    pub no_product: bool,
    /// Zero the tactic encoder state before the output layer.
    pub no_tactics: bool,
}

impl Ablation {
    pub const FULL: Ablation = Ablation {
        no_product: false,
        no_tactics: false,
    };
    pub const TURN_ONLY: Ablation = Ablation {
        no_product: true,
        no_tactics: true,
    };
    pub const TURN_PRODUCT: Ablation = Ablation {
        no_product: false,
        no_tactics: true,
    };
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new<I: IntoIterator<Item = String>>(extra: I) -> Self {
        let mut v = Vocab::default();
        for w in SPECIALS.iter().map(|s| s.to_string()).chain(extra) {
            if !v.index.contains_key(&w) {
                v.index.insert(w.clone(), v.words.len());
                v.words.push(w);
            }
        }
        v
    }

    /// Specials plus every token seen at least `min_count` times, in order
    /// of first appearance.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(texts: I, min_count: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut order = Vec::new();
        for text in texts {
            for w in words(text) {
                let c = counts.entry(w.clone()).or_insert(0);
                if *c == 0 {
                    order.push(w);
                }
                *c += 1;
            }
        }
        Self::new(order.into_iter().filter(|w| counts[w] >= min_count.max(1)))
    }

    pub fn from_words(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn uniform<R: Rng>(rows: usize, cols: usize, a: f64, rng: &mut R) -> Self {
        let mut m = Self::zeros(rows, cols);
        m.data.iter_mut().for_each(|v| *v = rng.random_range(-a..a));
        m
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub word_emb: Matrix,
    pub tactic_emb: Matrix,
    pub product_emb: Matrix,
    pub lstm_u: Lstm,
    pub lstm_s: Lstm,
    pub out_w: Matrix,
    pub out_b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub vocab: usize,
    pub tactics: usize,
    pub word: usize,
    pub tactic: usize,
    pub product: usize,
    pub hidden: usize,
}

impl Params {
    pub fn zeros(d: Dims) -> Self {
        Self {
            word_emb: Matrix::zeros(d.vocab, d.word),
            tactic_emb: Matrix::zeros(d.tactics, d.tactic),
            product_emb: Matrix::zeros(Category::ALL.len(), d.product),
            lstm_u: Lstm::zeros(d.word, d.hidden),
            lstm_s: Lstm::zeros(d.tactic + d.tactics, d.hidden),
            out_w: Matrix::zeros(d.tactics, 2 * d.hidden + d.product),
            out_b: vec![0.0; d.tactics],
        }
    }

    pub fn init<R: Rng>(d: Dims, rng: &mut R) -> Self {
        let out_a = 1.0 / ((2 * d.hidden + d.product) as f64).sqrt();
        Self {
            word_emb: Matrix::uniform(d.vocab, d.word, 0.1, rng),
            tactic_emb: Matrix::uniform(d.tactics, d.tactic, 0.1, rng),
            product_emb: Matrix::uniform(Category::ALL.len(), d.product, 0.1, rng),
            lstm_u: Lstm::init(d.word, d.hidden, rng),
            lstm_s: Lstm::init(d.tactic + d.tactics, d.hidden, rng),
            out_w: Matrix::uniform(d.tactics, 2 * d.hidden + d.product, out_a, rng),
            out_b: vec![0.0; d.tactics],
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            vocab: self.word_emb.rows,
            tactics: self.out_w.rows,
            word: self.word_emb.cols,
            tactic: self.tactic_emb.cols,
            product: self.product_emb.cols,
            hidden: self.lstm_u.hidden,
        }
    }

    /// Named flat views of every tensor, in artifact order.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("word_emb", &self.word_emb.data),
            ("tactic_emb", &self.tactic_emb.data),
            ("product_emb", &self.product_emb.data),
            ("lstm_u.w", &self.lstm_u.w),
            ("lstm_u.b", &self.lstm_u.b),
            ("lstm_s.w", &self.lstm_s.w),
            ("lstm_s.b", &self.lstm_s.b),
            ("out_w", &self.out_w.data),
            ("out_b", &self.out_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Vec<f64>)> {
        vec![
            ("word_emb", &mut self.word_emb.data),
            ("tactic_emb", &mut self.tactic_emb.data),
            ("product_emb", &mut self.product_emb.data),
            ("lstm_u.w", &mut self.lstm_u.w),
            ("lstm_u.b", &mut self.lstm_u.b),
            ("lstm_s.w", &mut self.lstm_s.w),
            ("lstm_s.b", &mut self.lstm_s.b),
            ("out_w", &mut self.out_w.data),
            ("out_b", &mut self.out_b),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Gradients; word-embedding rows are kept sparse.
#[derive(Debug, Clone)]
pub struct Grads {
    pub word_emb: BTreeMap<usize, Vec<f64>>,
    pub tactic_emb: Matrix,
    pub product_emb: Matrix,
    pub lstm_u: LstmGrad,
    pub lstm_s: LstmGrad,
    pub out_w: Matrix,
    pub out_b: Vec<f64>,
}

impl Grads {
    pub fn zeros(p: &Params) -> Self {
        Self {
            word_emb: BTreeMap::new(),
            tactic_emb: Matrix::zeros(p.tactic_emb.rows, p.tactic_emb.cols),
            product_emb: Matrix::zeros(p.product_emb.rows, p.product_emb.cols),
            lstm_u: LstmGrad::zeros(&p.lstm_u),
            lstm_s: LstmGrad::zeros(&p.lstm_s),
            out_w: Matrix::zeros(p.out_w.rows, p.out_w.cols),
            out_b: vec![0.0; p.out_b.len()],
        }
    }

    pub fn norm(&self) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let words: f64 = self.word_emb.values().map(|r| sq(r)).sum();
        (words
            + sq(&self.tactic_emb.data)
            + sq(&self.product_emb.data)
            + sq(&self.lstm_u.w)
            + sq(&self.lstm_u.b)
            + sq(&self.lstm_s.w)
            + sq(&self.lstm_s.b)
            + sq(&self.out_w.data)
            + sq(&self.out_b))
            .sqrt()
    }

    /// Dense copy of one tensor's gradient, in the layout of
    /// [`Params::tensors`].
    pub fn dense(&self, name: &str, p: &Params) -> Vec<f64> {
        match name {
            "word_emb" => {
                let mut d = vec![0.0; p.word_emb.data.len()];
                for (r, g) in &self.word_emb {
                    d[r * p.word_emb.cols..(r + 1) * p.word_emb.cols].copy_from_slice(g);
                }
                d
            }
            "tactic_emb" => self.tactic_emb.data.clone(),
            "product_emb" => self.product_emb.data.clone(),
            "lstm_u.w" => self.lstm_u.w.clone(),
            "lstm_u.b" => self.lstm_u.b.clone(),
            "lstm_s.w" => self.lstm_s.w.clone(),
            "lstm_s.b" => self.lstm_s.b.clone(),
            "out_w" => self.out_w.data.clone(),
            "out_b" => self.out_b.clone(),
            other => panic!("unknown tensor {other}"),
        }
    }
}

/// One step of the tactic sequence: a mention (or, for a turn that has
/// only turn-level tactics, no mention) with its turn's flag vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TacticStep {
    pub tactic: Option<usize>,
    pub flags: Vec<bool>,
}

/// Encoder inputs for a whole dialog; prefixes give the inputs for any
/// history length.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedHistory {
    pub words: Vec<usize>,
    pub steps: Vec<TacticStep>,
    /// `word_end[k]`, `step_end[k]`: input lengths covering events `..k`.
    pub word_end: Vec<usize>,
    pub step_end: Vec<usize>,
    pub category: Category,
}

impl EncodedHistory {
    pub fn prefix(&self, events: usize) -> (&[usize], &[TacticStep]) {
        (&self.words[..self.word_end[events]], &self.steps[..self.step_end[events]])
    }
}

pub fn event_tokens(event: &Event) -> Vec<String> {
    match &event.kind {
        EventKind::Message(text) => words(text),
        EventKind::Offer(_) => vec!["<offer>".into()],
        EventKind::Accept => vec!["<accept>".into()],
        EventKind::Reject => vec!["<reject>".into()],
        EventKind::Quit => vec!["<quit>".into()],
    }
}

/// Appends the steps of one annotation: one per mention, or a single
/// mention-less step when the turn has only turn-level tactics.
pub fn push_steps(ann: &TacticAnnotation, registry: &TacticRegistry, steps: &mut Vec<TacticStep>) {
    let flags = ann.flag_vector(registry);
    let mentions: Vec<usize> = ann
        .mentions
        .iter()
        .filter_map(|m| registry.index_of(m.tactic))
        .collect();
    if mentions.is_empty() {
        if flags.iter().any(|f| *f) {
            steps.push(TacticStep { tactic: None, flags });
        }
    } else {
        for m in mentions {
            steps.push(TacticStep {
                tactic: Some(m),
                flags: flags.clone(),
            });
        }
    }
}

pub fn encode_history(
    events: &[Event],
    annotations: &[TacticAnnotation],
    category: Category,
    vocab: &Vocab,
    registry: &TacticRegistry,
) -> EncodedHistory {
    let mut h = EncodedHistory {
        words: Vec::new(),
        steps: Vec::new(),
        word_end: vec![0],
        step_end: vec![0],
        category,
    };
    for (k, event) in events.iter().enumerate() {
        if k > 0 {
            h.words.push(SEP);
        }
        h.words.extend(event_tokens(event).iter().map(|w| vocab.id(w)));
        if let Some(ann) = annotations.get(k) {
            push_steps(ann, registry, &mut h.steps);
        }
        h.word_end.push(h.words.len());
        h.step_end.push(h.steps.len());
    }
    h
}

/// Indices of the events the seller's next move is predicted for:
/// seller messages and offers.
pub fn target_events(events: &[Event]) -> Vec<usize> {
    events
        .iter()
        .enumerate()
        .filter(|(_, e)| {
            e.speaker == Role::Seller && matches!(e.kind, EventKind::Message(_) | EventKind::Offer(_))
        })
        .map(|(i, _)| i)
        .collect()
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    words: Vec<usize>,
    steps: Vec<TacticStep>,
    category: Category,
    trace_u: Trace,
    trace_s: Trace,
    mask_u: Option<Vec<f64>>,
    mask_s: Option<Vec<f64>>,
    features: Vec<f64>,
    pub probs: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Params {
    fn step_input(&self, step: &TacticStep) -> Vec<f64> {
        let mut x = match step.tactic {
            Some(t) => self.tactic_emb.row(t).to_vec(),
            None => vec![0.0; self.tactic_emb.cols],
        };
        x.extend(step.flags.iter().map(|f| if *f { 1.0 } else { 0.0 }));
        x
    }

    pub fn encode_words(&self, words: &[usize]) -> Trace {
        let xs: Vec<Vec<f64>> = words.iter().map(|w| self.word_emb.row(*w).to_vec()).collect();
        self.lstm_u.forward(&xs)
    }

    pub fn encode_steps(&self, steps: &[TacticStep]) -> Trace {
        let xs: Vec<Vec<f64>> = steps.iter().map(|s| self.step_input(s)).collect();
        self.lstm_s.forward(&xs)
    }

    /// Forward pass. `dropout` carries the rate and the RNG for training;
    /// `None` is inference.
    pub fn forward<R: Rng>(
        &self,
        words: &[usize],
        steps: &[TacticStep],
        category: Category,
        ablation: Ablation,
        dropout: Option<(f64, &mut R)>,
    ) -> Forward {
        let hidden = self.lstm_u.hidden;
        let trace_u = self.encode_words(words);
        let trace_s = if ablation.no_tactics {
            Trace {
                steps: Vec::new(),
                h: vec![0.0; hidden],
            }
        } else {
            self.encode_steps(steps)
        };
        let (mask_u, mask_s) = match dropout {
            Some((rate, rng)) if rate > 0.0 => {
                let keep = 1.0 - rate;
                let mut mask = || -> Vec<f64> {
                    (0..hidden)
                        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect()
                };
                let s = mask();
                let u = mask();
                (Some(u), Some(s))
            }
            _ => (None, None),
        };
        let apply = |h: &[f64], m: &Option<Vec<f64>>| -> Vec<f64> {
            match m {
                Some(m) => h.iter().zip(m).map(|(a, b)| a * b).collect(),
                None => h.to_vec(),
            }
        };
        let mut features = apply(&trace_s.h, &mask_s);
        features.extend(apply(&trace_u.h, &mask_u));
        if ablation.no_product {
            features.extend(std::iter::repeat_n(0.0, self.product_emb.cols));
        } else {
            features.extend_from_slice(self.product_emb.row(category.index()));
        }
        let logits: Vec<f64> = (0..self.out_w.rows)
            .map(|j| {
                self.out_w.row(j).iter().zip(&features).map(|(a, b)| a * b).sum::<f64>()
                    + self.out_b[j]
            })
            .collect();
        let probs = logits.iter().map(|z| sigmoid(*z)).collect();
        Forward {
            words: words.to_vec(),
            steps: steps.to_vec(),
            category,
            trace_u,
            trace_s,
            mask_u,
            mask_s,
            features,
            probs,
            logits,
        }
    }

    /// Summed binary cross-entropy over all tactics.
    pub fn loss(fwd: &Forward, target: &[bool]) -> f64 {
        fwd.logits
            .iter()
            .zip(target)
            .map(|(z, y)| {
                let sp = if *z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                };
                sp - if *y { *z } else { 0.0 }
            })
            .sum()
    }

    /// Adds the loss gradient of one example into `g`.
    pub fn backward(&self, fwd: &Forward, target: &[bool], ablation: Ablation, g: &mut Grads) {
        let hidden = self.lstm_u.hidden;
        let dz: Vec<f64> = fwd
            .probs
            .iter()
            .zip(target)
            .map(|(p, y)| p - if *y { 1.0 } else { 0.0 })
            .collect();
        let mut dfeat = vec![0.0; fwd.features.len()];
        for (j, dzj) in dz.iter().enumerate() {
            g.out_b[j] += dzj;
            let row = self.out_w.row(j);
            let grow = g.out_w.row_mut(j);
            for k in 0..fwd.features.len() {
                grow[k] += dzj * fwd.features[k];
                dfeat[k] += dzj * row[k];
            }
        }
        let unmask = |d: &[f64], m: &Option<Vec<f64>>| -> Vec<f64> {
            match m {
                Some(m) => d.iter().zip(m).map(|(a, b)| a * b).collect(),
                None => d.to_vec(),
            }
        };
        let dh_s = unmask(&dfeat[..hidden], &fwd.mask_s);
        let dh_u = unmask(&dfeat[hidden..2 * hidden], &fwd.mask_u);
        if !ablation.no_product {
            let row = g.product_emb.row_mut(fwd.category.index());
            for (r, d) in row.iter_mut().zip(&dfeat[2 * hidden..]) {
                *r += d;
            }
        }
        if !ablation.no_tactics {
            let dxs = self.lstm_s.backward(&fwd.trace_s, &dh_s, &mut g.lstm_s);
            for (step, dx) in fwd.steps.iter().zip(dxs) {
                if let Some(t) = step.tactic {
                    let row = g.tactic_emb.row_mut(t);
                    for (r, d) in row.iter_mut().zip(&dx) {
                        *r += d;
                    }
                }
            }
        }
        let dxs = self.lstm_u.backward(&fwd.trace_u, &dh_u, &mut g.lstm_u);
        for (w, dx) in fwd.words.iter().zip(dxs) {
            let row = g
                .word_emb
                .entry(*w)
                .or_insert_with(|| vec![0.0; self.word_emb.cols]);
            for (r, d) in row.iter_mut().zip(&dx) {
                *r += d;
            }
        }
    }

    /// `p -= lr * g`, optionally skipping the word table.
    pub fn apply(&mut self, g: &Grads, lr: f64, freeze_words: bool) {
        let step = |p: &mut [f64], d: &[f64]| {
            for (a, b) in p.iter_mut().zip(d) {
                *a -= lr * b;
            }
        };
        if !freeze_words {
            for (r, d) in &g.word_emb {
                step(self.word_emb.row_mut(*r), d);
            }
        }
        step(&mut self.tactic_emb.data, &g.tactic_emb.data);
        step(&mut self.product_emb.data, &g.product_emb.data);
        step(&mut self.lstm_u.w, &g.lstm_u.w);
        step(&mut self.lstm_u.b, &g.lstm_u.b);
        step(&mut self.lstm_s.w, &g.lstm_s.w);
        step(&mut self.lstm_s.b, &g.lstm_s.b);
        step(&mut self.out_w.data, &g.out_w.data);
        step(&mut self.out_b, &g.out_b);
    }
}

impl Grads {
    pub fn scale(&mut self, s: f64) {
        let mul = |v: &mut [f64]| v.iter_mut().for_each(|x| *x *= s);
        self.word_emb.values_mut().for_each(|r| mul(r));
        mul(&mut self.tactic_emb.data);
        mul(&mut self.product_emb.data);
        mul(&mut self.lstm_u.w);
        mul(&mut self.lstm_u.b);
        mul(&mut self.lstm_s.w);
        mul(&mut self.lstm_s.b);
        mul(&mut self.out_w.data);
        mul(&mut self.out_b);
    }
}
