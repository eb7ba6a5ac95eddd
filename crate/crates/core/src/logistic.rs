//! Binary ℓ2-regularized logistic regression shared by the learned tactic
//! detectors and the outcome classifier.
//!
//! Features are standardized with training statistics; the bias is not
//! penalized. The objective is
//! `mean(softplus(z) - y*z) + l2/2 * |w|^2` with `z = w·x + b`, minimized by
//! L-BFGS until the gradient norm drops below [`GRAD_TOLERANCE`].

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GRAD_TOLERANCE: f64 = 1e-6;
pub const MAX_ITERS: u64 = 2000;
pub const DEFAULT_L2_GRID: &[f64] = &[1e-4, 1e-3, 1e-2, 1e-1, 1.0];

#[derive(Debug, Error)]
pub enum LogisticError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("no training examples")]
    Empty,
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("optimizer failed: {0}")]
    Optimizer(String),
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Per-column standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaling {
    pub fn fit(x: &[Vec<f64>], dim: usize) -> Self {
        let n = x.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
    pub scaling: Scaling,
}

impl LogisticModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
            l2: 0.0,
            scaling: Scaling::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, raw: &[f64]) -> Result<f64, LogisticError> {
        if raw.len() != self.dim() {
            return Err(LogisticError::Dimension {
                expected: self.dim(),
                got: raw.len(),
            });
        }
        let scaled = self.scaling.apply(raw);
        Ok(dot(&self.weights, &scaled) + self.bias)
    }

    pub fn predict_proba(&self, raw: &[f64]) -> Result<f64, LogisticError> {
        self.logit(raw).map(sigmoid)
    }

    pub fn accuracy(&self, x: &[Vec<f64>], y: &[bool]) -> Result<f64, LogisticError> {
        if x.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for (row, label) in x.iter().zip(y) {
            if (self.predict_proba(row)? >= 0.5) == *label {
                correct += 1;
            }
        }
        Ok(correct as f64 / x.len() as f64)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Regularized objective over already-scaled features. Parameters are laid
/// out as `[w_0, .., w_{d-1}, b]`.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [f64],
    pub l2: f64,
}

impl Objective<'_> {
    pub fn dim(&self) -> usize {
        self.x.first().map(Vec::len).unwrap_or(0)
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let d = self.dim();
        let (w, b) = (&params[..d], params[d]);
        let n = self.x.len() as f64;
        let data: f64 = self
            .x
            .iter()
            .zip(self.y)
            .map(|(row, y)| {
                let z = dot(w, row) + b;
                softplus(z) - y * z
            })
            .sum();
        data / n + 0.5 * self.l2 * dot(w, w)
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let (w, b) = (&params[..d], params[d]);
        let n = self.x.len() as f64;
        let mut g = vec![0.0; d + 1];
        for (row, y) in self.x.iter().zip(self.y) {
            let r = sigmoid(dot(w, row) + b) - y;
            for (gi, xi) in g.iter_mut().zip(row) {
                *gi += r * xi;
            }
            g[d] += r;
        }
        for (i, gi) in g.iter_mut().enumerate() {
            *gi /= n;
            if i < d {
                *gi += self.l2 * w[i];
            }
        }
        g
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> Result<Self::Output, argmin::core::Error> {
        Ok(self.loss(p))
    }
}

impl Gradient for Objective<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Self::Param) -> Result<Self::Gradient, argmin::core::Error> {
        Ok(Objective::gradient(self, p))
    }
}

/// Minimizes the objective from `init` (zeros when `None`).
pub fn minimize(objective: &Objective<'_>, init: Option<Vec<f64>>) -> Result<Vec<f64>, LogisticError> {
    let d = objective.dim();
    let init = init.unwrap_or_else(|| vec![0.0; d + 1]);
    let grad_norm = |p: &[f64]| objective.gradient(p).iter().map(|g| g * g).sum::<f64>().sqrt();
    if grad_norm(&init) <= GRAD_TOLERANCE {
        return Ok(init);
    }
    let linesearch = MoreThuenteLineSearch::new();
    let solver = LBFGS::new(linesearch, 10)
        .with_tolerance_grad(GRAD_TOLERANCE)
        .map_err(|e| LogisticError::Optimizer(e.to_string()))?
        .with_tolerance_cost(0.0)
        .map_err(|e| LogisticError::Optimizer(e.to_string()))?;
    let res = Executor::new(objective.clone(), solver)
        .configure(|s| s.param(init).max_iters(MAX_ITERS))
        .run()
        .map_err(|e| LogisticError::Optimizer(e.to_string()))?;
    let state = res.state();
    state
        .get_best_param()
        .cloned()
        .ok_or_else(|| LogisticError::Optimizer("no parameters returned".into()))
}

/// Fits a model with fixed ℓ2 strength.
pub fn fit(x: &[Vec<f64>], y: &[bool], l2: f64) -> Result<LogisticModel, LogisticError> {
    fit_from(x, y, l2, None)
}

pub fn fit_from(
    x: &[Vec<f64>],
    y: &[bool],
    l2: f64,
    init: Option<Vec<f64>>,
) -> Result<LogisticModel, LogisticError> {
    if x.is_empty() {
        return Err(LogisticError::Empty);
    }
    let pos = y.iter().filter(|v| **v).count();
    if pos == 0 || pos == y.len() {
        return Err(LogisticError::SingleClass);
    }
    let dim = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != dim) {
        return Err(LogisticError::Dimension {
            expected: dim,
            got: bad.len(),
        });
    }
    let scaling = Scaling::fit(x, dim);
    let scaled: Vec<Vec<f64>> = x.iter().map(|r| scaling.apply(r)).collect();
    let targets: Vec<f64> = y.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect();
    let objective = Objective {
        x: &scaled,
        y: &targets,
        l2,
    };
    let params = minimize(&objective, init)?;
    Ok(LogisticModel {
        weights: params[..dim].to_vec(),
        bias: params[dim],
        l2,
        scaling,
    })
}

/// Picks the ℓ2 strength with the best dev accuracy (first wins ties).
pub fn fit_select_on_dev(
    train_x: &[Vec<f64>],
    train_y: &[bool],
    dev_x: &[Vec<f64>],
    dev_y: &[bool],
    grid: &[f64],
) -> Result<(LogisticModel, f64), LogisticError> {
    let mut best: Option<(LogisticModel, f64)> = None;
    for &l2 in grid {
        let model = fit(train_x, train_y, l2)?;
        let acc = model.accuracy(dev_x, dev_y)?;
        if best.as_ref().is_none_or(|(_, a)| acc > *a) {
            best = Some((model, acc));
        }
    }
    best.ok_or(LogisticError::Empty)
}

/// Deterministic k-fold assignment of `n` items.
pub fn fold_ids(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut ids = vec![0; n];
    for (rank, idx) in order.into_iter().enumerate() {
        ids[idx] = rank % k;
    }
    ids
}

/// Mean held-out accuracy of `k`-fold cross-validation. Folds whose
/// training part is single-class predict the majority label.
pub fn cross_validate(
    x: &[Vec<f64>],
    y: &[bool],
    l2: f64,
    k: usize,
    seed: u64,
) -> Result<f64, LogisticError> {
    let ids = fold_ids(x.len(), k, seed);
    let mut total = 0.0;
    let mut used = 0usize;
    for fold in 0..k {
        let (mut tx, mut ty, mut vx, mut vy) = (vec![], vec![], vec![], vec![]);
        for (i, f) in ids.iter().enumerate() {
            if *f == fold {
                vx.push(x[i].clone());
                vy.push(y[i]);
            } else {
                tx.push(x[i].clone());
                ty.push(y[i]);
            }
        }
        if vx.is_empty() {
            continue;
        }
        let acc = match fit(&tx, &ty, l2) {
            Ok(m) => m.accuracy(&vx, &vy)?,
            Err(LogisticError::SingleClass) => {
                let majority = ty.iter().filter(|v| **v).count() * 2 >= ty.len();
                vy.iter().filter(|v| **v == majority).count() as f64 / vy.len() as f64
            }
            Err(e) => return Err(e),
        };
        total += acc;
        used += 1;
    }
    Ok(if used == 0 { 0.0 } else { total / used as f64 })
}
