//! SGD training, evaluation, gradient checking and checkpoints.

mod checkpoint;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Graph, ParamStore};
use crate::data::Sentence;
use crate::error::{Error, Result};
use crate::models::{self, Model, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a dev improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Rescale the gradient to at most this norm.
    pub clip: Option<f64>,
    /// Worker threads for per-sentence gradients; results do not depend on it.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            batch_size: 16,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            clip: None,
            threads: 1,
        }
    }
}

impl TrainConfig {
    /// Norm used by `--clip` when no value is given.
    pub const DEFAULT_CLIP: f64 = 5.0;

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 || self.threads == 0 {
            return Err(Error::InvalidArgument(
                "batch size, epochs, patience and threads must be at least 1".into(),
            ));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidArgument(format!("clip norm {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// Hyperparameter values searched over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lr: Vec<f64>,
    pub d_h: Vec<usize>,
    pub d_l: Vec<usize>,
    pub d_r: Vec<usize>,
    pub k: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            lr: vec![0.03, 0.1, 0.3],
            d_h: vec![100, 200, 400],
            d_l: vec![10, 50, 100],
            d_r: vec![100, 400, 600],
            k: (2..=10).collect(),
        }
    }
}

impl Grid {
    /// Every combination applied to the base configs. `d_r` only varies for
    /// the trilinear scorer and `k` only for the tree model.
    pub fn points(&self, model: &ModelConfig, train: &TrainConfig) -> Vec<(ModelConfig, TrainConfig)> {
        let tree = model.variant == models::Variant::Nldm;
        let trilinear = tree && model.scorer == crate::scoring::ScorerKind::Trilinear;
        let d_r = if trilinear { self.d_r.clone() } else { vec![model.d_r] };
        let k = if tree { self.k.clone() } else { vec![model.k] };
        let mut out = Vec::new();
        for &lr in &self.lr {
            for &d_h in &self.d_h {
                for &d_l in &self.d_l {
                    for &d_r in &d_r {
                        for &k in &k {
                            out.push((
                                ModelConfig { d_h, d_l, d_r, k, ..model.clone() },
                                TrainConfig { lr, ..train.clone() },
                            ));
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training objective over the epoch's batches.
    pub train_loss: f64,
    pub dev_accuracy: f64,
    pub param_norm: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev accuracy.
    pub model: Model,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Length-bucketed batches in a seeded random order.
fn batches(data: &[Sentence], size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut out = Vec::new();
    for window in order.chunks(size * 8) {
        let mut w = window.to_vec();
        w.sort_by_key(|&i| data[i].len());
        out.extend(w.chunks(size).map(<[usize]>::to_vec));
    }
    out.shuffle(rng);
    out
}

fn sentence_gradient(store: &ParamStore, config: &ModelConfig, s: &Sentence) -> Result<(f64, Gradients)> {
    let mut g = Graph::new();
    let nll = models::sentence_nll(&mut g, store, config, &s.tokens, &s.labels)?;
    let value = g.value(nll).item();
    let mut grads = Gradients::new();
    g.backward_into(nll, &mut grads)?;
    Ok((value, grads))
}

/// Mean negative log-likelihood over `batch` and its gradient, without the
/// L2 term. Sentences are processed in parallel and merged in order.
pub fn batch_gradient(
    store: &ParamStore,
    config: &ModelConfig,
    batch: &[&Sentence],
    pool: Option<&rayon::ThreadPool>,
) -> Result<(f64, Gradients)> {
    let per: Vec<Result<(f64, Gradients)>> = match pool {
        Some(pool) => pool.install(|| {
            batch
                .par_iter()
                .map(|s| sentence_gradient(store, config, s))
                .collect()
        }),
        None => batch.iter().map(|s| sentence_gradient(store, config, s)).collect(),
    };
    let mut total = 0.0;
    let mut grads = Gradients::new();
    for r in per {
        let (v, g) = r?;
        total += v;
        grads.merge(&g);
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    Ok((total * inv, grads))
}

/// One SGD update on `batch`; returns the objective before the update.
pub fn sgd_step(
    store: &mut ParamStore,
    config: &ModelConfig,
    batch: &[&Sentence],
    train: &TrainConfig,
    pool: Option<&rayon::ThreadPool>,
) -> Result<f64> {
    let (nll, grads) = batch_gradient(store, config, batch, pool)?;
    let loss = nll + config.omega * store.l2_squared();
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "training objective became {loss}; lower the learning rate or enable clipping"
        )));
    }
    store.zero_grads();
    store.grads_mut().merge(&grads);
    store.add_l2_grad(config.omega);
    let norm = store.grads().norm();
    if !norm.is_finite() {
        return Err(Error::Numeric(
            "gradient is not finite; lower the learning rate or enable clipping".into(),
        ));
    }
    if let Some(max) = train.clip {
        if norm > max {
            store.grads_mut().scale(max / norm);
        }
    }
    store.sgd_step(train.lr);
    store.zero_grads();
    if store.iter().any(|(_, t)| t.data().iter().any(|v| !v.is_finite())) {
        return Err(Error::Numeric(
            "parameters became non-finite; lower the learning rate or enable clipping".into(),
        ));
    }
    Ok(loss)
}

fn make_pool(threads: usize) -> Result<Option<rayon::ThreadPool>> {
    if threads <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| Error::InvalidArgument(format!("cannot start {threads} threads: {e}")))
}

/// Trains from fresh parameters and keeps the best model on `dev`.
pub fn train(model: &ModelConfig, train_set: &[Sentence], dev: &[Sentence], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(model, train_set, dev, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    model_config: &ModelConfig,
    train_set: &[Sentence],
    dev: &[Sentence],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = Model::new(model_config.clone(), rng.gen())?;
    run(model, rng, train_set, dev, cfg, &mut on_epoch)
}

/// [`train_with`] starting from given parameters, e.g. with pretrained
/// embeddings loaded. Batch order matches [`train_with`] for the same seed.
pub fn train_from(
    initial: Model,
    train_set: &[Sentence],
    dev: &[Sentence],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let _: u64 = rng.gen();
    run(initial, rng, train_set, dev, cfg, &mut on_epoch)
}

fn run(
    mut model: Model,
    mut rng: ChaCha8Rng,
    train_set: &[Sentence],
    dev: &[Sentence],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.config.validate()?;
    if train_set.is_empty() || dev.is_empty() {
        return Err(Error::Data("training and dev sets must be non-empty".into()));
    }
    let pool = make_pool(cfg.threads)?;
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        let mut losses = Vec::new();
        for batch in batches(train_set, cfg.batch_size, &mut rng) {
            let batch: Vec<&Sentence> = batch.iter().map(|&i| &train_set[i]).collect();
            let loss = sgd_step(&mut model.params, &model.config, &batch, cfg, pool.as_ref())
                .map_err(|e| match e {
                    Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}: {msg}")),
                    other => other,
                })?;
            losses.push(loss);
        }
        let dev_accuracy = evaluate_with(&model, dev, pool.as_ref())?;
        let log = EpochLog {
            epoch,
            train_loss: losses.iter().sum::<f64>() / losses.len() as f64,
            dev_accuracy,
            param_norm: model.params.l2_squared().sqrt(),
        };
        on_epoch(&log);
        history.push(log);
        if best.as_ref().is_none_or(|(acc, _, _)| dev_accuracy > *acc) {
            best = Some((dev_accuracy, epoch, model.params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch runs");
    Ok(TrainOutcome {
        model: Model {
            config: model.config,
            params,
        },
        history,
        best_epoch,
    })
}

/// Percentage of positions where `pred` equals `gold`.
pub fn accuracy(pred: &[Vec<usize>], gold: &[Vec<usize>]) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    if pred.len() != gold.len() {
        return Err(Error::InvalidArgument(format!("{} predictions for {} sentences", pred.len(), gold.len())));
    }
    for (p, g) in pred.iter().zip(gold) {
        if p.len() != g.len() {
            return Err(Error::InvalidArgument("prediction length differs from gold".into()));
        }
        correct += p.iter().zip(g).filter(|(a, b)| a == b).count();
        total += g.len();
    }
    if total == 0 {
        return Err(Error::Data("no tokens to score".into()));
    }
    Ok(100.0 * correct as f64 / total as f64)
}

/// Predictions for every sentence, computed in parallel.
pub fn predict_all(model: &Model, data: &[Sentence]) -> Result<Vec<Vec<usize>>> {
    predict_with(model, data, None)
}

fn predict_with(model: &Model, data: &[Sentence], pool: Option<&rayon::ThreadPool>) -> Result<Vec<Vec<usize>>> {
    let run = || data.par_iter().map(|s| model.predict(&s.tokens)).collect();
    match pool {
        Some(p) => p.install(run),
        None => run(),
    }
}

/// Token accuracy in percent.
pub fn evaluate(model: &Model, data: &[Sentence]) -> Result<f64> {
    evaluate_with(model, data, None)
}

fn evaluate_with(model: &Model, data: &[Sentence], pool: Option<&rayon::ThreadPool>) -> Result<f64> {
    let m = model.config.num_labels;
    if let Some(bad) = data.iter().flat_map(|s| &s.labels).find(|&&y| y >= m) {
        return Err(Error::Data(format!("gold label id {bad} unknown to a {m}-label model")));
    }
    let pred = predict_with(model, data, pool)?;
    let gold: Vec<Vec<usize>> = data.iter().map(|s| s.labels.clone()).collect();
    accuracy(&pred, &gold)
}

/// Accuracy of always predicting the most frequent label of `train`.
pub fn majority_baseline(train: &[Sentence], eval: &[Sentence]) -> Result<f64> {
    let mut counts = std::collections::BTreeMap::<usize, usize>::new();
    for &y in train.iter().flat_map(|s| &s.labels) {
        *counts.entry(y).or_default() += 1;
    }
    let (&top, _) = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .ok_or_else(|| Error::Data("empty training set".into()))?;
    let pred: Vec<Vec<usize>> = eval.iter().map(|s| vec![top; s.len()]).collect();
    let gold: Vec<Vec<usize>> = eval.iter().map(|s| s.labels.clone()).collect();
    accuracy(&pred, &gold)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coordinates: usize,
    /// Parameter and index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// Smallest denominator in the relative error, so coordinates with
/// near-zero gradients are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-3;

/// Compares the analytic gradient of the batch objective (mean NLL plus L2)
/// with central differences of step `eps`.
///
/// Every coordinate is checked when there are at most `max_coords`;
/// otherwise a seeded sample of `max_coords` (at least 200) is.
// `!(x <= y)` so a NaN error counts as the worst case.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn grad_check(
    store: &ParamStore,
    config: &ModelConfig,
    data: &[Sentence],
    eps: f64,
    max_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if data.is_empty() {
        return Err(Error::Data("gradient check needs at least one sentence".into()));
    }
    let batch: Vec<(&[usize], &[usize])> = data.iter().map(|s| (&s.tokens[..], &s.labels[..])).collect();
    let objective = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = models::batch_loss(&mut g, s, config, &batch)?;
        Ok(g.value(l).item())
    };
    let mut analytic = store.clone();
    analytic.zero_grads();
    {
        let mut g = Graph::new();
        let l = models::batch_loss(&mut g, &analytic, config, &batch)?;
        let mut grads = Gradients::new();
        g.backward_into(l, &mut grads)?;
        analytic.grads_mut().merge(&grads);
    }
    let mut coords: Vec<(String, usize)> = store
        .iter()
        .flat_map(|(name, t)| (0..t.len()).map(move |i| (name.to_string(), i)))
        .collect();
    let limit = max_coords.max(200);
    if coords.len() > limit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        coords = coords.choose_multiple(&mut rng, limit).cloned().collect();
        coords.sort();
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coordinates: coords.len(),
        worst: None,
    };
    let mut probe = store.clone();
    for (name, i) in coords {
        let a = analytic.grads().get(&name).map_or(0.0, |g| g[i]);
        let orig = probe.get(&name)?.data()[i];
        probe.get_mut(&name)?.data_mut()[i] = orig + eps;
        let up = objective(&probe)?;
        probe.get_mut(&name)?.data_mut()[i] = orig - eps;
        let down = objective(&probe)?;
        probe.get_mut(&name)?.data_mut()[i] = orig;
        let num = (up - down) / (2.0 * eps);
        let rel = (a - num).abs() / a.abs().max(num.abs()).max(GRAD_CHECK_FLOOR);
        if !(rel <= report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst = Some((name, i));
        }
    }
    Ok(report)
}
