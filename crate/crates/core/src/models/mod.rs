//! The latent-tree labeler and its three baselines over a shared encoder.
//!
//! Every variant embeds tokens with the BiLSTM encoder. The baselines score
//! labels with the bilinear emission `h_tᵀ W_e t_y`: the softmax model uses
//! it alone, the CRFs add first- or second-order transitions. The tree model
//! scores labeled dependency edges and marginalizes the forest.

mod chain;

pub use chain::{crf1_forward, crf1_viterbi, crf2_forward, crf2_viterbi};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use self::chain::Lattice;
use crate::autodiff::{Graph, NodeId, ParamStore, Tensor};
use crate::charts::{labeled_max_decode, log_partition_node, Parse};
use crate::encoder::{self, EncoderDims};
use crate::error::{Error, Result};
use crate::scoring::{self, EdgeScoreTable, ScoreSources, ScorerKind, ScoringConfig, Topology};

pub mod names {
    pub const CRF_TRANS: &str = "crf.trans";
    pub const CRF2_TRANS: &str = "crf2.trans";
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Nldm,
    Softmax,
    Crf1,
    Crf2,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Nldm => "nldm",
            Variant::Softmax => "softmax",
            Variant::Crf1 => "crf1",
            Variant::Crf2 => "crf2",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nldm" => Ok(Variant::Nldm),
            "softmax" => Ok(Variant::Softmax),
            "crf1" => Ok(Variant::Crf1),
            "crf2" => Ok(Variant::Crf2),
            other => Err(Error::InvalidArgument(format!("unknown model variant {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub scorer: ScorerKind,
    pub num_labels: usize,
    pub vocab_size: usize,
    pub d_x: usize,
    pub d_h: usize,
    pub d_l: usize,
    pub d_r: usize,
    /// Longest non-root dependency allowed.
    pub k: usize,
    /// L2 coefficient on every parameter.
    pub omega: f64,
    pub topology: Topology,
    /// Parameters start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Nldm,
            scorer: ScorerKind::Additive,
            num_labels: 2,
            vocab_size: 2,
            d_x: 50,
            d_h: 50,
            d_l: 20,
            d_r: 20,
            k: 10,
            omega: 0.0,
            topology: Topology::Full,
            init_scale: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.k < 1 {
            return bad("length limit k must be at least 1".into());
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return bad(format!("regularization {} must be finite and non-negative", self.omega));
        }
        if self.num_labels == 0 || self.vocab_size == 0 {
            return bad("label set and vocabulary must be non-empty".into());
        }
        if self.d_x == 0 || self.d_h == 0 || self.d_l == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.variant == Variant::Nldm && self.scorer == ScorerKind::Trilinear && self.d_r == 0 {
            return bad("trilinear scorer needs d_r >= 1".into());
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad(format!("init scale {} must be finite and non-negative", self.init_scale));
        }
        Ok(())
    }

    pub fn encoder_dims(&self) -> EncoderDims {
        EncoderDims {
            vocab_size: self.vocab_size,
            d_x: self.d_x,
            d_h: self.d_h,
        }
    }

    pub fn scoring(&self) -> ScoringConfig {
        ScoringConfig {
            scorer: self.scorer,
            num_labels: self.num_labels,
            k: self.k,
            topology: self.topology,
        }
    }

    fn trilinear(&self) -> bool {
        self.variant == Variant::Nldm && self.scorer == ScorerKind::Trilinear
    }
}

/// Names and shapes of the parameters `config` needs, in initialization
/// order.
pub fn param_shapes(config: &ModelConfig) -> Vec<(&'static str, Vec<usize>)> {
    use crate::encoder::names as enc;
    use crate::scoring::names as sc;
    let (m, d_x, d_h, d_l, d_r) = (config.num_labels, config.d_x, config.d_h, config.d_l, config.d_r);
    let mut out = vec![
        (enc::EMBED, vec![config.vocab_size, d_x]),
        (enc::FWD_W, vec![d_x + d_h, 4 * d_h]),
        (enc::FWD_B, vec![1, 4 * d_h]),
        (enc::BWD_W, vec![d_x + d_h, 4 * d_h]),
        (enc::BWD_B, vec![1, 4 * d_h]),
    ];
    if config.variant == Variant::Nldm {
        out.push((enc::ROOT, vec![1, 2 * d_h]));
    }
    if config.trilinear() {
        out.push((sc::LABEL_EMB, vec![m + 1, d_l]));
        out.push((sc::TRI_U1, vec![d_r, 2 * d_h]));
        out.push((sc::TRI_U2, vec![d_r, d_l]));
        out.push((sc::TRI_U3, vec![d_r, d_l]));
        return out;
    }
    out.push((sc::LABEL_EMB, vec![m, d_l]));
    out.push((sc::EMIT_W, vec![2 * d_h, d_l]));
    match config.variant {
        Variant::Nldm => {
            out.push((sc::TRANS_RIGHT, vec![m + 1, m]));
            out.push((sc::TRANS_LEFT, vec![m + 1, m]));
        }
        Variant::Softmax => {}
        Variant::Crf1 => out.push((names::CRF_TRANS, vec![m + 1, m])),
        Variant::Crf2 => out.push((names::CRF2_TRANS, vec![(m + 1) * (m + 1), m])),
    }
    out
}

/// Fresh parameters for `config`, uniform in `[-init_scale, init_scale]`
/// from a seeded generator.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ParamStore> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (name, shape) in param_shapes(config) {
        store.insert_uniform(name, &shape, config.init_scale, &mut rng)?;
    }
    Ok(store)
}

fn check_labels(labels: &[usize], tokens: &[usize], m: usize) -> Result<()> {
    if labels.len() != tokens.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} tokens",
            labels.len(),
            tokens.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y >= m) {
        return Err(Error::InvalidArgument(format!("label id {bad} out of range for {m} labels")));
    }
    Ok(())
}

/// `[n, m]` bilinear emission scores for the baselines.
fn emission_matrix(g: &mut Graph, store: &ParamStore, tokens: &[usize]) -> Result<NodeId> {
    let h = encoder::encode_tokens(g, store, tokens)?;
    let w_e = g.param(store, scoring::names::EMIT_W)?;
    let tags = g.param(store, scoring::names::LABEL_EMB)?;
    let proj = g.matmul(h, w_e)?;
    let tags_t = g.transpose(tags)?;
    g.matmul(proj, tags_t)
}

fn difference(g: &mut Graph, a: NodeId, b: NodeId) -> Result<NodeId> {
    let neg = g.scale(b, -1.0);
    g.add(a, neg)
}

/// `log Z(x) − log S(x, y)` for the tree model.
pub fn nldm_nll(
    g: &mut Graph,
    store: &ParamStore,
    config: &ModelConfig,
    tokens: &[usize],
    labels: &[usize],
) -> Result<NodeId> {
    check_labels(labels, tokens, config.num_labels)?;
    let sc = config.scoring();
    let h = encoder::encode(g, store, tokens)?;
    let sources = ScoreSources::build(g, store, h, sc.scorer, sc.num_labels)?;
    let mut gold = EdgeScoreTable::fixed(labels, sc.num_labels, sc.k, sc.topology)?;
    let gold_scores = sources.edge_scores(g, &gold)?;
    gold.set_edge_scores(g.value(gold_scores).data())?;
    let mut full = EdgeScoreTable::labeled(tokens.len(), sc.num_labels, sc.k, sc.topology)?;
    let full_scores = sources.edge_scores(g, &full)?;
    full.set_edge_scores(g.value(full_scores).data())?;
    let log_s = log_partition_node(g, &gold, gold_scores)?;
    let log_z = log_partition_node(g, &full, full_scores)?;
    difference(g, log_z, log_s)
}

/// Scores the full labeled table for `tokens`.
pub fn nldm_table(store: &ParamStore, config: &ModelConfig, tokens: &[usize]) -> Result<EdgeScoreTable> {
    let mut g = Graph::new();
    let h = encoder::encode(&mut g, store, tokens)?;
    let (table, _) = scoring::build_score_table(&mut g, store, h, None, &config.scoring())?;
    Ok(table)
}

/// Joint best labels and forest.
pub fn nldm_decode(store: &ParamStore, config: &ModelConfig, tokens: &[usize]) -> Result<Parse> {
    labeled_max_decode(&nldm_table(store, config, tokens)?)
}

pub fn nldm_predict(store: &ParamStore, config: &ModelConfig, tokens: &[usize]) -> Result<Vec<usize>> {
    Ok(nldm_decode(store, config, tokens)?.labels)
}

/// Per-position cross-entropy, summed over the sentence.
pub fn softmax_nll(g: &mut Graph, store: &ParamStore, tokens: &[usize], labels: &[usize]) -> Result<NodeId> {
    let e = emission_matrix(g, store, tokens)?;
    let m = g.value(e).cols();
    check_labels(labels, tokens, m)?;
    let lse = g.logsumexp(e, 1)?;
    let norm = g.sum(lse);
    let idx: Vec<usize> = labels.iter().enumerate().map(|(t, &y)| t * m + y).collect();
    let gold = g.gather(e, &idx)?;
    let gold = g.sum(gold);
    difference(g, norm, gold)
}

pub fn softmax_predict(store: &ParamStore, tokens: &[usize]) -> Result<Vec<usize>> {
    let mut g = Graph::new();
    let e = emission_matrix(&mut g, store, tokens)?;
    let e = g.value(e);
    Ok((0..e.rows())
        .map(|t| {
            let row = e.row(t);
            (0..row.len()).fold(0, |best, y| if row[y] > row[best] { y } else { best })
        })
        .collect())
}

fn chain_nll(
    g: &mut Graph,
    store: &ParamStore,
    trans_name: &str,
    second_order: bool,
    tokens: &[usize],
    labels: &[usize],
) -> Result<NodeId> {
    let e = emission_matrix(g, store, tokens)?;
    let t = g.param(store, trans_name)?;
    let (ev, tv) = (g.value(e).clone(), g.value(t).clone());
    check_labels(labels, tokens, ev.cols())?;
    let lattice = if second_order {
        Lattice::second_order(&ev, &tv)?
    } else {
        Lattice::first_order(&ev, &tv)?
    };
    let post = lattice.posterior(&ev, &tv);
    let grads = vec![
        Tensor::new(ev.shape().to_vec(), post.emit_grad)?,
        Tensor::new(tv.shape().to_vec(), post.trans_grad)?,
    ];
    let log_z = g.scalar_fn(&[e, t], post.log_z, grads)?;
    let (emit_idx, trans_idx) = lattice.path_indices(labels)?;
    let ge = g.gather(e, &emit_idx)?;
    let gt = g.gather(t, &trans_idx)?;
    let ge = g.sum(ge);
    let gt = g.sum(gt);
    let gold = g.add(ge, gt)?;
    difference(g, log_z, gold)
}

pub fn crf1_nll(g: &mut Graph, store: &ParamStore, tokens: &[usize], labels: &[usize]) -> Result<NodeId> {
    chain_nll(g, store, names::CRF_TRANS, false, tokens, labels)
}

pub fn crf2_nll(g: &mut Graph, store: &ParamStore, tokens: &[usize], labels: &[usize]) -> Result<NodeId> {
    chain_nll(g, store, names::CRF2_TRANS, true, tokens, labels)
}

fn chain_predict(store: &ParamStore, trans_name: &str, second_order: bool, tokens: &[usize]) -> Result<Vec<usize>> {
    let mut g = Graph::new();
    let e = emission_matrix(&mut g, store, tokens)?;
    let e = g.value(e);
    let t = store.get(trans_name)?;
    let (path, _) = if second_order {
        crf2_viterbi(e, t)?
    } else {
        crf1_viterbi(e, t)?
    };
    Ok(path)
}

/// Negative log-likelihood of one sentence under `config.variant`.
pub fn sentence_nll(
    g: &mut Graph,
    store: &ParamStore,
    config: &ModelConfig,
    tokens: &[usize],
    labels: &[usize],
) -> Result<NodeId> {
    match config.variant {
        Variant::Nldm => nldm_nll(g, store, config, tokens, labels),
        Variant::Softmax => softmax_nll(g, store, tokens, labels),
        Variant::Crf1 => crf1_nll(g, store, tokens, labels),
        Variant::Crf2 => crf2_nll(g, store, tokens, labels),
    }
}

/// `Ω · Σ θ²` over every parameter in `store`.
pub fn l2_penalty(g: &mut Graph, store: &ParamStore, omega: f64) -> Result<NodeId> {
    let mut terms = Vec::new();
    for name in store.names() {
        let p = g.param(store, name)?;
        let sq = g.mul(p, p)?;
        terms.push(g.sum(sq));
    }
    let all = g.concat(&terms, 0)?;
    let total = g.sum(all);
    Ok(g.scale(total, omega))
}

/// Mean negative log-likelihood over `batch` plus the L2 penalty.
pub fn batch_loss(
    g: &mut Graph,
    store: &ParamStore,
    config: &ModelConfig,
    batch: &[(&[usize], &[usize])],
) -> Result<NodeId> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let nlls = batch
        .iter()
        .map(|(x, y)| sentence_nll(g, store, config, x, y))
        .collect::<Result<Vec<_>>>()?;
    let all = g.concat(&nlls, 0)?;
    let total = g.sum(all);
    let mean = g.scale(total, 1.0 / batch.len() as f64);
    let penalty = l2_penalty(g, store, config.omega)?;
    g.add(mean, penalty)
}

/// Predicted labels under `config.variant`.
pub fn predict(store: &ParamStore, config: &ModelConfig, tokens: &[usize]) -> Result<Vec<usize>> {
    match config.variant {
        Variant::Nldm => nldm_predict(store, config, tokens),
        Variant::Softmax => softmax_predict(store, tokens),
        Variant::Crf1 => chain_predict(store, names::CRF_TRANS, false, tokens),
        Variant::Crf2 => chain_predict(store, names::CRF2_TRANS, true, tokens),
    }
}

/// `log P(y | x)` under `config.variant`.
pub fn log_likelihood(store: &ParamStore, config: &ModelConfig, tokens: &[usize], labels: &[usize]) -> Result<f64> {
    let mut g = Graph::new();
    let nll = sentence_nll(&mut g, store, config, tokens, labels)?;
    Ok(-g.value(nll).item())
}

/// Which special case of the tree model to compare against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    /// Root edges only, root transitions zeroed, against the softmax model.
    RootOnlySoftmax,
    /// Chain edges only against the first-order CRF whose transitions are
    /// the tree model's rightward transitions (root row as start scores).
    ChainOnlyCrf1,
}

/// Absolute log-likelihood gap between the tree model restricted per
/// `reduction` and the matching baseline, sharing encoder and emissions.
///
/// `store` holds additive tree-model parameters.
pub fn equivalence_check(
    reduction: Reduction,
    store: &ParamStore,
    config: &ModelConfig,
    tokens: &[usize],
    labels: &[usize],
) -> Result<f64> {
    if config.variant != Variant::Nldm || config.scorer != ScorerKind::Additive {
        return Err(Error::InvalidArgument(
            "equivalence checks need an additive tree model".into(),
        ));
    }
    let m = config.num_labels;
    let mut tree = store.clone();
    let mut base = store.clone();
    let mut tree_config = config.clone();
    let mut base_config = config.clone();
    match reduction {
        Reduction::RootOnlySoftmax => {
            let mut right = tree.get(scoring::names::TRANS_RIGHT)?.clone();
            right.row_mut(m).fill(0.0);
            tree.set(scoring::names::TRANS_RIGHT, right)?;
            tree_config.topology = Topology::RootOnly;
            base_config.variant = Variant::Softmax;
        }
        Reduction::ChainOnlyCrf1 => {
            let right = tree.get(scoring::names::TRANS_RIGHT)?.clone();
            base.insert(names::CRF_TRANS, right)?;
            tree_config.topology = Topology::ChainOnly;
            base_config.variant = Variant::Crf1;
        }
    }
    let a = log_likelihood(&tree, &tree_config, tokens, labels)?;
    let b = log_likelihood(&base, &base_config, tokens, labels)?;
    Ok((a - b).abs())
}

/// Parameters plus the configuration that shapes them.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Model { config, params })
    }

    pub fn predict(&self, tokens: &[usize]) -> Result<Vec<usize>> {
        predict(&self.params, &self.config, tokens)
    }

    pub fn log_likelihood(&self, tokens: &[usize], labels: &[usize]) -> Result<f64> {
        log_likelihood(&self.params, &self.config, tokens, labels)
    }

    /// Best labels and forest; tree model only.
    pub fn decode_tree(&self, tokens: &[usize]) -> Result<Parse> {
        if self.config.variant != Variant::Nldm {
            return Err(Error::InvalidArgument(format!(
                "{} model has no dependency structure",
                self.config.variant
            )));
        }
        nldm_decode(&self.params, &self.config, tokens)
    }
}

#[cfg(test)]
mod tests;
