//! Token embeddings, a bidirectional LSTM, and a learned root vector.

mod vocab;

pub use vocab::Vocab;

use std::path::Path;

use rand::Rng;

use crate::autodiff::{lstm_cell, Graph, LstmWeights, NodeId, ParamStore, Tensor};
use crate::error::{Error, Result};

pub mod names {
    pub const EMBED: &str = "embed";
    pub const FWD_W: &str = "lstm.fwd.w";
    pub const FWD_B: &str = "lstm.fwd.b";
    pub const BWD_W: &str = "lstm.bwd.w";
    pub const BWD_B: &str = "lstm.bwd.b";
    pub const ROOT: &str = "root";
}

/// Sizes of the encoder parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderDims {
    pub vocab_size: usize,
    pub d_x: usize,
    pub d_h: usize,
}

impl EncoderDims {
    /// Width of each output row, `2·d_h`.
    pub fn output(&self) -> usize {
        2 * self.d_h
    }
}

/// Adds the encoder parameters to `store`, uniform in `[-scale, scale]`.
///
/// `with_root` controls the root vector, which only tree models use.
pub fn init_encoder<R: Rng>(
    store: &mut ParamStore,
    dims: EncoderDims,
    with_root: bool,
    scale: f64,
    rng: &mut R,
) -> Result<()> {
    let EncoderDims { vocab_size, d_x, d_h } = dims;
    if vocab_size == 0 || d_x == 0 || d_h == 0 {
        return Err(Error::InvalidArgument(format!("encoder dims {dims:?}")));
    }
    store.insert_uniform(names::EMBED, &[vocab_size, d_x], scale, rng)?;
    for (w, b) in [(names::FWD_W, names::FWD_B), (names::BWD_W, names::BWD_B)] {
        store.insert_uniform(w, &[d_x + d_h, 4 * d_h], scale, rng)?;
        store.insert_uniform(b, &[1, 4 * d_h], scale, rng)?;
    }
    if with_root {
        store.insert_uniform(names::ROOT, &[1, 2 * d_h], scale, rng)?;
    }
    Ok(())
}

fn run_direction(g: &mut Graph, xs: &[NodeId], w: LstmWeights, d_h: usize) -> Result<Vec<NodeId>> {
    let mut h = g.constant(Tensor::zeros(&[1, d_h]));
    let mut c = g.constant(Tensor::zeros(&[1, d_h]));
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        (h, c) = lstm_cell(g, x, h, c, w)?;
        out.push(h);
    }
    Ok(out)
}

/// Hidden states `[n, 2·d_h]` for `tokens`, row `t` being `[h→_t ; h←_t]`.
pub fn encode_tokens(g: &mut Graph, store: &ParamStore, tokens: &[usize]) -> Result<NodeId> {
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("cannot encode an empty sequence".into()));
    }
    let embed = g.param(store, names::EMBED)?;
    let xs = g.lookup(embed, tokens)?;
    let rows = (0..tokens.len())
        .map(|t| g.slice(xs, 0, t, t + 1))
        .collect::<Result<Vec<_>>>()?;
    let fwd = LstmWeights {
        weight: g.param(store, names::FWD_W)?,
        bias: g.param(store, names::FWD_B)?,
    };
    let bwd = LstmWeights {
        weight: g.param(store, names::BWD_W)?,
        bias: g.param(store, names::BWD_B)?,
    };
    let d_h = g.value(fwd.bias).cols() / 4;
    let hf = run_direction(g, &rows, fwd, d_h)?;
    let rev: Vec<NodeId> = rows.iter().rev().copied().collect();
    let mut hb = run_direction(g, &rev, bwd, d_h)?;
    hb.reverse();
    let joined = hf
        .into_iter()
        .zip(hb)
        .map(|(f, b)| g.concat(&[f, b], 1))
        .collect::<Result<Vec<_>>>()?;
    g.concat(&joined, 0)
}

/// [`encode_tokens`] with the root vector prepended: `[n + 1, 2·d_h]`.
pub fn encode(g: &mut Graph, store: &ParamStore, tokens: &[usize]) -> Result<NodeId> {
    let body = encode_tokens(g, store, tokens)?;
    let root = g.param(store, names::ROOT)?;
    g.concat(&[root, body], 0)
}

/// Parses whitespace-separated `word v1 .. v_dim` lines.
///
/// Blank lines are skipped, as is a leading `count dim` header.
pub fn parse_embeddings(text: &str, dim: usize, source_name: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if idx == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok()) && dim != 1 {
            continue;
        }
        if fields.len() != dim + 1 {
            return Err(Error::parse(
                source_name,
                idx + 1,
                format!("expected a word and {dim} numbers, found {} fields", fields.len()),
            ));
        }
        let values = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(source_name, idx + 1, format!("bad number {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push((fields[0].to_string(), values));
    }
    Ok(out)
}

/// Overwrites embedding rows of in-vocabulary words from a text file.
/// Returns the number of rows replaced.
pub fn load_pretrained_embeddings(path: impl AsRef<Path>, vocab: &Vocab, store: &mut ParamStore) -> Result<usize> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dim = store.get(names::EMBED)?.cols();
    let entries = parse_embeddings(&text, dim, &path.display().to_string())?;
    let table = store.get_mut(names::EMBED)?;
    let mut loaded = 0;
    for (word, values) in entries {
        if let Some(id) = vocab.get(&word) {
            if id < table.rows() {
                table.row_mut(id).copy_from_slice(&values);
                loaded += 1;
            }
        }
    }
    Ok(loaded)
}
