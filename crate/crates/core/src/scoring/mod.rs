//! Edge scoring `s(x, y, i, j)` for a dependency from the label at head
//! position `i` to the label at dependent position `j`.
//!
//! Two scorers are provided. The additive one sums a bilinear emission
//! `h_jᵀ W_e t_{y_j}` and a direction-specific transition `ψ[y_i][y_j]`; the
//! trilinear one contracts `h_j`, `t_{y_i}` and `t_{y_j}` through a rank-`D_r`
//! factored order-3 tensor. Label ids `0..m` are tags, `m` is the root label.

mod table;

use serde::{Deserialize, Serialize};

pub use table::{edge_allowed, Edge, EdgeScoreTable, Topology};

use crate::autodiff::{Graph, NodeId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Parameter names used by the scorers.
pub mod names {
    /// Label embeddings, `[m, D_l]` or `[m + 1, D_l]` when the root label
    /// needs an embedding (trilinear scorer).
    pub const LABEL_EMB: &str = "label.emb";
    /// Emission weight `W_e`, `[2·D_h, D_l]`.
    pub const EMIT_W: &str = "emit.w";
    /// Transitions for heads left of their dependent (incl. root), `[m + 1, m]`.
    pub const TRANS_RIGHT: &str = "trans.right";
    /// Transitions for heads right of their dependent, `[m + 1, m]`.
    pub const TRANS_LEFT: &str = "trans.left";
    pub const TRI_U1: &str = "tri.u1";
    pub const TRI_U2: &str = "tri.u2";
    pub const TRI_U3: &str = "tri.u3";
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    #[default]
    Additive,
    Trilinear,
}

/// Everything needed to lay out and fill an [`EdgeScoreTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScoringConfig {
    pub scorer: ScorerKind,
    pub num_labels: usize,
    pub k: usize,
    pub topology: Topology,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_p Σ_q h[p] · w[p][q] · t[q]`.
pub fn emission_score(h_j: &[f64], label_emb: &[f64], w_e: &Tensor) -> Result<f64> {
    if w_e.rank() != 2 || w_e.rows() != h_j.len() || w_e.cols() != label_emb.len() {
        return Err(Error::shape(
            "emission_score",
            format!(
                "h {} · W_e {:?} · t {}",
                h_j.len(),
                w_e.shape(),
                label_emb.len()
            ),
        ));
    }
    Ok(h_j
        .iter()
        .enumerate()
        .map(|(p, hp)| hp * dot(w_e.row(p), label_emb))
        .sum())
}

/// Borrowed view of the additive scorer's parameters.
#[derive(Clone, Copy, Debug)]
pub struct AdditiveScorerParams<'a> {
    pub w_e: &'a Tensor,
    pub label_emb: &'a Tensor,
    pub right: &'a Tensor,
    pub left: &'a Tensor,
}

impl<'a> AdditiveScorerParams<'a> {
    pub fn from_store(store: &'a ParamStore) -> Result<Self> {
        Ok(AdditiveScorerParams {
            w_e: store.get(names::EMIT_W)?,
            label_emb: store.get(names::LABEL_EMB)?,
            right: store.get(names::TRANS_RIGHT)?,
            left: store.get(names::TRANS_LEFT)?,
        })
    }
}

fn check_positions(op: &'static str, h: &Tensor, i: usize, j: usize) -> Result<()> {
    if i == j {
        return Err(Error::InvalidArgument(format!(
            "{op}: head and dependent are both position {i}"
        )));
    }
    if j == 0 || i >= h.rows() || j >= h.rows() {
        return Err(Error::InvalidArgument(format!(
            "{op}: edge ({i}, {j}) outside positions 0..{}",
            h.rows()
        )));
    }
    Ok(())
}

/// `emission(h_j, y_j) + ψ^{dir}[y_i][y_j]`, `dir` = right when `i < j`.
///
/// `h` holds one row per position, row 0 being the root.
pub fn additive_edge_score(
    i: usize,
    j: usize,
    y_i: usize,
    y_j: usize,
    h: &Tensor,
    params: &AdditiveScorerParams<'_>,
) -> Result<f64> {
    check_positions("additive_edge_score", h, i, j)?;
    let psi = if i < j { params.right } else { params.left };
    if y_i >= psi.rows() || y_j >= psi.cols() {
        return Err(Error::InvalidArgument(format!(
            "labels ({y_i}, {y_j}) outside transition matrix {:?}",
            psi.shape()
        )));
    }
    let emit = emission_score(h.row(j), params.label_emb.row(y_j), params.w_e)?;
    Ok(emit + psi.get(y_i, y_j))
}

/// Borrowed view of the trilinear scorer's factor matrices.
#[derive(Clone, Copy, Debug)]
pub struct TrilinearScorerParams<'a> {
    pub u1: &'a Tensor,
    pub u2: &'a Tensor,
    pub u3: &'a Tensor,
    pub label_emb: &'a Tensor,
}

impl<'a> TrilinearScorerParams<'a> {
    pub fn from_store(store: &'a ParamStore) -> Result<Self> {
        Ok(TrilinearScorerParams {
            u1: store.get(names::TRI_U1)?,
            u2: store.get(names::TRI_U2)?,
            u3: store.get(names::TRI_U3)?,
            label_emb: store.get(names::LABEL_EMB)?,
        })
    }
}

fn matvec(m: &Tensor, v: &[f64]) -> Result<Vec<f64>> {
    if m.cols() != v.len() {
        return Err(Error::shape(
            "trilinear_edge_score",
            format!("{:?} · vector of {}", m.shape(), v.len()),
        ));
    }
    Ok((0..m.rows()).map(|r| dot(m.row(r), v)).collect())
}

/// `Σ_r (U1 h_j)_r (U2 t_{y_i})_r (U3 t_{y_j})_r`.
///
/// The hidden operand is the dependent's state `h_j`, as in the additive
/// form's emission term.
pub fn trilinear_edge_score(
    i: usize,
    j: usize,
    y_i: usize,
    y_j: usize,
    h: &Tensor,
    params: &TrilinearScorerParams<'_>,
) -> Result<f64> {
    check_positions("trilinear_edge_score", h, i, j)?;
    if y_i >= params.label_emb.rows() || y_j >= params.label_emb.rows() {
        return Err(Error::InvalidArgument(format!(
            "labels ({y_i}, {y_j}) outside label embeddings {:?}",
            params.label_emb.shape()
        )));
    }
    let v1 = matvec(params.u1, h.row(j))?;
    let v2 = matvec(params.u2, params.label_emb.row(y_i))?;
    let v3 = matvec(params.u3, params.label_emb.row(y_j))?;
    Ok(v1.iter().zip(&v2).zip(&v3).map(|((a, b), c)| a * b * c).sum())
}

/// Per-sentence score sources shared by every table built over the same
/// encoder output: the emission matrix plus transitions (additive) or the
/// `[n, (m + 1)·m]` trilinear contraction.
#[derive(Clone, Copy, Debug)]
pub struct ScoreSources {
    kind: ScorerKind,
    num_labels: usize,
    n: usize,
    flat: NodeId,
    trans: Option<NodeId>,
}

impl ScoreSources {
    /// `h` is the `[n + 1, 2·D_h]` encoder output with the root in row 0.
    pub fn build(
        g: &mut Graph,
        store: &ParamStore,
        h: NodeId,
        kind: ScorerKind,
        num_labels: usize,
    ) -> Result<Self> {
        let m = num_labels;
        let rows = g.value(h).rows();
        if rows < 2 {
            return Err(Error::InvalidArgument("no token positions to score".into()));
        }
        let n = rows - 1;
        let tokens = g.slice(h, 0, 1, rows)?;
        let labels = g.param(store, names::LABEL_EMB)?;
        let label_rows = g.value(labels).rows();
        if label_rows != m && label_rows != m + 1 {
            return Err(Error::shape(
                "score-sources",
                format!("{label_rows} label embeddings for {m} labels"),
            ));
        }
        let tags = if label_rows == m {
            labels
        } else {
            g.slice(labels, 0, 0, m)?
        };
        match kind {
            ScorerKind::Additive => {
                let w_e = g.param(store, names::EMIT_W)?;
                let proj = g.matmul(tokens, w_e)?;
                let tags_t = g.transpose(tags)?;
                let emissions = g.matmul(proj, tags_t)?;
                let flat = g.reshape(emissions, &[n * m])?;
                let right = g.param(store, names::TRANS_RIGHT)?;
                let left = g.param(store, names::TRANS_LEFT)?;
                for t in [right, left] {
                    if g.value(t).shape() != [m + 1, m] {
                        return Err(Error::shape(
                            "score-sources",
                            format!("transition {:?}, expected [{}, {m}]", g.value(t).shape(), m + 1),
                        ));
                    }
                }
                let right = g.reshape(right, &[(m + 1) * m])?;
                let left = g.reshape(left, &[(m + 1) * m])?;
                let trans = g.concat(&[right, left], 0)?;
                Ok(ScoreSources {
                    kind,
                    num_labels: m,
                    n,
                    flat,
                    trans: Some(trans),
                })
            }
            ScorerKind::Trilinear => {
                if label_rows != m + 1 {
                    return Err(Error::shape(
                        "score-sources",
                        "trilinear scorer needs a root label embedding",
                    ));
                }
                let u1 = g.param(store, names::TRI_U1)?;
                let u2 = g.param(store, names::TRI_U2)?;
                let u3 = g.param(store, names::TRI_U3)?;
                let u1t = g.transpose(u1)?;
                let u2t = g.transpose(u2)?;
                let u3t = g.transpose(u3)?;
                let v1 = g.matmul(tokens, u1t)?; // [n, D_r]
                let v2 = g.matmul(labels, u2t)?; // [m + 1, D_r]
                let v3 = g.matmul(tags, u3t)?; // [m, D_r]
                let heads: Vec<usize> = (0..=m).flat_map(|a| std::iter::repeat_n(a, m)).collect();
                let deps: Vec<usize> = (0..=m).flat_map(|_| 0..m).collect();
                let hv = g.lookup(v2, &heads)?;
                let dv = g.lookup(v3, &deps)?;
                let pair = g.mul(hv, dv)?; // [(m + 1)·m, D_r]
                let pair_t = g.transpose(pair)?;
                let contraction = g.matmul(v1, pair_t)?; // [n, (m + 1)·m]
                let flat = g.reshape(contraction, &[n * (m + 1) * m])?;
                Ok(ScoreSources {
                    kind,
                    num_labels: m,
                    n,
                    flat,
                    trans: None,
                })
            }
        }
    }

    /// Scores of `table`'s admissible entries, in [`EdgeScoreTable::edges`]
    /// order, as a `[num_edges]` node.
    pub fn edge_scores(&self, g: &mut Graph, table: &EdgeScoreTable) -> Result<NodeId> {
        let m = self.num_labels;
        if table.n() != self.n || table.num_tags() != m {
            return Err(Error::shape(
                "edge-scores",
                format!(
                    "table for n={} m={} over sources for n={} m={m}",
                    table.n(),
                    table.num_tags(),
                    self.n
                ),
            ));
        }
        let edges = table.edges();
        let label = |pos: usize, slot: usize| table.label(pos, slot);
        match self.kind {
            ScorerKind::Additive => {
                let emit_idx: Vec<usize> = edges
                    .iter()
                    .map(|e| (e.dep - 1) * m + label(e.dep, e.dep_slot))
                    .collect();
                let trans_idx: Vec<usize> = edges
                    .iter()
                    .map(|e| {
                        let offset = if e.head < e.dep { 0 } else { (m + 1) * m };
                        offset + label(e.head, e.head_slot) * m + label(e.dep, e.dep_slot)
                    })
                    .collect();
                let emit = g.gather(self.flat, &emit_idx)?;
                let trans = self.trans.expect("additive sources carry transitions");
                let trans = g.gather(trans, &trans_idx)?;
                g.add(emit, trans)
            }
            ScorerKind::Trilinear => {
                let idx: Vec<usize> = edges
                    .iter()
                    .map(|e| {
                        ((e.dep - 1) * (m + 1) + label(e.head, e.head_slot)) * m
                            + label(e.dep, e.dep_slot)
                    })
                    .collect();
                g.gather(self.flat, &idx)
            }
        }
    }

    /// `[n, m]` emission scores; only the additive scorer has them.
    pub fn emissions(&self, g: &mut Graph) -> Result<NodeId> {
        match self.kind {
            ScorerKind::Additive => g.reshape(self.flat, &[self.n, self.num_labels]),
            ScorerKind::Trilinear => Err(Error::InvalidArgument(
                "trilinear scorer has no separate emission term".into(),
            )),
        }
    }
}

/// Builds the masked table over `h` and the differentiable node holding its
/// admissible entries. With `gold`, the table is restricted to those labels.
pub fn build_score_table(
    g: &mut Graph,
    store: &ParamStore,
    h: NodeId,
    gold: Option<&[usize]>,
    config: &ScoringConfig,
) -> Result<(EdgeScoreTable, NodeId)> {
    let sources = ScoreSources::build(g, store, h, config.scorer, config.num_labels)?;
    let n = g.value(h).rows() - 1;
    let mut table = match gold {
        Some(y) => {
            if y.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "{} gold labels for {n} tokens",
                    y.len()
                )));
            }
            EdgeScoreTable::fixed(y, config.num_labels, config.k, config.topology)?
        }
        None => EdgeScoreTable::labeled(n, config.num_labels, config.k, config.topology)?,
    };
    let scores = sources.edge_scores(g, &table)?;
    table.set_edge_scores(g.value(scores).data())?;
    Ok((table, scores))
}

#[cfg(test)]
mod tests;
