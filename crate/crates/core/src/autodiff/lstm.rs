use super::{Graph, NodeId};
use crate::error::{Error, Result};

/// Weights of one LSTM direction, already bound into a graph.
///
/// `weight` has shape `[input + hidden, 4·hidden]` with the gate blocks
/// laid out as input, forget, candidate, output; `bias` is `[1, 4·hidden]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    pub weight: NodeId,
    pub bias: NodeId,
}

/// One step of a standard four-gate LSTM on row vectors.
///
/// `x_t` is `[1, input]`, `h_prev` and `c_prev` are `[1, hidden]`.
pub fn lstm_cell(
    g: &mut Graph,
    x_t: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
    w: LstmWeights,
) -> Result<(NodeId, NodeId)> {
    let hidden = g.value(h_prev).cols();
    let input = g.value(x_t).cols();
    let wshape = g.value(w.weight).shape().to_vec();
    if wshape != [input + hidden, 4 * hidden]
        || g.value(c_prev).shape() != [1, hidden]
        || g.value(h_prev).shape() != [1, hidden]
        || g.value(x_t).rows() != 1
    {
        return Err(Error::shape(
            "lstm_cell",
            format!(
                "x {:?}, h {:?}, c {:?}, weight {:?}",
                g.value(x_t).shape(),
                g.value(h_prev).shape(),
                g.value(c_prev).shape(),
                wshape
            ),
        ));
    }
    let xh = g.concat(&[x_t, h_prev], 1)?;
    let pre = g.matmul(xh, w.weight)?;
    let pre = g.add(pre, w.bias)?;
    let i_pre = g.slice(pre, 1, 0, hidden)?;
    let f_pre = g.slice(pre, 1, hidden, 2 * hidden)?;
    let c_pre = g.slice(pre, 1, 2 * hidden, 3 * hidden)?;
    let o_pre = g.slice(pre, 1, 3 * hidden, 4 * hidden)?;
    let i = g.sigmoid(i_pre);
    let f = g.sigmoid(f_pre);
    let cand = g.tanh(c_pre);
    let o = g.sigmoid(o_pre);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let c_act = g.tanh(c);
    let h = g.mul(o, c_act)?;
    Ok((h, c))
}
