//! Dynamic programs over projective dependency forests.
//!
//! Every entry point takes an [`EdgeScoreTable`]. Fixed-label tables give the
//! sums over forests for one label sequence; labeled tables sum jointly over
//! labels and forests.

pub mod brute;
mod decode;
mod forest;
mod inside;
mod outside;
mod semiring;

pub use decode::{max_decode, Parse};
pub use forest::DepForest;
pub use inside::{inside, Chart};
pub use outside::{outside, MarginalTable};
pub use semiring::{GraphLogSemiring, GraphValue, LogSemiring, MaxSemiring, Semiring};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::scoring::EdgeScoreTable;

fn require_fixed(table: &EdgeScoreTable, op: &str) -> Result<()> {
    if table.is_fixed() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{op} needs a table with one label per position"
        )))
    }
}

/// Log-sum over the table's structures.
pub fn log_partition(table: &EdgeScoreTable) -> Result<f64> {
    let chart = inside(&mut LogSemiring, table, &table.edge_scores())?;
    Ok(*chart.goal())
}

/// Inside followed by outside.
pub fn marginals(table: &EdgeScoreTable) -> Result<MarginalTable> {
    let chart = inside(&mut LogSemiring, table, &table.edge_scores())?;
    outside(table, &chart)
}

/// `log S(x, y)`: log-sum over forests with the labels held fixed.
pub fn inside_fixed_labels(table: &EdgeScoreTable) -> Result<f64> {
    require_fixed(table, "inside_fixed_labels")?;
    log_partition(table)
}

/// Best forest under fixed labels, with its score.
pub fn max_fixed_labels(table: &EdgeScoreTable) -> Result<(DepForest, f64)> {
    require_fixed(table, "max_fixed_labels")?;
    let parse = max_decode(table)?;
    Ok((parse.forest, parse.score))
}

pub fn marginals_fixed_labels(table: &EdgeScoreTable) -> Result<MarginalTable> {
    require_fixed(table, "marginals_fixed_labels")?;
    marginals(table)
}

/// `log Z(x)`: log-sum over labels and forests.
pub fn labeled_inside(table: &EdgeScoreTable) -> Result<f64> {
    log_partition(table)
}

pub fn labeled_marginals(table: &EdgeScoreTable) -> Result<MarginalTable> {
    marginals(table)
}

/// Joint argmax over labels and forest.
pub fn labeled_max_decode(table: &EdgeScoreTable) -> Result<Parse> {
    max_decode(table)
}

/// Log-partition as a graph node over `scores` (one entry per table edge).
///
/// The node's gradient is the edge marginals, computed by outside.
pub fn log_partition_node(g: &mut Graph, table: &EdgeScoreTable, scores: NodeId) -> Result<NodeId> {
    let m = marginals(table)?;
    let shape = g.value(scores).shape().to_vec();
    let grad = Tensor::new(shape, m.values().to_vec())?;
    g.scalar_fn(&[scores], m.log_z(), vec![grad])
}

/// Log-partition built from graph primitives, so that backward differentiates
/// the inside recurrences themselves. Slow; meant for cross-checks.
pub fn log_partition_traced(g: &mut Graph, table: &EdgeScoreTable, scores: NodeId) -> Result<NodeId> {
    let edge_values = (0..table.edges().len())
        .map(|e| g.gather(scores, &[e]).map(GraphValue::Node))
        .collect::<Result<Vec<_>>>()?;
    let mut sr = GraphLogSemiring::new(g);
    let chart = inside(&mut sr, table, &edge_values)?;
    match *chart.goal() {
        GraphValue::Node(id) => Ok(id),
        GraphValue::One => Ok(sr.graph().constant(Tensor::scalar(0.0))),
        GraphValue::Zero => Err(Error::Numeric("table admits no forest".into())),
    }
}
