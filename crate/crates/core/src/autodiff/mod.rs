//! Reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] records primitive applications during one forward pass;
//! [`Graph::backward`] walks the record in reverse and accumulates
//! parameter gradients into a [`ParamStore`]. Structured sub-computations
//! (chart log-partitions, CRF forward passes) enter the graph through
//! [`Graph::scalar_fn`] with their exact gradients supplied by the
//! corresponding outside/backward pass.

mod graph;
mod lstm;
mod params;
mod tensor;

pub use graph::{Graph, NodeId, Primitive};
pub(crate) use graph::sigmoid;
pub use lstm::{lstm_cell, LstmWeights};
pub use params::{Gradients, ParamStore};
pub use tensor::{log_add_exp, logsumexp, Tensor};

#[cfg(test)]
mod tests;
