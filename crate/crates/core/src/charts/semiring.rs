use crate::autodiff::{log_add_exp, logsumexp, Graph, NodeId, Tensor};

/// Value algebra the chart recurrences run in.
pub trait Semiring {
    type Value: Clone;

    fn zero(&self) -> Self::Value;
    fn one(&mut self) -> Self::Value;
    fn is_zero(&self, v: &Self::Value) -> bool;
    fn times(&mut self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    /// `⊕` over `items`; zero for an empty slice.
    fn sum(&mut self, items: &[Self::Value]) -> Self::Value;
}

/// Log-space sum-product: `⊕` is log-sum-exp, `⊗` is `+`, zero is `-inf`.
#[derive(Clone, Copy, Debug, Default)]
pub struct LogSemiring;

impl Semiring for LogSemiring {
    type Value = f64;

    fn zero(&self) -> f64 {
        f64::NEG_INFINITY
    }

    fn one(&mut self) -> f64 {
        0.0
    }

    fn is_zero(&self, v: &f64) -> bool {
        *v == f64::NEG_INFINITY
    }

    fn times(&mut self, a: &f64, b: &f64) -> f64 {
        a + b
    }

    fn sum(&mut self, items: &[f64]) -> f64 {
        match items {
            [] => f64::NEG_INFINITY,
            [x] => *x,
            [x, y] => log_add_exp(*x, *y),
            _ => logsumexp(items),
        }
    }
}

/// Max-plus: `⊕` is max, `⊗` is `+`, zero is `-inf`.
#[derive(Clone, Copy, Debug, Default)]
pub struct MaxSemiring;

impl Semiring for MaxSemiring {
    type Value = f64;

    fn zero(&self) -> f64 {
        f64::NEG_INFINITY
    }

    fn one(&mut self) -> f64 {
        0.0
    }

    fn is_zero(&self, v: &f64) -> bool {
        *v == f64::NEG_INFINITY
    }

    fn times(&mut self, a: &f64, b: &f64) -> f64 {
        a + b
    }

    fn sum(&mut self, items: &[f64]) -> f64 {
        items.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Value of [`GraphLogSemiring`]: symbolic zero/one or a `[1]` graph node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GraphValue {
    Zero,
    One,
    Node(NodeId),
}

/// Log semiring evaluated as graph nodes, so the chart value can be
/// differentiated with [`Graph::backward`].
pub struct GraphLogSemiring<'g> {
    graph: &'g mut Graph,
}

impl<'g> GraphLogSemiring<'g> {
    pub fn new(graph: &'g mut Graph) -> Self {
        GraphLogSemiring { graph }
    }

    pub fn graph(&mut self) -> &mut Graph {
        self.graph
    }

    fn node(&mut self, v: &GraphValue) -> NodeId {
        match v {
            GraphValue::Node(id) => *id,
            GraphValue::One => self.graph.constant(Tensor::scalar(0.0)),
            GraphValue::Zero => self.graph.constant(Tensor::scalar(f64::NEG_INFINITY)),
        }
    }
}

impl Semiring for GraphLogSemiring<'_> {
    type Value = GraphValue;

    fn zero(&self) -> GraphValue {
        GraphValue::Zero
    }

    fn one(&mut self) -> GraphValue {
        GraphValue::One
    }

    fn is_zero(&self, v: &GraphValue) -> bool {
        matches!(v, GraphValue::Zero)
    }

    fn times(&mut self, a: &GraphValue, b: &GraphValue) -> GraphValue {
        match (a, b) {
            (GraphValue::Zero, _) | (_, GraphValue::Zero) => GraphValue::Zero,
            (GraphValue::One, x) | (x, GraphValue::One) => *x,
            (GraphValue::Node(x), GraphValue::Node(y)) => GraphValue::Node(
                self.graph
                    .add(*x, *y)
                    .expect("scalar chart nodes share shape [1]"),
            ),
        }
    }

    fn sum(&mut self, items: &[GraphValue]) -> GraphValue {
        let live: Vec<GraphValue> = items.iter().filter(|v| !self.is_zero(v)).copied().collect();
        match live.as_slice() {
            [] => GraphValue::Zero,
            [x] => *x,
            _ => {
                let ids: Vec<NodeId> = live.iter().map(|v| self.node(v)).collect();
                let cat = self.graph.concat(&ids, 0).expect("scalar chart nodes concat");
                GraphValue::Node(self.graph.logsumexp(cat, 0).expect("rank-1 logsumexp"))
            }
        }
    }
}
