use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which non-root edges a table admits before the length limit applies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    /// Every head/dependent pair.
    #[default]
    Full,
    /// Only edges out of the root.
    RootOnly,
    /// Only `i-1 → i`, including `0 → 1`.
    ChainOnly,
}

/// Whether `head → dep` is admissible in a sentence of length `n`.
///
/// Position 0 is the root: it is never a dependent and its edges are exempt
/// from the length limit `k`.
pub fn edge_allowed(n: usize, k: usize, topology: Topology, head: usize, dep: usize) -> bool {
    if dep == 0 || dep > n || head > n || head == dep {
        return false;
    }
    if head != 0 && head.abs_diff(dep) > k {
        return false;
    }
    match topology {
        Topology::Full => true,
        Topology::RootOnly => head == 0,
        Topology::ChainOnly => head + 1 == dep,
    }
}

/// One admissible `(head, dep, head label, dep label)` entry, with labels
/// given as slots into the per-position label lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub head: usize,
    pub dep: usize,
    pub head_slot: usize,
    pub dep_slot: usize,
}

const NO_EDGE: u32 = u32::MAX;

/// Edge scores `s(i, j, y_i, y_j)` for every head `i ∈ 0..=n` and dependent
/// `j ∈ 1..=n`.
///
/// Each position carries a list of candidate labels: position 0 carries only
/// the root label, other positions carry every tag (labeled tables) or just
/// the gold tag (fixed-label tables). Masked entries hold `-inf` and are not
/// listed in [`EdgeScoreTable::edges`].
#[derive(Clone, Debug)]
pub struct EdgeScoreTable {
    n: usize,
    slots: usize,
    labels: Vec<Vec<usize>>,
    root_label: usize,
    k: usize,
    topology: Topology,
    values: Vec<f64>,
    edges: Vec<Edge>,
    edge_of: Vec<u32>,
}

impl EdgeScoreTable {
    /// Table over all `num_labels` tags at every position, all admissible
    /// entries scored 0.
    pub fn labeled(n: usize, num_labels: usize, k: usize, topology: Topology) -> Result<Self> {
        if num_labels == 0 {
            return Err(Error::InvalidArgument("label set is empty".into()));
        }
        let mut labels = vec![vec![num_labels]];
        labels.extend((0..n).map(|_| (0..num_labels).collect::<Vec<_>>()));
        Self::from_label_lists(n, labels, num_labels, k, topology)
    }

    /// Table restricted to a fixed label sequence `gold` (one per token).
    pub fn fixed(gold: &[usize], num_labels: usize, k: usize, topology: Topology) -> Result<Self> {
        if let Some(bad) = gold.iter().find(|&&y| y >= num_labels) {
            return Err(Error::InvalidArgument(format!(
                "label id {bad} out of range for {num_labels} labels"
            )));
        }
        let mut labels = vec![vec![num_labels]];
        labels.extend(gold.iter().map(|&y| vec![y]));
        Self::from_label_lists(gold.len(), labels, num_labels, k, topology)
    }

    fn from_label_lists(
        n: usize,
        labels: Vec<Vec<usize>>,
        root_label: usize,
        k: usize,
        topology: Topology,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("sentence is empty".into()));
        }
        if k < 1 {
            return Err(Error::InvalidArgument(
                "dependency length limit must be at least 1".into(),
            ));
        }
        let slots = labels.iter().map(Vec::len).max().unwrap_or(1);
        let size = (n + 1) * (n + 1) * slots * slots;
        let mut values = vec![f64::NEG_INFINITY; size];
        let mut edge_of = vec![NO_EDGE; size];
        let mut edges = Vec::new();
        for head in 0..=n {
            for dep in 1..=n {
                if !edge_allowed(n, k, topology, head, dep) {
                    continue;
                }
                for head_slot in 0..labels[head].len() {
                    for dep_slot in 0..labels[dep].len() {
                        let idx = ((head * (n + 1) + dep) * slots + head_slot) * slots + dep_slot;
                        values[idx] = 0.0;
                        edge_of[idx] = edges.len() as u32;
                        edges.push(Edge {
                            head,
                            dep,
                            head_slot,
                            dep_slot,
                        });
                    }
                }
            }
        }
        Ok(EdgeScoreTable {
            n,
            slots,
            labels,
            root_label,
            k,
            topology,
            values,
            edges,
            edge_of,
        })
    }

    /// Fills every admissible entry from `f(i, j, y_i, y_j)` (label ids).
    pub fn with_scores(mut self, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        for e in 0..self.edges.len() {
            let edge = self.edges[e];
            let v = f(
                edge.head,
                edge.dep,
                self.labels[edge.head][edge.head_slot],
                self.labels[edge.dep][edge.dep_slot],
            );
            let idx = self.dense_index(edge.head, edge.dep, edge.head_slot, edge.dep_slot);
            self.values[idx] = v;
        }
        self
    }

    /// Sets the scores of the admissible entries, in [`Self::edges`] order.
    pub fn set_edge_scores(&mut self, scores: &[f64]) -> Result<()> {
        if scores.len() != self.edges.len() {
            return Err(Error::shape(
                "edge-scores",
                format!("{} scores for {} edges", scores.len(), self.edges.len()),
            ));
        }
        for (edge, &s) in self.edges.iter().zip(scores) {
            let idx = ((edge.head * (self.n + 1) + edge.dep) * self.slots + edge.head_slot)
                * self.slots
                + edge.dep_slot;
            self.values[idx] = s;
        }
        Ok(())
    }

    pub fn edge_scores(&self) -> Vec<f64> {
        self.edges
            .iter()
            .map(|e| self.score(e.head, e.dep, e.head_slot, e.dep_slot))
            .collect()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    /// Id of the root label; tags are `0..root_label`.
    pub fn root_label(&self) -> usize {
        self.root_label
    }

    pub fn num_tags(&self) -> usize {
        self.root_label
    }

    /// Widest label list over all positions.
    pub fn max_slots(&self) -> usize {
        self.slots
    }

    pub fn num_slots(&self, pos: usize) -> usize {
        self.labels[pos].len()
    }

    pub fn label(&self, pos: usize, slot: usize) -> usize {
        self.labels[pos][slot]
    }

    pub fn slot_of(&self, pos: usize, label: usize) -> Option<usize> {
        self.labels.get(pos)?.iter().position(|&l| l == label)
    }

    /// True when every token carries exactly one candidate label.
    pub fn is_fixed(&self) -> bool {
        self.labels.iter().all(|l| l.len() == 1)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn allowed(&self, head: usize, dep: usize) -> bool {
        edge_allowed(self.n, self.k, self.topology, head, dep)
    }

    #[inline]
    pub(crate) fn dense_index(&self, head: usize, dep: usize, head_slot: usize, dep_slot: usize) -> usize {
        ((head * (self.n + 1) + dep) * self.slots + head_slot) * self.slots + dep_slot
    }

    /// Score by label slots; `-inf` for masked entries.
    #[inline]
    pub fn score(&self, head: usize, dep: usize, head_slot: usize, dep_slot: usize) -> f64 {
        self.values[self.dense_index(head, dep, head_slot, dep_slot)]
    }

    /// Score by label ids; `-inf` for masked or absent labels.
    pub fn score_by_label(&self, head: usize, dep: usize, head_label: usize, dep_label: usize) -> f64 {
        if head > self.n || dep > self.n {
            return f64::NEG_INFINITY;
        }
        match (self.slot_of(head, head_label), self.slot_of(dep, dep_label)) {
            (Some(a), Some(b)) => self.score(head, dep, a, b),
            _ => f64::NEG_INFINITY,
        }
    }

    /// Index into [`Self::edges`] of an admissible entry.
    #[inline]
    pub fn edge_id(&self, head: usize, dep: usize, head_slot: usize, dep_slot: usize) -> Option<usize> {
        let e = self.edge_of[self.dense_index(head, dep, head_slot, dep_slot)];
        (e != NO_EDGE).then_some(e as usize)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn two_tokens_k1_nothing_length_masked() {
        let t = EdgeScoreTable::labeled(2, 1, 1, Topology::Full).unwrap();
        for (h, d) in [(1, 2), (2, 1), (0, 1), (0, 2)] {
            assert!(t.allowed(h, d), "({h},{d})");
            assert_eq!(t.score_by_label(h, d, if h == 0 { 1 } else { 0 }, 0), 0.0);
        }
        assert_eq!(t.edges().len(), 4);
    }

    #[test]
    fn root_edges_exempt_from_length_limit() {
        let t = EdgeScoreTable::labeled(12, 2, 10, Topology::Full).unwrap();
        assert!(!t.allowed(1, 12));
        assert!(t.allowed(0, 12));
        assert_eq!(t.score_by_label(1, 12, 0, 0), f64::NEG_INFINITY);
        assert_eq!(t.score_by_label(0, 12, 2, 1), 0.0);
    }

    #[test]
    fn zero_length_limit_rejected() {
        assert!(EdgeScoreTable::labeled(3, 2, 0, Topology::Full).is_err());
        assert!(EdgeScoreTable::labeled(0, 2, 1, Topology::Full).is_err());
    }

    #[test]
    fn fixed_table_keeps_one_label() {
        let t = EdgeScoreTable::fixed(&[1, 0, 1], 2, 5, Topology::Full).unwrap();
        assert!(t.is_fixed());
        assert_eq!(t.score_by_label(1, 2, 1, 0), 0.0);
        assert_eq!(t.score_by_label(1, 2, 0, 0), f64::NEG_INFINITY);
        assert!(EdgeScoreTable::fixed(&[2], 2, 5, Topology::Full).is_err());
    }

    #[test]
    fn topologies() {
        let root = EdgeScoreTable::labeled(3, 2, 3, Topology::RootOnly).unwrap();
        assert!(root.edges().iter().all(|e| e.head == 0));
        let chain = EdgeScoreTable::labeled(3, 2, 3, Topology::ChainOnly).unwrap();
        assert!(chain.edges().iter().all(|e| e.head + 1 == e.dep));
    }

    proptest! {
        #[test]
        fn mask_invariants(n in 1usize..7, k in 1usize..7, m in 1usize..4) {
            let t = EdgeScoreTable::labeled(n, m, k, Topology::Full).unwrap();
            let root = t.root_label();
            prop_assert_eq!(root, m);
            for i in 0..=n {
                for j in 1..=n {
                    for yi in 0..=m {
                        for yj in 0..=m {
                            let s = t.score_by_label(i, j, yi, yj);
                            let masked = i == j
                                || (i >= 1 && i.abs_diff(j) > k)
                                || (i == 0 && yi != root)
                                || (i >= 1 && yi == root)
                                || yj == root;
                            prop_assert_eq!(s == f64::NEG_INFINITY, masked,
                                "({}, {}, {}, {})", i, j, yi, yj);
                        }
                    }
                }
            }
        }
    }
}
