use crate::error::{Error, Result};

/// Head assignment over tokens `1..=n` with the root at position 0.
///
/// The root may have several children.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DepForest {
    heads: Vec<usize>,
}

impl DepForest {
    /// `heads[j - 1]` is the head of token `j`. Fails unless the
    /// assignment is a well-formed projective forest.
    pub fn new(heads: Vec<usize>) -> Result<Self> {
        let forest = DepForest { heads };
        forest.validate()?;
        Ok(forest)
    }

    /// Skips validation; for enumeration code that filters afterwards.
    pub(crate) fn unchecked(heads: Vec<usize>) -> Self {
        DepForest { heads }
    }

    pub fn n(&self) -> usize {
        self.heads.len()
    }

    /// Head of token `dep` (1-based).
    pub fn head(&self, dep: usize) -> usize {
        self.heads[dep - 1]
    }

    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    /// `(head, dep)` pairs ordered by dependent.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.heads.iter().enumerate().map(|(j, &h)| (h, j + 1))
    }

    pub fn contains(&self, head: usize, dep: usize) -> bool {
        dep >= 1 && dep <= self.n() && self.heads[dep - 1] == head
    }

    /// True if following heads from every token reaches the root.
    pub fn is_tree(&self) -> bool {
        let n = self.n();
        if self
            .heads
            .iter()
            .enumerate()
            .any(|(j, &h)| h > n || h == j + 1)
        {
            return false;
        }
        // 0 = unvisited, 1 = on current path, 2 = reaches root
        let mut state = vec![0u8; n + 1];
        state[0] = 2;
        for start in 1..=n {
            let mut path = Vec::new();
            let mut cur = start;
            while state[cur] == 0 {
                state[cur] = 1;
                path.push(cur);
                cur = self.heads[cur - 1];
            }
            if state[cur] == 1 {
                return false;
            }
            for p in path {
                state[p] = 2;
            }
        }
        true
    }

    /// True if every edge's span holds only descendants of its head.
    ///
    /// Assumes [`Self::is_tree`].
    pub fn is_projective(&self) -> bool {
        for (h, d) in self.edges() {
            let (lo, hi) = if h < d { (h, d) } else { (d, h) };
            for w in lo + 1..hi {
                if !self.dominates(h, w) {
                    return false;
                }
            }
        }
        true
    }

    fn dominates(&self, ancestor: usize, mut node: usize) -> bool {
        while node != 0 {
            if node == ancestor {
                return true;
            }
            node = self.heads[node - 1];
        }
        ancestor == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads.is_empty() {
            return Err(Error::InvalidArgument("forest over zero tokens".into()));
        }
        if !self.is_tree() {
            return Err(Error::InvalidArgument(format!(
                "heads {:?} contain a cycle, self-loop or out-of-range head",
                self.heads
            )));
        }
        if !self.is_projective() {
            return Err(Error::InvalidArgument(format!(
                "heads {:?} are not projective",
                self.heads
            )));
        }
        Ok(())
    }
}
