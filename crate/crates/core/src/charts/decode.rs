use super::forest::DepForest;
use super::inside::{inside, Chart};
use super::semiring::MaxSemiring;
use crate::error::{Error, Result};
use crate::scoring::EdgeScoreTable;

/// Best joint structure of a table.
#[derive(Clone, Debug, PartialEq)]
pub struct Parse {
    pub forest: DepForest,
    /// Label id per token.
    pub labels: Vec<usize>,
    pub score: f64,
}

/// Max-semiring inside plus backtracking.
///
/// Ties go to the lowest split point, then the lowest label slot.
pub fn max_decode(table: &EdgeScoreTable) -> Result<Parse> {
    let scores = table.edge_scores();
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("edge scores contain NaN".into()));
    }
    let chart = inside(&mut MaxSemiring, table, &scores)?;
    let score = *chart.goal();
    if score == f64::NEG_INFINITY {
        return Err(Error::Numeric("table admits no forest".into()));
    }
    let n = table.n();
    let mut heads = vec![usize::MAX; n];
    let mut slots = vec![0usize; n];
    let mut tracer = Tracer {
        table,
        chart: &chart,
        heads: &mut heads,
        slots: &mut slots,
    };
    tracer.complete_right(0, n, 0);
    let labels = (1..=n).map(|j| table.label(j, slots[j - 1])).collect();
    Ok(Parse {
        forest: DepForest::new(heads)?,
        labels,
        score,
    })
}

struct Tracer<'a> {
    table: &'a EdgeScoreTable,
    chart: &'a Chart<f64>,
    heads: &'a mut [usize],
    slots: &'a mut [usize],
}

/// First index of the maximum; candidates arrive in tie-break order.
fn first_argmax<T>(cands: impl Iterator<Item = (f64, T)>) -> Option<T> {
    let mut best: Option<(f64, T)> = None;
    for (v, t) in cands {
        if v == f64::NEG_INFINITY {
            continue;
        }
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, t));
        }
    }
    best.map(|(_, t)| t)
}

impl Tracer<'_> {
    fn complete_right(&mut self, i: usize, j: usize, a: usize) {
        if i == j {
            return;
        }
        let (chart, table) = (self.chart, self.table);
        let cands = (i + 1..=j).flat_map(|k| {
            (0..table.num_slots(k)).map(move |c| (chart.ir(i, k, a, c) + chart.cr(k, j, c), (k, c)))
        });
        let (k, c) = first_argmax(cands).expect("non-zero complete item has a derivation");
        self.incomplete(i, k, a, c, true);
        self.complete_right(k, j, c);
    }

    fn complete_left(&mut self, i: usize, j: usize, b: usize) {
        if i == j {
            return;
        }
        let (chart, table) = (self.chart, self.table);
        let cands = (i..j).flat_map(|k| {
            (0..table.num_slots(k)).map(move |c| (chart.cl(i, k, c) + chart.il(k, j, c, b), (k, c)))
        });
        let (k, c) = first_argmax(cands).expect("non-zero complete item has a derivation");
        self.complete_left(i, k, c);
        self.incomplete(k, j, c, b, false);
    }

    fn incomplete(&mut self, i: usize, j: usize, a: usize, b: usize, rightward: bool) {
        if rightward {
            self.heads[j - 1] = i;
            self.slots[j - 1] = b;
        } else {
            self.heads[i - 1] = j;
            self.slots[i - 1] = a;
        }
        let chart = self.chart;
        let cands = (i..j).map(|k| (chart.cr(i, k, a) + chart.cl(k + 1, j, b), k));
        let k = first_argmax(cands).expect("non-zero incomplete item has a derivation");
        self.complete_right(i, k, a);
        self.complete_left(k + 1, j, b);
    }
}
