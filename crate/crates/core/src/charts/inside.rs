use super::semiring::Semiring;
use crate::error::{Error, Result};
use crate::scoring::EdgeScoreTable;

/// Split-head chart over spans `0 <= i <= j <= n`.
///
/// Complete items carry the label slot of their head, incomplete items the
/// slots of both endpoints (left endpoint first). `ir` holds `i → j` items,
/// `il` holds `j → i` items.
#[derive(Clone, Debug)]
pub struct Chart<V> {
    n: usize,
    slots: usize,
    cr: Vec<V>,
    cl: Vec<V>,
    ir: Vec<V>,
    il: Vec<V>,
}

impl<V: Clone> Chart<V> {
    fn filled(n: usize, slots: usize, zero: V) -> Self {
        let spans = (n + 1) * (n + 1);
        Chart {
            n,
            slots,
            cr: vec![zero.clone(); spans * slots],
            cl: vec![zero.clone(); spans * slots],
            ir: vec![zero.clone(); spans * slots * slots],
            il: vec![zero; spans * slots * slots],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn c_idx(&self, i: usize, j: usize, a: usize) -> usize {
        (i * (self.n + 1) + j) * self.slots + a
    }

    #[inline]
    fn i_idx(&self, i: usize, j: usize, a: usize, b: usize) -> usize {
        ((i * (self.n + 1) + j) * self.slots + a) * self.slots + b
    }

    /// Right-complete span `[i, j]` headed by `i` with slot `a`.
    pub fn cr(&self, i: usize, j: usize, a: usize) -> &V {
        &self.cr[self.c_idx(i, j, a)]
    }

    /// Left-complete span `[i, j]` headed by `j` with slot `b`.
    pub fn cl(&self, i: usize, j: usize, b: usize) -> &V {
        &self.cl[self.c_idx(i, j, b)]
    }

    /// Edge `i → j`, head slot `a`, dependent slot `b`.
    pub fn ir(&self, i: usize, j: usize, a: usize, b: usize) -> &V {
        &self.ir[self.i_idx(i, j, a, b)]
    }

    /// Edge `j → i`, dependent slot `a`, head slot `b`.
    pub fn il(&self, i: usize, j: usize, a: usize, b: usize) -> &V {
        &self.il[self.i_idx(i, j, a, b)]
    }

    /// The goal item: everything under the root.
    pub fn goal(&self) -> &V {
        self.cr(0, self.n, 0)
    }
}

/// Runs the inside recurrences in `sr`. `edge_values[e]` is the semiring
/// weight of `table.edges()[e]`.
pub fn inside<S: Semiring>(
    sr: &mut S,
    table: &EdgeScoreTable,
    edge_values: &[S::Value],
) -> Result<Chart<S::Value>> {
    if edge_values.len() != table.edges().len() {
        return Err(Error::shape(
            "inside",
            format!(
                "{} edge values for {} edges",
                edge_values.len(),
                table.edges().len()
            ),
        ));
    }
    let n = table.n();
    let mut chart = Chart::filled(n, table.max_slots(), sr.zero());
    let one = sr.one();
    for i in 0..=n {
        for a in 0..table.num_slots(i) {
            let idx = chart.c_idx(i, i, a);
            chart.cr[idx] = one.clone();
            chart.cl[idx] = one.clone();
        }
    }

    let mut items = Vec::new();
    for width in 1..=n {
        for i in 0..=n - width {
            let j = i + width;
            for a in 0..table.num_slots(i) {
                for b in 0..table.num_slots(j) {
                    let right = table.edge_id(i, j, a, b);
                    let left = if i > 0 { table.edge_id(j, i, b, a) } else { None };
                    if right.is_none() && left.is_none() {
                        continue;
                    }
                    items.clear();
                    for k in i..j {
                        let x = chart.cr(i, k, a);
                        let y = chart.cl(k + 1, j, b);
                        if !sr.is_zero(x) && !sr.is_zero(y) {
                            items.push(sr.times(x, y));
                        }
                    }
                    let inner = sr.sum(&items);
                    if sr.is_zero(&inner) {
                        continue;
                    }
                    let idx = chart.i_idx(i, j, a, b);
                    if let Some(e) = right {
                        chart.ir[idx] = sr.times(&inner, &edge_values[e]);
                    }
                    if let Some(e) = left {
                        chart.il[idx] = sr.times(&inner, &edge_values[e]);
                    }
                }
            }

            for a in 0..table.num_slots(i) {
                items.clear();
                for k in i + 1..=j {
                    for c in 0..table.num_slots(k) {
                        let x = chart.ir(i, k, a, c);
                        let y = chart.cr(k, j, c);
                        if !sr.is_zero(x) && !sr.is_zero(y) {
                            items.push(sr.times(x, y));
                        }
                    }
                }
                let v = sr.sum(&items);
                let idx = chart.c_idx(i, j, a);
                chart.cr[idx] = v;
            }

            // position 0 is never a dependent, so C_L[0][j] stays zero
            if i == 0 {
                continue;
            }
            for b in 0..table.num_slots(j) {
                items.clear();
                for k in i..j {
                    for c in 0..table.num_slots(k) {
                        let x = chart.cl(i, k, c);
                        let y = chart.il(k, j, c, b);
                        if !sr.is_zero(x) && !sr.is_zero(y) {
                            items.push(sr.times(x, y));
                        }
                    }
                }
                let v = sr.sum(&items);
                let idx = chart.c_idx(i, j, b);
                chart.cl[idx] = v;
            }
        }
    }
    Ok(chart)
}
