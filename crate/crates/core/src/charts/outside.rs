use super::inside::Chart;
use crate::autodiff::log_add_exp;
use crate::error::{Error, Result};
use crate::scoring::EdgeScoreTable;

/// Posterior edge probabilities aligned with [`EdgeScoreTable::edges`].
#[derive(Clone, Debug)]
pub struct MarginalTable {
    n: usize,
    log_z: f64,
    values: Vec<f64>,
    arcs: Vec<f64>,
}

impl MarginalTable {
    pub(crate) fn new(table: &EdgeScoreTable, log_z: f64, values: Vec<f64>) -> Self {
        let n = table.n();
        let mut arcs = vec![0.0; (n + 1) * (n + 1)];
        for (e, v) in table.edges().iter().zip(&values) {
            arcs[e.head * (n + 1) + e.dep] += v;
        }
        MarginalTable {
            n,
            log_z,
            values,
            arcs,
        }
    }

    /// Log-partition of the table the marginals came from.
    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, edge_id: usize) -> f64 {
        self.values[edge_id]
    }

    /// `P(head → dep)`, summed over labels.
    pub fn head_marginal(&self, head: usize, dep: usize) -> f64 {
        self.arcs[head * (self.n + 1) + dep]
    }

    /// Mass over all heads of `dep`; 1 up to rounding.
    pub fn dep_mass(&self, dep: usize) -> f64 {
        (0..=self.n).map(|h| self.head_marginal(h, dep)).sum()
    }

    /// Expected edge count; `n` up to rounding.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn acc(slot: &mut f64, v: f64) {
    if v != f64::NEG_INFINITY {
        *slot = log_add_exp(*slot, v);
    }
}

/// Outside pass over a log-space inside chart; returns edge marginals.
pub fn outside(table: &EdgeScoreTable, chart: &Chart<f64>) -> Result<MarginalTable> {
    let n = table.n();
    let log_z = *chart.goal();
    if !log_z.is_finite() {
        return Err(Error::Numeric(format!("log-partition is {log_z}")));
    }
    let s = table.max_slots();
    let c_idx = |i: usize, j: usize, a: usize| (i * (n + 1) + j) * s + a;
    let i_idx = |i: usize, j: usize, a: usize, b: usize| ((i * (n + 1) + j) * s + a) * s + b;
    let spans = (n + 1) * (n + 1);
    let ninf = f64::NEG_INFINITY;
    let mut bcr = vec![ninf; spans * s];
    let mut bcl = vec![ninf; spans * s];
    let mut bir = vec![ninf; spans * s * s];
    let mut bil = vec![ninf; spans * s * s];
    bcr[c_idx(0, n, 0)] = 0.0;

    for width in (1..=n).rev() {
        for i in 0..=n - width {
            let j = i + width;
            for a in 0..table.num_slots(i) {
                let beta = bcr[c_idx(i, j, a)];
                if beta == ninf {
                    continue;
                }
                for k in i + 1..=j {
                    for c in 0..table.num_slots(k) {
                        let x = *chart.ir(i, k, a, c);
                        let y = *chart.cr(k, j, c);
                        if x == ninf || y == ninf {
                            continue;
                        }
                        acc(&mut bir[i_idx(i, k, a, c)], beta + y);
                        if k < j {
                            acc(&mut bcr[c_idx(k, j, c)], beta + x);
                        }
                    }
                }
            }
            if i > 0 {
                for b in 0..table.num_slots(j) {
                    let beta = bcl[c_idx(i, j, b)];
                    if beta == ninf {
                        continue;
                    }
                    for k in i..j {
                        for c in 0..table.num_slots(k) {
                            let x = *chart.cl(i, k, c);
                            let y = *chart.il(k, j, c, b);
                            if x == ninf || y == ninf {
                                continue;
                            }
                            acc(&mut bil[i_idx(k, j, c, b)], beta + x);
                            if k > i {
                                acc(&mut bcl[c_idx(i, k, c)], beta + y);
                            }
                        }
                    }
                }
            }
            for a in 0..table.num_slots(i) {
                for b in 0..table.num_slots(j) {
                    let mut w = ninf;
                    if table.edge_id(i, j, a, b).is_some() {
                        acc(&mut w, bir[i_idx(i, j, a, b)] + table.score(i, j, a, b));
                    }
                    if i > 0 && table.edge_id(j, i, b, a).is_some() {
                        acc(&mut w, bil[i_idx(i, j, a, b)] + table.score(j, i, b, a));
                    }
                    if w == ninf {
                        continue;
                    }
                    for k in i..j {
                        let x = *chart.cr(i, k, a);
                        let y = *chart.cl(k + 1, j, b);
                        if x == ninf || y == ninf {
                            continue;
                        }
                        if k > i {
                            acc(&mut bcr[c_idx(i, k, a)], w + y);
                        }
                        if k + 1 < j {
                            acc(&mut bcl[c_idx(k + 1, j, b)], w + x);
                        }
                    }
                }
            }
        }
    }

    let values = table
        .edges()
        .iter()
        .map(|e| {
            let (alpha, beta) = if e.head < e.dep {
                let idx = i_idx(e.head, e.dep, e.head_slot, e.dep_slot);
                (*chart.ir(e.head, e.dep, e.head_slot, e.dep_slot), bir[idx])
            } else {
                let idx = i_idx(e.dep, e.head, e.dep_slot, e.head_slot);
                (*chart.il(e.dep, e.head, e.dep_slot, e.head_slot), bil[idx])
            };
            if alpha == ninf || beta == ninf {
                0.0
            } else {
                (alpha + beta - log_z).exp()
            }
        })
        .collect();
    Ok(MarginalTable::new(table, log_z, values))
}
