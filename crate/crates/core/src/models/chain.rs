//! Linear-chain forward, forward-backward and Viterbi over a small lattice.
//!
//! Both CRF orders reduce to the same shape: a lattice with one step per
//! token, each arc scored by one emission entry plus one transition entry.

use crate::autodiff::{log_add_exp, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct Arc {
    from: usize,
    to: usize,
    emit: usize,
    trans: usize,
}

/// Step `t` holds arcs from states after token `t` (the start state when
/// `t = 0`) to states after token `t + 1`. State `q` carries label `q % m`.
#[derive(Clone, Debug)]
pub(crate) struct Lattice {
    m: usize,
    states: usize,
    steps: Vec<Vec<Arc>>,
}

pub(crate) struct Posterior {
    pub log_z: f64,
    pub emit_grad: Vec<f64>,
    pub trans_grad: Vec<f64>,
}

fn check(op: &'static str, emissions: &Tensor, trans: &Tensor, rows: usize, m: usize) -> Result<usize> {
    if emissions.rank() != 2 || emissions.cols() != m || emissions.rows() == 0 {
        return Err(Error::shape(op, format!("emissions {:?} for {m} labels", emissions.shape())));
    }
    if trans.shape() != [rows, m] {
        return Err(Error::shape(op, format!("transitions {:?}, expected [{rows}, {m}]", trans.shape())));
    }
    Ok(emissions.rows())
}

impl Lattice {
    /// First order: state = current label; transitions `[m + 1, m]` with
    /// row `m` scoring the first label.
    pub(crate) fn first_order(emissions: &Tensor, trans: &Tensor) -> Result<Self> {
        let m = emissions.cols();
        let n = check("crf1", emissions, trans, m + 1, m)?;
        let mut steps = Vec::with_capacity(n);
        steps.push((0..m).map(|c| Arc { from: 0, to: c, emit: c, trans: m * m + c }).collect());
        for t in 1..n {
            let mut arcs = Vec::with_capacity(m * m);
            for b in 0..m {
                for c in 0..m {
                    arcs.push(Arc { from: b, to: c, emit: t * m + c, trans: b * m + c });
                }
            }
            steps.push(arcs);
        }
        Ok(Lattice { m, states: m, steps })
    }

    /// Second order: state = (previous label, current label) with `m`
    /// standing for the start; transitions `[(m + 1)², m]` indexed by
    /// `(y_{t-2}·(m + 1) + y_{t-1}, y_t)`.
    pub(crate) fn second_order(emissions: &Tensor, trans: &Tensor) -> Result<Self> {
        let m = emissions.cols();
        let n = check("crf2", emissions, trans, (m + 1) * (m + 1), m)?;
        let s = m + 1;
        let state = |b: usize, c: usize| b * m + c;
        let tr = |a: usize, b: usize, c: usize| (a * s + b) * m + c;
        let mut steps = Vec::with_capacity(n);
        // the start state is (start, start); index it as state 0 of step 0
        steps.push(
            (0..m)
                .map(|c| Arc { from: 0, to: state(m, c), emit: c, trans: tr(m, m, c) })
                .collect(),
        );
        for t in 1..n {
            let prevs: Vec<usize> = if t == 1 { vec![m] } else { (0..m).collect() };
            let mut arcs = Vec::new();
            for &a in &prevs {
                for b in 0..m {
                    for c in 0..m {
                        arcs.push(Arc {
                            from: state(a, b),
                            to: state(b, c),
                            emit: t * m + c,
                            trans: tr(a, b, c),
                        });
                    }
                }
            }
            steps.push(arcs);
        }
        Ok(Lattice { m, states: s * m, steps })
    }

    fn score(arc: &Arc, e: &[f64], t: &[f64]) -> f64 {
        e[arc.emit] + t[arc.trans]
    }

    fn forward(&self, e: &[f64], t: &[f64]) -> Vec<Vec<f64>> {
        let mut alpha = Vec::with_capacity(self.steps.len() + 1);
        let mut start = vec![f64::NEG_INFINITY; self.states];
        start[0] = 0.0;
        alpha.push(start);
        for arcs in &self.steps {
            let prev = alpha.last().expect("start pushed");
            let mut next = vec![f64::NEG_INFINITY; self.states];
            for arc in arcs {
                next[arc.to] = log_add_exp(next[arc.to], prev[arc.from] + Self::score(arc, e, t));
            }
            alpha.push(next);
        }
        alpha
    }

    pub(crate) fn log_partition(&self, emissions: &Tensor, trans: &Tensor) -> f64 {
        let alpha = self.forward(emissions.data(), trans.data());
        crate::autodiff::logsumexp(alpha.last().expect("non-empty"))
    }

    pub(crate) fn posterior(&self, emissions: &Tensor, trans: &Tensor) -> Posterior {
        let (e, t) = (emissions.data(), trans.data());
        let alpha = self.forward(e, t);
        let log_z = crate::autodiff::logsumexp(alpha.last().expect("non-empty"));
        let mut beta = vec![0.0; self.states];
        let mut emit_grad = vec![0.0; e.len()];
        let mut trans_grad = vec![0.0; t.len()];
        for (step, arcs) in self.steps.iter().enumerate().rev() {
            let mut prev = vec![f64::NEG_INFINITY; self.states];
            for arc in arcs {
                let s = Self::score(arc, e, t);
                let a = alpha[step][arc.from];
                if a > f64::NEG_INFINITY && beta[arc.to] > f64::NEG_INFINITY {
                    let p = (a + s + beta[arc.to] - log_z).exp();
                    emit_grad[arc.emit] += p;
                    trans_grad[arc.trans] += p;
                }
                prev[arc.from] = log_add_exp(prev[arc.from], s + beta[arc.to]);
            }
            beta = prev;
        }
        Posterior {
            log_z,
            emit_grad,
            trans_grad,
        }
    }

    /// Best label sequence and its score; ties go to the lowest label.
    pub(crate) fn viterbi(&self, emissions: &Tensor, trans: &Tensor) -> Result<(Vec<usize>, f64)> {
        let (e, t) = (emissions.data(), trans.data());
        if e.iter().chain(t).any(|v| v.is_nan()) {
            return Err(Error::Numeric("chain scores contain NaN".into()));
        }
        let mut delta = vec![f64::NEG_INFINITY; self.states];
        delta[0] = 0.0;
        let mut back: Vec<Vec<usize>> = Vec::with_capacity(self.steps.len());
        for arcs in &self.steps {
            let mut next = vec![f64::NEG_INFINITY; self.states];
            let mut bp = vec![usize::MAX; self.states];
            for arc in arcs {
                let v = delta[arc.from] + Self::score(arc, e, t);
                if v > next[arc.to] {
                    next[arc.to] = v;
                    bp[arc.to] = arc.from;
                }
            }
            delta = next;
            back.push(bp);
        }
        let mut best = 0;
        for q in 0..self.states {
            if delta[q] > delta[best] || (delta[q] == delta[best] && q % self.m < best % self.m) {
                best = q;
            }
        }
        let score = delta[best];
        if score == f64::NEG_INFINITY || score.is_nan() {
            return Err(Error::Numeric("no finite-scoring label sequence".into()));
        }
        let mut labels = vec![0; self.steps.len()];
        let mut q = best;
        for step in (0..self.steps.len()).rev() {
            labels[step] = q % self.m;
            q = back[step][q];
        }
        Ok((labels, score))
    }

    /// Emission and transition indices used by `labels`.
    pub(crate) fn path_indices(&self, labels: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        if labels.len() != self.steps.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} tokens",
                labels.len(),
                self.steps.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= self.m) {
            return Err(Error::InvalidArgument(format!("label id {bad} out of range for {} labels", self.m)));
        }
        let mut state = 0;
        let (mut emit, mut trans) = (Vec::new(), Vec::new());
        for (arcs, &y) in self.steps.iter().zip(labels) {
            let arc = arcs
                .iter()
                .find(|a| a.from == state && a.to % self.m == y)
                .expect("every label is reachable from every state");
            emit.push(arc.emit);
            trans.push(arc.trans);
            state = arc.to;
        }
        Ok((emit, trans))
    }
}

/// Log partition of a first-order chain.
pub fn crf1_forward(emissions: &Tensor, trans: &Tensor) -> Result<f64> {
    Ok(Lattice::first_order(emissions, trans)?.log_partition(emissions, trans))
}

pub fn crf1_viterbi(emissions: &Tensor, trans: &Tensor) -> Result<(Vec<usize>, f64)> {
    Lattice::first_order(emissions, trans)?.viterbi(emissions, trans)
}

/// Log partition of a second-order chain.
pub fn crf2_forward(emissions: &Tensor, trans: &Tensor) -> Result<f64> {
    Ok(Lattice::second_order(emissions, trans)?.log_partition(emissions, trans))
}

pub fn crf2_viterbi(emissions: &Tensor, trans: &Tensor) -> Result<(Vec<usize>, f64)> {
    Lattice::second_order(emissions, trans)?.viterbi(emissions, trans)
}
