//! Induced-tree decoding, dependency-length histograms, attachment scores and
//! length-limit sweeps.

use std::fmt;

use rayon::prelude::*;

use crate::charts::DepForest;
use crate::data::Sentence;
use crate::error::{Error, Result};
use crate::models::{Model, ModelConfig};
use crate::train::{self, TrainConfig};

/// Forest of the joint argmax over labels and trees.
pub fn decode_tree(model: &Model, tokens: &[usize]) -> Result<DepForest> {
    Ok(model.decode_tree(tokens)?.forest)
}

/// [`decode_tree`] over many sentences, in input order.
pub fn decode_all(model: &Model, data: &[Sentence]) -> Result<Vec<DepForest>> {
    data.par_iter().map(|s| decode_tree(model, &s.tokens)).collect()
}

pub const BUCKETS: [&str; 3] = ["1", "2-10", ">10"];

fn bucket(len: usize) -> usize {
    match len {
        0 | 1 => 0,
        2..=10 => 1,
        _ => 2,
    }
}

/// Share of dependencies per length bucket, in percent.
#[derive(Clone, Debug, PartialEq)]
pub struct LengthHistogram {
    pub percent: [f64; 3],
    pub counts: [usize; 3],
    pub total: usize,
}

impl LengthHistogram {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("bucket\tcount\tpercent\n");
        for (b, name) in BUCKETS.iter().enumerate() {
            out.push_str(&format!("{name}\t{}\t{:.2}\n", self.counts[b], self.percent[b]));
        }
        out
    }
}

impl fmt::Display for LengthHistogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8}{:>10}{:>10}", "length", "edges", "%")?;
        for (b, name) in BUCKETS.iter().enumerate() {
            writeln!(f, "{name:<8}{:>10}{:>10.1}", self.counts[b], self.percent[b])?;
        }
        write!(f, "{:<8}{:>10}", "total", self.total)
    }
}

/// Buckets every edge by `|head - dep|`. Root edges count, with length equal
/// to the dependent's position.
///
/// Takes head lists so gold trees that are not projective can be measured too.
pub fn length_histogram<'a>(heads: impl IntoIterator<Item = &'a [usize]>) -> Result<LengthHistogram> {
    edge_length_histogram(heads.into_iter().flat_map(|s| s.iter().enumerate().map(|(j, &h)| (h, j + 1))))
}

/// [`length_histogram`] over `(head, dep)` pairs.
pub fn edge_length_histogram(edges: impl IntoIterator<Item = (usize, usize)>) -> Result<LengthHistogram> {
    let mut counts = [0usize; 3];
    for (h, d) in edges {
        counts[bucket(h.abs_diff(d))] += 1;
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("no dependencies to histogram".into()));
    }
    let percent = counts.map(|c| 100.0 * c as f64 / total as f64);
    Ok(LengthHistogram { percent, counts, total })
}

/// Percentage of tokens whose predicted head equals the gold head.
pub fn uas(predicted: &[DepForest], gold: &[Vec<usize>]) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predicted trees for {} gold trees",
            predicted.len(),
            gold.len()
        )));
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for (i, (p, g)) in predicted.iter().zip(gold).enumerate() {
        if p.n() != g.len() {
            return Err(Error::InvalidArgument(format!(
                "sentence {i}: {} predicted heads for {} gold heads",
                p.n(),
                g.len()
            )));
        }
        correct += p.heads().iter().zip(g).filter(|(a, b)| a == b).count();
        total += g.len();
    }
    if total == 0 {
        return Err(Error::InvalidArgument("no tokens to score".into()));
    }
    Ok(100.0 * correct as f64 / total as f64)
}

/// Gold heads of every sentence; fails if any sentence lacks them.
pub fn gold_heads(data: &[Sentence]) -> Result<Vec<Vec<usize>>> {
    data.iter()
        .enumerate()
        .map(|(i, s)| {
            s.heads
                .clone()
                .ok_or_else(|| Error::Data(format!("sentence {i} has no gold heads")))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct KSweepRow {
    pub k: usize,
    pub best_epoch: usize,
    pub dev_accuracy: f64,
    pub test_accuracy: f64,
}

/// Trains one tree model per length limit and scores it on `test`.
pub fn k_sweep(
    base: &ModelConfig,
    cfg: &TrainConfig,
    train_set: &[Sentence],
    dev: &[Sentence],
    test: &[Sentence],
    ks: &[usize],
) -> Result<Vec<KSweepRow>> {
    ks.iter()
        .map(|&k| {
            let config = ModelConfig { k, ..base.clone() };
            let outcome = train::train(&config, train_set, dev, cfg)?;
            let dev_accuracy = outcome.history[outcome.best_epoch - 1].dev_accuracy;
            Ok(KSweepRow {
                k,
                best_epoch: outcome.best_epoch,
                dev_accuracy,
                test_accuracy: train::evaluate(&outcome.model, test)?,
            })
        })
        .collect()
}

pub fn k_sweep_tsv(rows: &[KSweepRow]) -> String {
    let mut out = String::from("k\tbest_epoch\tdev_accuracy\ttest_accuracy\n");
    for r in rows {
        out.push_str(&format!("{}\t{}\t{:.2}\t{:.2}\n", r.k, r.best_epoch, r.dev_accuracy, r.test_accuracy));
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn forest(heads: &[usize]) -> DepForest {
        DepForest::new(heads.to_vec()).unwrap()
    }

    #[test]
    fn histogram_examples() {
        let h = length_histogram([forest(&[0, 1]).heads()]).unwrap();
        assert_eq!(h.percent, [100.0, 0.0, 0.0]);
        assert_eq!(h.total, 2);

        let h = edge_length_histogram([(0, 1), (1, 12)]).unwrap();
        assert_eq!(h.percent, [50.0, 0.0, 50.0]);

        assert!(length_histogram(std::iter::empty::<&[usize]>()).is_err());
    }

    #[test]
    fn root_edges_measured_from_position_zero() {
        let h = length_histogram([&[0usize, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0][..]]).unwrap();
        assert_eq!(h.counts, [1, 9, 2]);
    }

    #[test]
    fn uas_examples() {
        let a = forest(&[0, 1]);
        assert_eq!(uas(std::slice::from_ref(&a), &[vec![0, 1]]).unwrap(), 100.0);
        assert_eq!(uas(std::slice::from_ref(&a), &[vec![2, 0]]).unwrap(), 0.0);
        assert_eq!(uas(std::slice::from_ref(&a), &[vec![0, 0]]).unwrap(), 50.0);
        assert!(uas(std::slice::from_ref(&a), &[]).is_err());
        assert!(uas(&[a], &[vec![0]]).is_err());
    }

    #[test]
    fn sweep_table_shape() {
        let rows = [
            KSweepRow { k: 1, best_epoch: 3, dev_accuracy: 50.0, test_accuracy: 40.0 },
            KSweepRow { k: 5, best_epoch: 2, dev_accuracy: 60.0, test_accuracy: 55.5 },
        ];
        let tsv = k_sweep_tsv(&rows);
        assert_eq!(tsv.lines().count(), 3);
        assert_eq!(tsv.lines().nth(2).unwrap(), "5\t2\t60.00\t55.50");
    }

    proptest! {
        #[test]
        fn buckets_partition_edges(heads in prop::collection::vec(prop::collection::vec(0usize..30, 1..25), 1..6)) {
            let h = length_histogram(heads.iter().map(Vec::as_slice)).unwrap();
            let edges: usize = heads.iter().map(Vec::len).sum();
            prop_assert_eq!(h.counts.iter().sum::<usize>(), edges);
            prop_assert_eq!(h.total, edges);
            prop_assert!((h.percent.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
    }
}
