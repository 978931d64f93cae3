//! Exhaustive enumeration, for checking the charts on small inputs.

use super::decode::Parse;
use super::forest::DepForest;
use crate::autodiff::logsumexp;
use crate::error::{Error, Result};
use crate::scoring::EdgeScoreTable;

/// Largest sentence the enumerators accept.
pub const MAX_ENUM_TOKENS: usize = 7;

fn guard(n: usize) -> Result<()> {
    if n == 0 || n > MAX_ENUM_TOKENS {
        return Err(Error::InvalidArgument(format!(
            "enumeration needs 1..={MAX_ENUM_TOKENS} tokens, got {n}"
        )));
    }
    Ok(())
}

/// Every head map without self-loops, in lexicographic order.
fn head_maps(n: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = (n + 1).pow(n as u32);
    (0..total).filter_map(move |mut code| {
        let mut heads = vec![0; n];
        for h in heads.iter_mut() {
            *h = code % (n + 1);
            code /= n + 1;
        }
        heads.reverse();
        heads
            .iter()
            .enumerate()
            .all(|(j, &h)| h != j + 1)
            .then_some(heads)
    })
}

/// All projective forests over `n` tokens.
pub fn enumerate_projective_forests(n: usize) -> Result<Vec<DepForest>> {
    guard(n)?;
    Ok(head_maps(n)
        .map(DepForest::unchecked)
        .filter(|f| f.is_tree() && f.is_projective())
        .collect())
}

/// Number of rooted trees over `n` tokens, projective or not.
pub fn count_all_forests(n: usize) -> Result<usize> {
    guard(n)?;
    Ok(head_maps(n)
        .filter(|h| DepForest::unchecked(h.clone()).is_tree())
        .count())
}

/// Everything the charts compute, obtained by enumeration.
#[derive(Clone, Debug)]
pub struct Enumerated {
    pub log_z: f64,
    /// Aligned with `table.edges()`.
    pub marginals: Vec<f64>,
    pub best: Parse,
}

/// Sums and maximizes over every projective forest and every label choice
/// the table admits.
pub fn enumerate_table(table: &EdgeScoreTable) -> Result<Enumerated> {
    let n = table.n();
    let forests = enumerate_projective_forests(n)?;
    let mut structures: Vec<(f64, usize, Vec<usize>)> = Vec::new();
    let radix: Vec<usize> = (1..=n).map(|j| table.num_slots(j)).collect();
    let combos: usize = radix.iter().product();
    for (fi, forest) in forests.iter().enumerate() {
        for mut code in 0..combos {
            // slots[0] is the root's only slot
            let mut slots = vec![0; n + 1];
            for j in (1..=n).rev() {
                slots[j] = code % radix[j - 1];
                code /= radix[j - 1];
            }
            let score: f64 = forest
                .edges()
                .map(|(h, d)| table.score(h, d, slots[h], slots[d]))
                .sum();
            if score > f64::NEG_INFINITY {
                structures.push((score, fi, slots));
            }
        }
    }
    if structures.is_empty() {
        return Err(Error::Numeric("table admits no forest".into()));
    }
    let scores: Vec<f64> = structures.iter().map(|s| s.0).collect();
    let log_z = logsumexp(&scores);
    let mut marginals = vec![0.0; table.edges().len()];
    let mut best = 0;
    for (si, (score, fi, slots)) in structures.iter().enumerate() {
        let p = (score - log_z).exp();
        for (h, d) in forests[*fi].edges() {
            let e = table
                .edge_id(h, d, slots[h], slots[d])
                .expect("finite structure uses admissible edges");
            marginals[e] += p;
        }
        if *score > structures[best].0 {
            best = si;
        }
    }
    let (score, fi, slots) = &structures[best];
    Ok(Enumerated {
        log_z,
        marginals,
        best: Parse {
            forest: forests[*fi].clone(),
            labels: (1..=n).map(|j| table.label(j, slots[j])).collect(),
            score: *score,
        },
    })
}
