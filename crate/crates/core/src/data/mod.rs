//! Corpora: CoNLL-U and TSV readers, vocabularies, and the synthetic
//! generator.

mod conllu;
mod synth;
mod tsv;

pub use conllu::{load_conllu, parse_conllu};
pub use synth::{generate_synthetic, SynthConfig, SyntheticCorpus};
pub use tsv::{load_tsv, parse_tsv, save_tsv, write_tsv};

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::Vocab;
use crate::error::{Error, Result};

/// A sentence as read from disk.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaggedSentence {
    pub words: Vec<String>,
    pub labels: Vec<String>,
    /// Gold head per token, 0 for the root.
    pub heads: Option<Vec<usize>>,
}

impl TaggedSentence {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub type Corpus = Vec<TaggedSentence>;

/// A sentence mapped to ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<usize>,
    pub labels: Vec<usize>,
    pub heads: Option<Vec<usize>>,
}

impl Sentence {
    pub fn new(tokens: Vec<usize>, labels: Vec<usize>, heads: Option<Vec<usize>>) -> Result<Self> {
        if tokens.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} tokens but {} labels",
                tokens.len(),
                labels.len()
            )));
        }
        if let Some(h) = &heads {
            if h.len() != tokens.len() || h.iter().any(|&x| x > tokens.len()) {
                return Err(Error::Data(format!("heads {h:?} invalid for {} tokens", tokens.len())));
            }
        }
        Ok(Sentence { tokens, labels, heads })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Output label alphabet, ids `0..len`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    ids: HashMap<String, usize>,
    names: Vec<String>,
}

impl LabelSet {
    pub fn insert(&mut self, label: &str) -> usize {
        if let Some(&id) = self.ids.get(label) {
            return id;
        }
        self.ids.insert(label.to_string(), self.names.len());
        self.names.push(label.to_string());
        self.names.len() - 1
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.ids.get(label).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

impl From<Vec<String>> for LabelSet {
    fn from(names: Vec<String>) -> Self {
        let mut set = LabelSet::default();
        for n in names {
            set.insert(&n);
        }
        set
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(set: LabelSet) -> Self {
        set.names
    }
}

/// Words seen at least `min_count` times, in sorted order after the
/// reserved entries; every label, sorted.
pub fn build_vocab(corpus: &[TaggedSentence], min_count: usize) -> Result<(Vocab, LabelSet)> {
    if corpus.iter().all(TaggedSentence::is_empty) {
        return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut labels: BTreeMap<&str, ()> = BTreeMap::new();
    for s in corpus {
        for w in &s.words {
            *counts.entry(w).or_default() += 1;
        }
        for l in &s.labels {
            labels.insert(l, ());
        }
    }
    let mut vocab = Vocab::new();
    for (w, c) in counts {
        if c >= min_count.max(1) {
            vocab.insert(w);
        }
    }
    let labels = LabelSet::from(labels.into_keys().map(str::to_string).collect::<Vec<_>>());
    Ok((vocab, labels))
}

/// Maps words through `vocab` (unknown words to [`Vocab::UNK`]) and labels
/// through `labels`; unknown labels are an error.
pub fn index_corpus(corpus: &[TaggedSentence], vocab: &Vocab, labels: &LabelSet) -> Result<Vec<Sentence>> {
    corpus
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let tokens = s.words.iter().map(|w| vocab.id(w)).collect();
            let ys = s
                .labels
                .iter()
                .map(|l| {
                    labels
                        .get(l)
                        .ok_or_else(|| Error::Data(format!("sentence {}: unknown label {l:?}", i + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            Sentence::new(tokens, ys, s.heads.clone())
        })
        .collect()
}

/// Fraction of tokens carrying each label, by label name.
pub fn label_distribution(corpus: &[TaggedSentence]) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut total = 0usize;
    for l in corpus.iter().flat_map(|s| &s.labels) {
        *counts.entry(l.clone()).or_default() += 1;
        total += 1;
    }
    counts
        .into_iter()
        .map(|(l, c)| (l, c as f64 / total.max(1) as f64))
        .collect()
}

/// Reads a corpus, picking the format from the extension: `.conllu` or
/// `.conll` for CoNLL-U, anything else as TSV.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("conllu") | Some("conll") => load_conllu(path),
        _ => load_tsv(path),
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
