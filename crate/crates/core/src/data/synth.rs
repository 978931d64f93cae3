//! Infinite-order hidden Markov generator.
//!
//! Labels follow an LSTM over the label history; each word is drawn from
//! logits `E_out · tanh(A h_t + B e_{y_t})`, where `h_t` is an LSTM state
//! over the word history and `e_{y_t}` embeds the current label.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Corpus, TaggedSentence};
use crate::autodiff::sigmoid;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_labels: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    /// Hidden and embedding size of both generator LSTMs.
    pub hidden: usize,
    pub num_samples: usize,
    pub seed: u64,
    /// Generator weights are uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_labels: 5,
            vocab_size: 1000,
            max_len: 10,
            hidden: 50,
            num_samples: 1000,
            seed: 0,
            init_scale: 0.5,
        }
    }
}

/// Generated sentences split 80/10/10.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

impl SyntheticCorpus {
    pub fn all(&self) -> impl Iterator<Item = &TaggedSentence> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }
}

pub fn word_name(id: usize) -> String {
    format!("w{id}")
}

pub fn label_name(id: usize) -> String {
    format!("L{id}")
}

struct Mat {
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    fn random(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        Mat {
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-scale..=scale)).collect(),
        }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out += v · self`.
    fn acc_vec_mat(&self, v: &[f64], out: &mut [f64]) {
        for (r, &x) in v.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += x * w;
            }
        }
    }
}

struct Lstm {
    /// `[2H, 4H]`, gates input, forget, candidate, output.
    w: Mat,
    b: Vec<f64>,
}

impl Lstm {
    fn step(&self, x: &[f64], h: &mut [f64], c: &mut [f64]) {
        let hd = h.len();
        let mut z = self.b.clone();
        for (r, &v) in x.iter().chain(h.iter()).enumerate() {
            for (o, w) in z.iter_mut().zip(self.w.row(r)) {
                *o += v * w;
            }
        }
        for k in 0..hd {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[hd + k]);
            let g = z[2 * hd + k].tanh();
            let o = sigmoid(z[3 * hd + k]);
            c[k] = f * c[k] + i * g;
            h[k] = o * c[k].tanh();
        }
    }
}

struct Generator {
    label_emb: Mat,
    label_lstm: Lstm,
    label_out: Mat,
    label_bias: Vec<f64>,
    word_emb: Mat,
    word_lstm: Lstm,
    emit_label: Mat,
    a: Mat,
    b: Mat,
    word_out: Mat,
    word_bias: Vec<f64>,
}

fn softmax_sample(logits: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    WeightedIndex::new(&weights)
        .expect("softmax weights are positive")
        .sample(rng)
}

impl Generator {
    fn new(c: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let (m, v, h, s) = (c.num_labels, c.vocab_size, c.hidden, c.init_scale);
        let vec = |n: usize, rng: &mut ChaCha8Rng| (0..n).map(|_| rng.gen_range(-s..=s)).collect::<Vec<_>>();
        Generator {
            label_emb: Mat::random(m + 1, h, s, rng),
            label_lstm: Lstm {
                w: Mat::random(2 * h, 4 * h, s, rng),
                b: vec(4 * h, rng),
            },
            label_out: Mat::random(h, m, s, rng),
            label_bias: vec(m, rng),
            word_emb: Mat::random(v + 1, h, s, rng),
            word_lstm: Lstm {
                w: Mat::random(2 * h, 4 * h, s, rng),
                b: vec(4 * h, rng),
            },
            emit_label: Mat::random(m, h, s, rng),
            a: Mat::random(h, h, s, rng),
            b: Mat::random(h, h, s, rng),
            word_out: Mat::random(h, v, s, rng),
            word_bias: vec(v, rng),
        }
    }

    fn sample(&self, c: &SynthConfig, rng: &mut ChaCha8Rng) -> TaggedSentence {
        let (m, v, hd) = (c.num_labels, c.vocab_size, c.hidden);
        let len = rng.gen_range(1..=c.max_len);
        let (mut hy, mut cy) = (vec![0.0; hd], vec![0.0; hd]);
        let (mut hx, mut cx) = (vec![0.0; hd], vec![0.0; hd]);
        // both histories open with a start symbol
        self.label_lstm.step(self.label_emb.row(m), &mut hy, &mut cy);
        self.word_lstm.step(self.word_emb.row(v), &mut hx, &mut cx);
        let mut s = TaggedSentence::default();
        for _ in 0..len {
            let mut logits = self.label_bias.clone();
            self.label_out.acc_vec_mat(&hy, &mut logits);
            let y = softmax_sample(&logits, rng);

            let mut pre = vec![0.0; hd];
            self.a.acc_vec_mat(&hx, &mut pre);
            self.b.acc_vec_mat(self.emit_label.row(y), &mut pre);
            let g: Vec<f64> = pre.iter().map(|p| p.tanh()).collect();
            let mut logits = self.word_bias.clone();
            self.word_out.acc_vec_mat(&g, &mut logits);
            let x = softmax_sample(&logits, rng);

            s.words.push(word_name(x));
            s.labels.push(label_name(y));
            self.label_lstm.step(self.label_emb.row(y), &mut hy, &mut cy);
            self.word_lstm.step(self.word_emb.row(x), &mut hx, &mut cx);
        }
        s
    }
}

/// Draws `num_samples` sentences; identical configs give identical output.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticCorpus> {
    let c = config;
    if c.num_labels == 0 || c.vocab_size == 0 || c.max_len == 0 || c.hidden == 0 || c.num_samples == 0 {
        return Err(Error::InvalidArgument(format!("synthetic config has a zero size: {c:?}")));
    }
    if !(c.init_scale > 0.0 && c.init_scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad init scale {}", c.init_scale)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let generator = Generator::new(c, &mut rng);
    let mut all: Vec<TaggedSentence> = (0..c.num_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
            rng.set_stream(i + 1);
            generator.sample(c, &mut rng)
        })
        .collect();
    let n = all.len();
    let n_train = (n as f64 * 0.8).round() as usize;
    let n_dev = (n as f64 * 0.1).round() as usize;
    let test = all.split_off(n_train + n_dev);
    let dev = all.split_off(n_train);
    Ok(SyntheticCorpus { train: all, dev, test })
}
