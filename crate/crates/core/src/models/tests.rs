use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::logsumexp;
use crate::charts::brute::enumerate_table;

fn config(variant: Variant, m: usize) -> ModelConfig {
    ModelConfig {
        variant,
        num_labels: m,
        vocab_size: 6,
        d_x: 3,
        d_h: 2,
        d_l: 2,
        d_r: 2,
        k: 3,
        init_scale: 0.5,
        ..ModelConfig::default()
    }
}

fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

fn all_paths(n: usize, m: usize) -> Vec<Vec<usize>> {
    (0..m.pow(n as u32))
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let y = code % m;
                    code /= m;
                    y
                })
                .collect()
        })
        .collect()
}

fn crf1_path(e: &Tensor, t: &Tensor, y: &[usize]) -> f64 {
    let m = e.cols();
    y.iter()
        .enumerate()
        .map(|(i, &c)| e.get(i, c) + t.get(if i == 0 { m } else { y[i - 1] }, c))
        .sum()
}

fn crf2_path(e: &Tensor, w: &Tensor, y: &[usize]) -> f64 {
    let m = e.cols();
    let prev = |i: usize, back: usize| if i < back { m } else { y[i - back] };
    y.iter()
        .enumerate()
        .map(|(i, &c)| e.get(i, c) + w.get(prev(i, 2) * (m + 1) + prev(i, 1), c))
        .sum()
}

fn best_path(paths: &[Vec<usize>], score: impl Fn(&[usize]) -> f64) -> (Vec<usize>, f64) {
    let mut best = (paths[0].clone(), score(&paths[0]));
    for p in paths {
        let s = score(p);
        if s > best.1 {
            best = (p.clone(), s);
        }
    }
    best
}

#[test]
fn zero_model_nll_values() {
    let mut c = config(Variant::Nldm, 2);
    c.init_scale = 0.0;
    let store = init_params(&c, 0).unwrap();
    let ll = log_likelihood(&store, &c, &[3], &[1]).unwrap();
    assert!((ll + 2f64.ln()).abs() < 1e-12);
    let ll = log_likelihood(&store, &c, &[3, 4, 5], &[1, 0, 1]).unwrap();
    assert!((ll + 8f64.ln()).abs() < 1e-12);
}

#[test]
fn nll_is_non_negative_and_labels_checked() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for variant in [Variant::Nldm, Variant::Softmax, Variant::Crf1, Variant::Crf2] {
        let c = config(variant, 3);
        let store = init_params(&c, 5).unwrap();
        for _ in 0..5 {
            let n = rng.gen_range(1..6);
            let x: Vec<usize> = (0..n).map(|_| rng.gen_range(0..6)).collect();
            let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            assert!(log_likelihood(&store, &c, &x, &y).unwrap() <= 1e-12, "{variant}");
        }
        assert!(log_likelihood(&store, &c, &[1, 2], &[0, 3]).is_err());
        assert!(log_likelihood(&store, &c, &[1, 2], &[0]).is_err());
    }
}

#[test]
fn nldm_predict_matches_enumeration() {
    for scorer in [ScorerKind::Additive, ScorerKind::Trilinear] {
        let c = ModelConfig {
            scorer,
            init_scale: 1.0,
            ..config(Variant::Nldm, 3)
        };
        let store = init_params(&c, 2).unwrap();
        for x in [vec![1], vec![2, 3], vec![5, 0, 4], vec![1, 1, 2, 3]] {
            let table = nldm_table(&store, &c, &x).unwrap();
            let want = enumerate_table(&table).unwrap().best;
            let got = nldm_decode(&store, &c, &x).unwrap();
            // edge scores ignore the head's position, so forests can tie
            assert_eq!(got.labels, want.labels);
            assert!((got.score - want.score).abs() < 1e-10);
            got.forest.validate().unwrap();
        }
    }
}

#[test]
fn root_only_predicts_independently() {
    let c = ModelConfig {
        topology: Topology::RootOnly,
        init_scale: 1.0,
        ..config(Variant::Nldm, 3)
    };
    let store = init_params(&c, 8).unwrap();
    let x = [1, 4, 2, 5];
    let table = nldm_table(&store, &c, &x).unwrap();
    let want: Vec<usize> = (1..=4)
        .map(|j| (0..3).fold(0, |b, y| if table.score_by_label(0, j, 3, y) > table.score_by_label(0, j, 3, b) { y } else { b }))
        .collect();
    assert_eq!(nldm_predict(&store, &c, &x).unwrap(), want);
}

#[test]
fn crf1_hand_example() {
    let e = Tensor::matrix(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    let t = Tensor::zeros(&[3, 2]);
    let want = (1f64.exp() + 1f64.exp() + 2f64.exp() + 1.0).ln();
    assert!((crf1_forward(&e, &t).unwrap() - want).abs() < 1e-12);
    let e1 = Tensor::matrix(1, 3, vec![0.2, -1.0, 3.0]).unwrap();
    let lse = logsumexp(e1.data());
    assert!((crf1_forward(&e1, &Tensor::zeros(&[4, 3])).unwrap() - lse).abs() < 1e-12);
    assert!((crf2_forward(&e1, &Tensor::zeros(&[16, 3])).unwrap() - lse).abs() < 1e-12);
}

#[test]
fn chains_match_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..40 {
        let n = 1 + trial % 5;
        let m = 1 + trial % 3;
        let e = random_tensor(n, m, &mut rng);
        let t = random_tensor(m + 1, m, &mut rng);
        let w = random_tensor((m + 1) * (m + 1), m, &mut rng);
        let paths = all_paths(n, m);
        let s1: Vec<f64> = paths.iter().map(|y| crf1_path(&e, &t, y)).collect();
        assert!((crf1_forward(&e, &t).unwrap() - logsumexp(&s1)).abs() < 1e-10);
        let (path, score) = crf1_viterbi(&e, &t).unwrap();
        let want = best_path(&paths, |y| crf1_path(&e, &t, y));
        assert_eq!(path, want.0);
        assert!((score - want.1).abs() < 1e-10);
        if n <= 4 {
            let s2: Vec<f64> = paths.iter().map(|y| crf2_path(&e, &w, y)).collect();
            assert!((crf2_forward(&e, &w).unwrap() - logsumexp(&s2)).abs() < 1e-10);
            let (path, score) = crf2_viterbi(&e, &w).unwrap();
            let want = best_path(&paths, |y| crf2_path(&e, &w, y));
            assert_eq!(path, want.0);
            assert!((score - want.1).abs() < 1e-10);
        }
    }
}

#[test]
fn crf2_with_history_free_slices_is_crf1() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (n, m) = (5, 3);
    let e = random_tensor(n, m, &mut rng);
    let t = random_tensor(m + 1, m, &mut rng);
    let w = Tensor::matrix(
        (m + 1) * (m + 1),
        m,
        (0..(m + 1) * (m + 1)).flat_map(|r| t.row(r % (m + 1)).to_vec()).collect(),
    )
    .unwrap();
    assert!((crf1_forward(&e, &t).unwrap() - crf2_forward(&e, &w).unwrap()).abs() < 1e-10);
    assert_eq!(crf1_viterbi(&e, &t).unwrap().0, crf2_viterbi(&e, &w).unwrap().0);
    let zero1 = crf1_forward(&e, &Tensor::zeros(&[m + 1, m])).unwrap();
    let zero2 = crf2_forward(&e, &Tensor::zeros(&[(m + 1) * (m + 1), m])).unwrap();
    assert!((zero1 - zero2).abs() < 1e-10);
}

#[test]
fn softmax_uniform_and_shift_invariant() {
    let mut c = config(Variant::Softmax, 4);
    c.init_scale = 0.0;
    let store = init_params(&c, 0).unwrap();
    let ll = log_likelihood(&store, &c, &[1, 2, 3], &[0, 3, 2]).unwrap();
    assert!((ll + 3.0 * 4f64.ln()).abs() < 1e-12);

    let c = config(Variant::Softmax, 3);
    let store = init_params(&c, 3).unwrap();
    let x = [1, 2, 5];
    let mut g = Graph::new();
    let e = emission_matrix(&mut g, &store, &x).unwrap();
    let mut shifted = g.value(e).clone();
    for t in 0..3 {
        shifted.row_mut(t).iter_mut().for_each(|v| *v += 10.0 * t as f64);
    }
    let argmax: Vec<usize> = (0..3)
        .map(|t| (0..3).fold(0, |b, y| if shifted.get(t, y) > shifted.get(t, b) { y } else { b }))
        .collect();
    assert_eq!(softmax_predict(&store, &x).unwrap(), argmax);
}

#[test]
fn reductions_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let c = ModelConfig {
        init_scale: 1.0,
        ..config(Variant::Nldm, 3)
    };
    for seed in 0..5 {
        let store = init_params(&c, seed).unwrap();
        let n = rng.gen_range(1..7);
        let x: Vec<usize> = (0..n).map(|_| rng.gen_range(0..6)).collect();
        let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        assert!(equivalence_check(Reduction::RootOnlySoftmax, &store, &c, &x, &y).unwrap() <= 1e-6);
        assert!(equivalence_check(Reduction::ChainOnlyCrf1, &store, &c, &x, &y).unwrap() <= 1e-6);
    }
    let store = init_params(&c, 0).unwrap();
    let full = log_likelihood(&store, &c, &[1, 2, 3], &[0, 1, 2]).unwrap();
    let soft = log_likelihood(&store, &ModelConfig { variant: Variant::Softmax, ..c.clone() }, &[1, 2, 3], &[0, 1, 2]).unwrap();
    assert!((full - soft).abs() > 1e-3);
}

fn fd_check(c: &ModelConfig, seed: u64) {
    let store = init_params(c, seed).unwrap();
    let batch: [(&[usize], &[usize]); 2] = [(&[1, 4, 2], &[0, 2, 1]), (&[5, 3], &[1, 1])];
    let loss = |s: &ParamStore, out: Option<&mut ParamStore>| {
        let mut g = Graph::new();
        let l = batch_loss(&mut g, s, c, &batch).unwrap();
        let v = g.value(l).item();
        if let Some(out) = out {
            g.backward(l, out).unwrap();
        }
        v
    };
    let mut analytic = store.clone();
    loss(&store, Some(&mut analytic));
    let step = 1e-5;
    for name in store.names() {
        for (i, a) in analytic.grad(name).unwrap().iter().enumerate() {
            let mut p = store.clone();
            p.get_mut(name).unwrap().data_mut()[i] += step;
            let up = loss(&p, None);
            p.get_mut(name).unwrap().data_mut()[i] -= 2.0 * step;
            let down = loss(&p, None);
            let num = (up - down) / (2.0 * step);
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-3);
            assert!(rel < 1e-4, "{:?} {name}[{i}]: {a} vs {num}", c.variant);
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    for variant in [Variant::Nldm, Variant::Softmax, Variant::Crf1, Variant::Crf2] {
        fd_check(&ModelConfig { omega: 0.01, ..config(variant, 3) }, 1);
    }
    fd_check(
        &ModelConfig {
            scorer: ScorerKind::Trilinear,
            k: 1,
            ..config(Variant::Nldm, 3)
        },
        2,
    );
}

#[test]
fn config_validation() {
    assert!(ModelConfig { k: 0, ..ModelConfig::default() }.validate().is_err());
    assert!(ModelConfig { omega: -1.0, ..ModelConfig::default() }.validate().is_err());
    assert!(ModelConfig {
        scorer: ScorerKind::Trilinear,
        d_r: 0,
        ..ModelConfig::default()
    }
    .validate()
    .is_err());
    let c = config(Variant::Crf2, 3);
    let json = serde_json::to_string(&c).unwrap();
    assert_eq!(serde_json::from_str::<ModelConfig>(&json).unwrap(), c);
    assert!("crf3".parse::<Variant>().is_err());
}

#[test]
fn non_finite_scores_are_errors_not_panics() {
    let mut e = Tensor::zeros(&[2, 2]);
    e.data_mut()[1] = f64::NAN;
    let t1 = Tensor::zeros(&[3, 2]);
    assert!(matches!(crf1_viterbi(&e, &t1), Err(Error::Numeric(_))));
    let t2 = Tensor::zeros(&[9, 2]);
    assert!(matches!(crf2_viterbi(&e, &t2), Err(Error::Numeric(_))));

    let c = config(Variant::Nldm, 2);
    let mut store = init_params(&c, 0).unwrap();
    let name = scoring::names::TRANS_RIGHT;
    let mut right = store.get(name).unwrap().clone();
    right.data_mut()[0] = f64::NAN;
    store.set(name, right).unwrap();
    assert!(matches!(nldm_decode(&store, &c, &[2, 3]), Err(Error::Numeric(_))));
}
