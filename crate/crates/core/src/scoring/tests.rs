use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{Graph, ParamStore, Tensor};

fn store_for(kind: ScorerKind, m: usize, hidden2: usize, dl: usize, dr: usize, seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    match kind {
        ScorerKind::Additive => {
            s.insert_uniform(names::LABEL_EMB, &[m, dl], 1.0, &mut rng).unwrap();
            s.insert_uniform(names::EMIT_W, &[hidden2, dl], 1.0, &mut rng).unwrap();
            s.insert_uniform(names::TRANS_RIGHT, &[m + 1, m], 1.0, &mut rng).unwrap();
            s.insert_uniform(names::TRANS_LEFT, &[m + 1, m], 1.0, &mut rng).unwrap();
        }
        ScorerKind::Trilinear => {
            s.insert_uniform(names::LABEL_EMB, &[m + 1, dl], 1.0, &mut rng).unwrap();
            s.insert_uniform(names::TRI_U1, &[dr, hidden2], 1.0, &mut rng).unwrap();
            s.insert_uniform(names::TRI_U2, &[dr, dl], 1.0, &mut rng).unwrap();
            s.insert_uniform(names::TRI_U3, &[dr, dl], 1.0, &mut rng).unwrap();
        }
    }
    s
}

fn random_h(n: usize, hidden2: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let mut s = ParamStore::new();
    s.insert_uniform("h", &[n + 1, hidden2], 1.0, &mut rng).unwrap();
    s.get("h").unwrap().clone()
}

#[test]
fn emission_hand_example() {
    let h = [1.0, 2.0];
    let w = Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap();
    let t = [5.0];
    assert_eq!(emission_score(&h, &t, &w).unwrap(), 55.0);

    // same value through explicit matrix products
    let mut g = Graph::new();
    let hn = g.constant(Tensor::matrix(1, 2, h.to_vec()).unwrap());
    let wn = g.constant(w.clone());
    let tn = g.constant(Tensor::matrix(1, 1, t.to_vec()).unwrap());
    let hw = g.matmul(hn, wn).unwrap();
    let out = g.matmul(hw, tn).unwrap();
    assert_eq!(g.value(out).item(), 55.0);
}

#[test]
fn emission_zero_weight_and_bilinearity() {
    let w0 = Tensor::zeros(&[3, 2]);
    assert_eq!(emission_score(&[1.0, -2.0, 0.5], &[0.3, 0.7], &w0).unwrap(), 0.0);
    let w = Tensor::matrix(3, 2, vec![0.1, -0.4, 0.9, 0.2, -0.3, 0.5]).unwrap();
    let h = [1.0, -2.0, 0.5];
    let base = emission_score(&h, &[0.3, 0.7], &w).unwrap();
    let scaled = emission_score(&h, &[0.9, 2.1], &w).unwrap();
    assert!((scaled - 3.0 * base).abs() < 1e-12);
    assert!(emission_score(&h, &[0.3], &w).is_err());
}

#[test]
fn additive_matches_definition() {
    let m = 3;
    let mut store = store_for(ScorerKind::Additive, m, 4, 2, 1, 1);
    let h = random_h(3, 4, 1);
    let p = AdditiveScorerParams::from_store(&store).unwrap();
    let emit = emission_score(h.row(2), p.label_emb.row(1), p.w_e).unwrap();
    let right = additive_edge_score(1, 2, 0, 1, &h, &p).unwrap();
    assert!((right - (emit + p.right.get(0, 1))).abs() < 1e-12);
    let left = additive_edge_score(3, 2, 0, 1, &h, &p).unwrap();
    assert!((left - (emit + p.left.get(0, 1))).abs() < 1e-12);
    let root = additive_edge_score(0, 2, m, 1, &h, &p).unwrap();
    assert!((root - (emit + p.right.get(m, 1))).abs() < 1e-12);
    assert!(additive_edge_score(2, 2, 0, 1, &h, &p).is_err());

    store.set(names::TRANS_RIGHT, Tensor::zeros(&[m + 1, m])).unwrap();
    store.set(names::TRANS_LEFT, Tensor::zeros(&[m + 1, m])).unwrap();
    let p = AdditiveScorerParams::from_store(&store).unwrap();
    assert_eq!(additive_edge_score(1, 2, 0, 1, &h, &p).unwrap(), emit);
}

#[test]
fn trilinear_scalar_case() {
    let h = Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap();
    let labels = Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap();
    let u1 = Tensor::matrix(1, 1, vec![2.0]).unwrap();
    let u2 = Tensor::matrix(1, 1, vec![3.0]).unwrap();
    let u3 = Tensor::matrix(1, 1, vec![4.0]).unwrap();
    let p = TrilinearScorerParams {
        u1: &u1,
        u2: &u2,
        u3: &u3,
        label_emb: &labels,
    };
    assert_eq!(trilinear_edge_score(0, 1, 1, 0, &h, &p).unwrap(), 24.0);
    let zero = Tensor::zeros(&[1, 1]);
    let p0 = TrilinearScorerParams { u2: &zero, ..p };
    assert_eq!(trilinear_edge_score(0, 1, 1, 0, &h, &p0).unwrap(), 0.0);
}

#[test]
fn trilinear_equals_dense_order3_contraction() {
    for seed in 0..20u64 {
        let (hidden2, dl, dr, m) = (1 + seed as usize % 4, 1 + (seed as usize / 4) % 4, 1 + seed as usize % 3, 2);
        let store = store_for(ScorerKind::Trilinear, m, hidden2, dl, dr, seed);
        let h = random_h(3, hidden2, seed);
        let p = TrilinearScorerParams::from_store(&store).unwrap();
        // U[p][q][r] = Σ_k U1[k][p] U2[k][q] U3[k][r]
        let mut dense = vec![0.0; hidden2 * dl * dl];
        for k in 0..dr {
            for a in 0..hidden2 {
                for b in 0..dl {
                    for c in 0..dl {
                        dense[(a * dl + b) * dl + c] += p.u1.get(k, a) * p.u2.get(k, b) * p.u3.get(k, c);
                    }
                }
            }
        }
        for (i, j, yi, yj) in [(0, 1, m, 0), (1, 3, 1, 0), (3, 2, 0, 1)] {
            let (hj, ti, tj) = (h.row(j), p.label_emb.row(yi), p.label_emb.row(yj));
            let mut expected = 0.0;
            for a in 0..hidden2 {
                for b in 0..dl {
                    for c in 0..dl {
                        expected += dense[(a * dl + b) * dl + c] * hj[a] * ti[b] * tj[c];
                    }
                }
            }
            let got = trilinear_edge_score(i, j, yi, yj, &h, &p).unwrap();
            assert!((got - expected).abs() < 1e-10, "seed {seed}: {got} vs {expected}");
        }
    }
}

fn table_via_graph(
    store: &ParamStore,
    h: &Tensor,
    gold: Option<&[usize]>,
    config: &ScoringConfig,
) -> EdgeScoreTable {
    let mut g = Graph::new();
    let hn = g.constant(h.clone());
    let (table, scores) = build_score_table(&mut g, store, hn, gold, config).unwrap();
    assert_eq!(g.value(scores).len(), table.edges().len());
    table
}

#[test]
fn batched_table_matches_scalar_scorers() {
    for kind in [ScorerKind::Additive, ScorerKind::Trilinear] {
        for seed in 0..5 {
            let (n, m) = (4, 3);
            let store = store_for(kind, m, 4, 3, 2, seed);
            let h = random_h(n, 4, seed);
            let config = ScoringConfig {
                scorer: kind,
                num_labels: m,
                k: 2,
                topology: Topology::Full,
            };
            let reference = |i, j, yi, yj| match kind {
                ScorerKind::Additive => {
                    let p = AdditiveScorerParams::from_store(&store).unwrap();
                    additive_edge_score(i, j, yi, yj, &h, &p).unwrap()
                }
                ScorerKind::Trilinear => {
                    let p = TrilinearScorerParams::from_store(&store).unwrap();
                    trilinear_edge_score(i, j, yi, yj, &h, &p).unwrap()
                }
            };
            let full = table_via_graph(&store, &h, None, &config);
            for i in 0..=n {
                for j in 1..=n {
                    for yi in 0..=m {
                        for yj in 0..m {
                            let got = full.score_by_label(i, j, yi, yj);
                            if full.allowed(i, j) && (yi == m) == (i == 0) {
                                let want = reference(i, j, yi, yj);
                                assert!((got - want).abs() < 1e-12, "{kind:?} ({i},{j},{yi},{yj})");
                            } else {
                                assert_eq!(got, f64::NEG_INFINITY);
                            }
                        }
                    }
                }
            }
            let gold = [2, 0, 1, 1];
            let fixed = table_via_graph(&store, &h, Some(&gold), &config);
            for e in fixed.edges() {
                let yi = if e.head == 0 { m } else { gold[e.head - 1] };
                let want = reference(e.head, e.dep, yi, gold[e.dep - 1]);
                assert!((fixed.score(e.head, e.dep, 0, 0) - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn zero_parameters_give_zero_scores() {
    for kind in [ScorerKind::Additive, ScorerKind::Trilinear] {
        let mut store = store_for(kind, 2, 2, 2, 2, 0);
        let names: Vec<String> = store.names().map(str::to_string).collect();
        for name in names {
            let shape = store.get(&name).unwrap().shape().to_vec();
            store.set(&name, Tensor::zeros(&shape)).unwrap();
        }
        let config = ScoringConfig {
            scorer: kind,
            num_labels: 2,
            k: 3,
            topology: Topology::Full,
        };
        let table = table_via_graph(&store, &random_h(3, 2, 0), None, &config);
        assert!(table.edge_scores().iter().all(|&s| s == 0.0));
    }
}

#[test]
fn table_gradient_matches_finite_differences() {
    for kind in [ScorerKind::Additive, ScorerKind::Trilinear] {
        for seed in 0..3 {
            let mut store = store_for(kind, 2, 3, 2, 2, seed);
            store.insert("h", random_h(3, 3, seed)).unwrap();
            let config = ScoringConfig {
                scorer: kind,
                num_labels: 2,
                k: 2,
                topology: Topology::Full,
            };
            let total = |s: &ParamStore, grads: Option<&mut ParamStore>| {
                let mut g = Graph::new();
                let h = g.param(s, "h").unwrap();
                let (_, scores) = build_score_table(&mut g, s, h, None, &config).unwrap();
                let sq = g.mul(scores, scores).unwrap();
                let loss = g.sum(sq);
                let v = g.value(loss).item();
                if let Some(out) = grads {
                    g.backward(loss, out).unwrap();
                }
                v
            };
            let mut analytic = store.clone();
            total(&store, Some(&mut analytic));
            let step = 1e-4;
            for name in store.names() {
                let grad = analytic.grad(name).unwrap();
                for (i, a) in grad.iter().enumerate() {
                    let mut s = store.clone();
                    s.get_mut(name).unwrap().data_mut()[i] += step;
                    let up = total(&s, None);
                    s.get_mut(name).unwrap().data_mut()[i] -= 2.0 * step;
                    let down = total(&s, None);
                    let num = (up - down) / (2.0 * step);
                    let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-3);
                    assert!(rel < 1e-4, "{kind:?} {name}[{i}]: {a} vs {num}");
                }
            }
        }
    }
}
