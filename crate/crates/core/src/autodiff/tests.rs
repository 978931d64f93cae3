use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Result;

/// Max relative error between backward and central differences over every
/// coordinate of every parameter.
fn fd_max_rel_err<F>(store: &ParamStore, step: f64, f: F) -> f64
where
    F: Fn(&mut Graph, &ParamStore) -> Result<NodeId>,
{
    let mut analytic = store.clone();
    analytic.zero_grads();
    let mut g = Graph::new();
    let loss = f(&mut g, &analytic).unwrap();
    g.backward(loss, &mut analytic).unwrap();

    let eval = |s: &ParamStore| {
        let mut g = Graph::new();
        let id = f(&mut g, s).unwrap();
        g.value(id).item()
    };
    let mut worst: f64 = 0.0;
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        let grad = analytic.grad(&name).unwrap();
        for (i, a) in grad.iter().enumerate() {
            let mut s = store.clone();
            s.get_mut(&name).unwrap().data_mut()[i] += step;
            let up = eval(&s);
            s.get_mut(&name).unwrap().data_mut()[i] -= 2.0 * step;
            let down = eval(&s);
            let n = (up - down) / (2.0 * step);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    worst
}

fn random_store(shapes: &[(&str, &[usize])], seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (name, shape) in shapes {
        store.insert_uniform(name, shape, 1.0, &mut rng).unwrap();
    }
    store
}

#[test]
fn add_scalars() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::scalar(2.0));
    let b = g.constant(Tensor::scalar(3.0));
    let c = g.apply(Primitive::Add, &[a, b]).unwrap();
    assert_eq!(g.value(c).data(), &[5.0]);
}

#[test]
fn logsumexp_equal_inputs() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::vector(vec![0.0, 0.0]));
    let c = g.apply(Primitive::LogSumExp { axis: 0 }, &[a]).unwrap();
    assert!((g.value(c).item() - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn matmul_small() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
    let b = g.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
    let c = g.apply(Primitive::MatMul, &[a, b]).unwrap();
    assert_eq!(g.value(c).shape(), &[1, 1]);
    assert_eq!(g.value(c).data(), &[11.0]);
}

#[test]
fn shape_mismatch_names_op_and_shapes() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[2, 3]));
    let err = g.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("matmul"), "{err}");
    assert!(err.contains("[2, 3]"), "{err}");
    let other = g_const(&mut g, &[3, 2]);
    let err = g.mul(a, other).unwrap_err().to_string();
    assert!(err.contains("elementwise-mul"), "{err}");
}

fn g_const(g: &mut Graph, shape: &[usize]) -> NodeId {
    g.constant(Tensor::zeros(shape))
}

#[test]
fn product_rule() {
    let mut store = ParamStore::new();
    store.insert("x", Tensor::scalar(2.0)).unwrap();
    store.insert("y", Tensor::scalar(3.0)).unwrap();
    let mut g = Graph::new();
    let x = g.param(&store, "x").unwrap();
    let y = g.param(&store, "y").unwrap();
    let loss = g.mul(x, y).unwrap();
    g.backward(loss, &mut store).unwrap();
    assert_eq!(store.grad("x").unwrap(), vec![3.0]);
    assert_eq!(store.grad("y").unwrap(), vec![2.0]);
}

#[test]
fn tanh_slope_at_zero() {
    let mut store = ParamStore::new();
    store.insert("x", Tensor::scalar(0.0)).unwrap();
    let mut g = Graph::new();
    let x = g.param(&store, "x").unwrap();
    let loss = g.tanh(x);
    g.backward(loss, &mut store).unwrap();
    assert_eq!(store.grad("x").unwrap(), vec![1.0]);
}

#[test]
fn logsumexp_gradient_matches_finite_differences() {
    let mut store = ParamStore::new();
    store.insert("v", Tensor::vector(vec![0.0, 0.0])).unwrap();
    let mut g = Graph::new();
    let v = g.param(&store, "v").unwrap();
    let loss = g.logsumexp(v, 0).unwrap();
    g.backward(loss, &mut store).unwrap();
    let analytic = store.grad("v").unwrap();

    // central differences, step 1e-5
    let h = 1e-5;
    let f = |a: f64, b: f64| logsumexp(&[a, b]);
    let numeric = [
        (f(h, 0.0) - f(-h, 0.0)) / (2.0 * h),
        (f(0.0, h) - f(0.0, -h)) / (2.0 * h),
    ];
    for (a, n) in analytic.iter().zip(numeric) {
        assert!((a - 0.5).abs() < 1e-12);
        assert!((n - 0.5).abs() < 1e-9);
    }
}

#[test]
fn backward_twice_fails() {
    let mut store = ParamStore::new();
    store.insert("x", Tensor::scalar(1.0)).unwrap();
    let mut g = Graph::new();
    let x = g.param(&store, "x").unwrap();
    let y = g.exp(x);
    g.backward(y, &mut store).unwrap();
    assert!(g.backward(y, &mut store).is_err());
}

#[test]
fn backward_needs_scalar() {
    let mut store = ParamStore::new();
    store.insert("x", Tensor::vector(vec![1.0, 2.0])).unwrap();
    let mut g = Graph::new();
    let x = g.param(&store, "x").unwrap();
    assert!(g.backward(x, &mut store).is_err());
}

#[test]
fn logsumexp_overflow_safe_in_graph() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::vector(vec![1e3, -1e3, 999.0]));
    let y = g.logsumexp(a, 0).unwrap();
    assert!(g.value(y).item().is_finite());
    let b = g.constant(Tensor::vector(vec![-1e3, -1e3]));
    let y = g.logsumexp(b, 0).unwrap();
    assert!(g.value(y).item().is_finite());
}

#[test]
fn every_primitive_passes_gradient_check() {
    for seed in 0..5 {
        let store = random_store(
            &[("a", &[2, 3]), ("b", &[3, 2]), ("c", &[2, 3]), ("r", &[1, 3])],
            seed,
        );
        let err = fd_max_rel_err(&store, 1e-4, |g, s| {
            let a = g.param(s, "a")?;
            let b = g.param(s, "b")?;
            let c = g.param(s, "c")?;
            let r = g.param(s, "r")?;
            let ab = g.matmul(a, b)?; // [2,2]
            let bt = g.transpose(b)?; // [2,3]
            let sum = g.add(bt, c)?;
            let sum = g.add(sum, r)?; // row broadcast
            let prod = g.mul(sum, a)?;
            let cat = g.concat(&[prod, ab], 1)?; // [2,5]
            let cat0 = g.concat(&[cat, cat], 0)?; // [4,5]
            let sl = g.slice(cat0, 1, 1, 4)?;
            let sl = g.slice(sl, 0, 1, 3)?; // [2,3]
            let t = g.tanh(sl);
            let sg = g.sigmoid(cat);
            let e = g.exp(t);
            let l = g.log(e);
            let lse1 = g.logsumexp(l, 1)?;
            let lse0 = g.logsumexp(sg, 0)?;
            let lk = g.lookup(cat, &[1, 0, 1])?;
            let ga = g.gather(lk, &[0, 4, 7, 7, 14])?;
            let rs = g.reshape(ga, &[5, 1])?;
            let sc = g.scale(rs, -0.7);
            let lse_v = g.logsumexp(lse1, 0)?;
            let parts = [g.sum(lse0), g.sum(sc), lse_v];
            let total = g.concat(&parts, 0)?;
            Ok(g.sum(total))
        });
        assert!(err < 1e-6, "seed {seed}: rel err {err}");
    }
}

#[test]
fn scalar_fn_propagates_given_gradient() {
    let mut store = ParamStore::new();
    store.insert("w", Tensor::vector(vec![1.0, 2.0])).unwrap();
    let mut g = Graph::new();
    let w = g.param(&store, "w").unwrap();
    let f = g
        .scalar_fn(&[w], 5.0, vec![Tensor::vector(vec![0.25, -1.0])])
        .unwrap();
    let loss = g.scale(f, 2.0);
    g.backward(loss, &mut store).unwrap();
    assert_eq!(store.grad("w").unwrap(), vec![0.5, -2.0]);
}

fn lstm_store(input: usize, hidden: usize, seed: u64) -> ParamStore {
    random_store(
        &[
            ("x", &[1, input]),
            ("h", &[1, hidden]),
            ("c", &[1, hidden]),
            ("w", &[input + hidden, 4 * hidden]),
            ("b", &[1, 4 * hidden]),
        ],
        seed,
    )
}

fn run_cell(g: &mut Graph, s: &ParamStore) -> Result<(NodeId, NodeId)> {
    let x = g.param(s, "x")?;
    let h = g.param(s, "h")?;
    let c = g.param(s, "c")?;
    let w = LstmWeights {
        weight: g.param(s, "w")?,
        bias: g.param(s, "b")?,
    };
    lstm_cell(g, x, h, c, w)
}

#[test]
fn lstm_zero_weights_give_zero_state() {
    let mut store = ParamStore::new();
    store.insert("x", Tensor::zeros(&[1, 3])).unwrap();
    store.insert("h", Tensor::zeros(&[1, 2])).unwrap();
    store.insert("c", Tensor::zeros(&[1, 2])).unwrap();
    store.insert("w", Tensor::zeros(&[5, 8])).unwrap();
    store.insert("b", Tensor::zeros(&[1, 8])).unwrap();
    let mut g = Graph::new();
    let (h, c) = run_cell(&mut g, &store).unwrap();
    assert_eq!(g.value(h).data(), &[0.0, 0.0]);
    assert_eq!(g.value(c).data(), &[0.0, 0.0]);
}

#[test]
fn lstm_is_deterministic() {
    let store = lstm_store(3, 4, 11);
    let run = || {
        let mut g = Graph::new();
        let (h, _) = run_cell(&mut g, &store).unwrap();
        g.value(h).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn lstm_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let store = lstm_store(3, 4, seed);
        let err = fd_max_rel_err(&store, 1e-4, |g, s| {
            let (h, _) = run_cell(g, s)?;
            Ok(g.sum(h))
        });
        assert!(err < 1e-4, "seed {seed}: rel err {err}");
    }
}

#[test]
fn lstm_rejects_bad_dimensions() {
    let mut store = lstm_store(3, 4, 0);
    store.set("w", Tensor::zeros(&[6, 16])).unwrap_err();
    let mut bad = ParamStore::new();
    for (name, t) in store.iter() {
        if name == "w" {
            bad.insert(name, Tensor::zeros(&[8, 16])).unwrap();
        } else {
            bad.insert(name, t.clone()).unwrap();
        }
    }
    let mut g = Graph::new();
    let err = run_cell(&mut g, &bad).unwrap_err().to_string();
    assert!(err.contains("lstm_cell"), "{err}");
}
