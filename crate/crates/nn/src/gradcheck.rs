//! Central finite-difference checks of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::layers::{bilinear, Embedding, FeedForward, FfBlock, LstmCell, LstmState};
use crate::param::{Init, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Finite-difference step used by the standard cases.
pub const STEP: f64 = 1e-4;

/// Relative error `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Worst relative error between the backward pass of `loss` and central differences
/// with step `h`, over every scalar of every parameter in `store`.
pub fn check_gradients<F>(store: &mut ParamStore, h: f64, loss: F) -> Result<f64>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let coords: Vec<(ParamId, usize)> =
        store.iter().flat_map(|(id, p)| (0..p.value.len()).map(move |k| (id, k))).collect();
    check_coordinates(store, h, &coords, |store| {
        let mut g = Graph::new(store);
        let l = loss(&mut g)?;
        let value = g.scalar(l);
        Ok((value, g.backward(l)?))
    })
}

/// Like [`check_gradients`] for an arbitrary evaluation that returns the loss and its
/// gradients, restricted to the listed `(parameter, index)` coordinates.
pub fn check_coordinates<F>(store: &mut ParamStore, h: f64, coords: &[(ParamId, usize)], eval: F) -> Result<f64>
where
    F: Fn(&ParamStore) -> Result<(f64, crate::param::Gradients)>,
{
    let (_, grads) = eval(store)?;
    let mut worst = 0.0f64;
    for &(id, k) in coords {
        let orig = store.value(id).data()[k];
        store.get_mut(id).value.data_mut()[k] = orig + h;
        let up = eval(store)?.0;
        store.get_mut(id).value.data_mut()[k] = orig - h;
        let down = eval(store)?.0;
        store.get_mut(id).value.data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.get(id).map_or(0.0, |g| g[k]);
        worst = worst.max(relative_error(analytic, numeric));
    }
    Ok(worst)
}

/// A randomized gradient check: builds an instance from the generator and returns
/// its worst relative error.
#[derive(Clone, Copy)]
pub struct Case {
    pub name: &'static str,
    pub run: fn(&mut ChaCha8Rng) -> Result<f64>,
}

/// One case per differentiable operation and layer.
pub fn op_cases() -> Vec<Case> {
    vec![
        Case { name: "matmul", run: matmul_gradients },
        Case { name: "matmul_nt/vecmat", run: matmul_nt_and_vecmat_gradients },
        Case { name: "elementwise", run: elementwise_gradients },
        Case { name: "softmax", run: softmax_and_gather_gradients },
        Case { name: "concat/slice/row/stack", run: structural_op_gradients },
        Case { name: "bce", run: bce_with_logits_gradients },
        Case { name: "ff_block", run: ff_block_gradients },
        Case { name: "ff_layer", run: single_ff_layer_gradients },
        Case { name: "lstm", run: lstm_cell_gradients },
        Case { name: "embedding/bilinear", run: embedding_and_bilinear_gradients },
        Case { name: "sigmoid∘matmul", run: composite_sigmoid_matmul },
    ]
}

fn random_param(store: &mut ParamStore, name: &str, shape: &[usize], rng: &mut ChaCha8Rng) -> Result<ParamId> {
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
    store.insert(name, Tensor::new(shape.to_vec(), data)?, true)
}

/// Uniform(−1, 1) values everywhere, so no ReLU input sits exactly on the kink.
pub fn randomize_all(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for p in store.iter_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }
}

fn matmul_gradients(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut store = ParamStore::new();
    let a = random_param(&mut store, "a", &[3, 4], rng)?;
    let b = random_param(&mut store, "b", &[4, 2], rng)?;
    check_gradients(&mut store, STEP, |g| {
        let (a, b) = (g.param(a), g.param(b));
        let m = g.matmul(a, b)?;
        Ok(g.sum(m))
    })
}

fn matmul_nt_and_vecmat_gradients(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut store = ParamStore::new();
    let a = random_param(&mut store, "a", &[3, 4], rng)?;
    let b = random_param(&mut store, "b", &[2, 4], rng)?;
    let x = random_param(&mut store, "x", &[3], rng)?;
    check_gradients(&mut store, STEP, |g| {
        let (a, b, x) = (g.param(a), g.param(b), g.param(x));
        let m = g.matmul_nt(a, b)?;
        let s = g.square(m);
        let t = g.vecmat(x, a)?;
        let l1 = g.sum(s);
        let l2 = g.sum(t);
        g.add(l1, l2)
    })
}

fn elementwise_gradients(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut store = ParamStore::new();
    let x = random_param(&mut store, "x", &[5], rng)?;
    let y = random_param(&mut store, "y", &[5], rng)?;
    check_gradients(&mut store, STEP, |g| {
        let (x, y) = (g.param(x), g.param(y));
        let s = g.sigmoid(x);
        let t = g.tanh(y);
        let p = g.mul(s, t)?;
        let e = g.exp(t);
        let q = g.sub(p, e)?;
        let sq = g.square(q);
        let sc = g.scale(sq, 0.7);
        let l = g.log(e)?;
        let parts = g.add_n(&[sc, l, x])?;
        Ok(g.mean(parts))
    })
}

fn softmax_and_gather_gradients(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut store = ParamStore::new();
    let x = random_param(&mut store, "x", &[4], rng)?;
    let m = random_param(&mut store, "m", &[2, 3], rng)?;
    let w = random_param(&mut store, "w", &[4], rng)?;
    check_gradients(&mut store, STEP, |g| {
        let (x, m, w) = (g.param(x), g.param(m), g.param(w));
        let p = g.softmax(x, 0)?;
        let pw = g.dot(p, w)?;
        let ls = g.log_softmax(x, 0)?;
        let picked = g.gather(ls, &[0, 2])?;
        let s1 = g.sum(picked);
        let rows = g.softmax(m, 1)?;
        let cols = g.log_softmax(m, 0)?;
        let r2 = g.square(rows);
        let s2 = g.sum(r2);
        let s3 = g.mean(cols);
        g.add_n(&[pw, s1, s2, s3])
    })
}

fn structural_op_gradients(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut store = ParamStore::new();
    let a = random_param(&mut store, "a", &[3], rng)?;
    let b = random_param(&mut store, "b", &[2], rng)?;
    let t = random_param(&mut store, "t", &[4, 3], rng)?;
    check_gradients(&mut store, STEP, |g| {
        let (a, b, t) = (g.param(a), g.param(b), g.param(t));
        let c = g.concat(&[a, b])?;
        let s = g.slice(c, 1, 3)?;
        let r = g.row(t, 2)?;
        let st = g.stack(&[s, r, a])?;
        let sq = g.tanh(st);
        let d = g.dot(s, r)?;
        let sum = g.sum(sq);
        g.add(sum, d)
    })
}

fn bce_with_logits_gradients(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut store = ParamStore::new();
    let z = random_param(&mut store, "z", &[6], rng)?;
    let targets: Vec<f64> = (0..6).map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 }).collect();
    check_gradients(&mut store, STEP, |g| {
        let z = g.param(z);
        g.bce_with_logits(z, &targets)
    })
}

fn ff_block_gradients(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut store = ParamStore::new();
    let block = FfBlock::new(&mut store, "f", 4, 5, 3, 0.5, rng)?;
    // zero biases would put every output exactly on the ReLU kink whenever
    // dropout silences the whole hidden layer
    randomize_all(&mut store, rng);
    let v = random_param(&mut store, "v", &[3], rng)?;
    let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mask_seed = rng.gen::<u64>();
    check_gradients(&mut store, STEP, |g| {
        let x = g.constant(Tensor::vector(x.clone()));
        // same dropout mask on every evaluation
        let mut drop_rng = ChaCha8Rng::seed_from_u64(mask_seed);
        let h = block.forward(g, x, Some(&mut drop_rng))?;
        let v = g.param(v);
        g.dot(h, v)
    })
}

fn single_ff_layer_gradients(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut store = ParamStore::new();
    let ff = FeedForward::new(&mut store, "ff", 3, 4, rng)?;
    store.get_mut(ff.linear.bias).value.data_mut().iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
    let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
    check_gradients(&mut store, STEP, |g| {
        let x = g.constant(Tensor::vector(x.clone()));
        let y = ff.forward(g, x)?;
        let y = g.square(y);
        Ok(g.sum(y))
    })
}

fn lstm_cell_gradients(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut store = ParamStore::new();
    let cell = LstmCell::new(&mut store, "lstm", &[3, 2], 4, rng)?;
    randomize_all(&mut store, rng);
    let h0 = random_param(&mut store, "h0", &[4], rng)?;
    let c0 = random_param(&mut store, "c0", &[4], rng)?;
    let xs: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    check_gradients(&mut store, STEP, |g| {
        let mut state = LstmState { h: g.param(h0), c: g.param(c0) };
        // two steps so the recurrent path is exercised
        for x in &xs {
            let a = g.constant(Tensor::vector(x[..3].to_vec()));
            let b = g.constant(Tensor::vector(x[3..].to_vec()));
            state = cell.forward(g, &[a, b], &state)?;
        }
        let s = g.sum(state.h);
        let c = g.mean(state.c);
        g.add(s, c)
    })
}

fn embedding_and_bilinear_gradients(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut store = ParamStore::new();
    let emb = Embedding::new(&mut store, "e", 5, 3, rng)?;
    let u = store.add("u", &[3, 3], Init::Uniform(2.0), rng)?;
    let (i, j) = (rng.gen_range(0..5), rng.gen_range(0..5));
    check_gradients(&mut store, STEP, |g| {
        let a = emb.lookup(g, i)?;
        let b = emb.lookup(g, j)?;
        let u = g.param(u);
        bilinear(g, a, u, b)
    })
}

fn composite_sigmoid_matmul(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut store = ParamStore::new();
    let w = random_param(&mut store, "w", &[2, 3], rng)?;
    let x = random_param(&mut store, "x", &[3, 2], rng)?;
    check_gradients(&mut store, STEP, |g| {
        let (w, x) = (g.param(w), g.param(x));
        let m = g.matmul(w, x)?;
        let s = g.sigmoid(m);
        Ok(g.sum(s))
    })
}
