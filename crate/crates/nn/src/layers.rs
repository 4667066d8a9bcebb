use rand::Rng;

use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::param::{Init, ParamId, ParamStore};

/// Affine map `Wx + b` with `W: [out × in]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Linear {
            weight: store.add(format!("{name}.weight"), &[out_dim, in_dim], Init::Xavier, rng)?,
            bias: store.add(format!("{name}.bias"), &[out_dim], Init::Zeros, rng)?,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        if g.shape(x) != [self.in_dim] {
            return Err(NnError::shape("linear", &[self.out_dim, self.in_dim], g.shape(x)));
        }
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let wx = g.matvec(w, x)?;
        g.add(wx, b)
    }
}

/// One ReLU layer, `ReLU(Wx + b)`.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub linear: Linear,
}

impl FeedForward {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(FeedForward {
            linear: Linear::new(store, name, in_dim, out_dim, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let z = self.linear.forward(g, x)?;
        Ok(g.relu(z))
    }
}

/// Two stacked ReLU layers with dropout on the hidden activations.
#[derive(Clone, Debug)]
pub struct FfBlock {
    pub first: FeedForward,
    pub second: FeedForward,
    pub dropout: f64,
}

impl FfBlock {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(FfBlock {
            first: FeedForward::new(store, &format!("{name}.0"), in_dim, hidden, rng)?,
            second: FeedForward::new(store, &format!("{name}.1"), hidden, out_dim, rng)?,
            dropout,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.first.linear.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.second.linear.out_dim
    }

    /// `rng = Some(..)` enables train-time dropout.
    pub fn forward<R: Rng + ?Sized>(&self, g: &mut Graph, x: Var, rng: Option<&mut R>) -> Result<Var> {
        let h = self.first.forward(g, x)?;
        let h = g.dropout(h, self.dropout, rng)?;
        self.second.forward(g, h)
    }
}

/// Learned lookup table, one row per category.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        rows: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Embedding {
            table: store.add(name, &[rows, dim], Init::Xavier, rng)?,
            rows,
            dim,
        })
    }

    pub fn lookup(&self, g: &mut Graph, index: usize) -> Result<Var> {
        let t = g.param(self.table);
        g.row(t, index)
    }
}

/// LSTM cell with gate order `[input, forget, cell, output]`.
///
/// The input projection may be split into column blocks (`W_x = [W_1 | W_2 | ...]`)
/// so callers can precompute `W_k x_k` for inputs that repeat across steps.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub input_blocks: Vec<ParamId>,
    pub block_dims: Vec<usize>,
    pub recurrent: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        block_dims: &[usize],
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let in_total: usize = block_dims.iter().sum();
        // Glorot bound of the full [4H × in] matrix, shared by every block.
        let bound = (6.0 / (in_total + 4 * hidden) as f64).sqrt();
        let input_blocks = block_dims
            .iter()
            .enumerate()
            .map(|(k, &d)| store.add(format!("{name}.w_x{k}"), &[4 * hidden, d], Init::Uniform(bound), rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(LstmCell {
            input_blocks,
            block_dims: block_dims.to_vec(),
            recurrent: store.add(format!("{name}.w_h"), &[4 * hidden, hidden], Init::Xavier, rng)?,
            bias: store.add(format!("{name}.bias"), &[4 * hidden], Init::Zeros, rng)?,
            hidden,
        })
    }

    pub fn zero_state(&self, g: &mut Graph) -> LstmState {
        let z = g.constant(crate::Tensor::zeros(&[self.hidden]));
        LstmState { h: z, c: z }
    }

    /// `W_k x_k` for input block `k`.
    pub fn project(&self, g: &mut Graph, block: usize, x: Var) -> Result<Var> {
        let w = g.param(self.input_blocks[block]);
        g.matvec(w, x)
    }

    /// Projects many inputs of block `k` at once: returns `[n × 4H]` whose row `r`
    /// is `W_k xs[r]`.
    pub fn project_rows(&self, g: &mut Graph, block: usize, xs: Var) -> Result<Var> {
        let w = g.param(self.input_blocks[block]);
        g.matmul_nt(xs, w)
    }

    /// Standard step on input blocks `xs` (one per configured block).
    pub fn forward(&self, g: &mut Graph, xs: &[Var], state: &LstmState) -> Result<LstmState> {
        if xs.len() != self.input_blocks.len() {
            return Err(NnError::invalid(
                "lstm_cell",
                format!("expected {} input blocks, got {}", self.input_blocks.len(), xs.len()),
            ));
        }
        let mut projected = Vec::with_capacity(xs.len());
        for (k, (&x, &d)) in xs.iter().zip(&self.block_dims).enumerate() {
            if g.shape(x) != [d] {
                return Err(NnError::shape("lstm_cell", &[d], g.shape(x)));
            }
            projected.push(self.project(g, k, x)?);
        }
        self.forward_projected(g, &projected, state)
    }

    /// Step given already-projected input contributions (each `[4H]`).
    pub fn forward_projected(&self, g: &mut Graph, projected: &[Var], state: &LstmState) -> Result<LstmState> {
        let hsz = self.hidden;
        if g.shape(state.h) != [hsz] || g.shape(state.c) != [hsz] {
            return Err(NnError::shape("lstm_cell", &[hsz], g.shape(state.h)));
        }
        let w_h = g.param(self.recurrent);
        let b = g.param(self.bias);
        let rec = g.matvec(w_h, state.h)?;
        let mut terms = projected.to_vec();
        terms.push(rec);
        terms.push(b);
        let gates = g.add_n(&terms)?;
        let i_pre = g.slice(gates, 0, hsz)?;
        let f_pre = g.slice(gates, hsz, hsz)?;
        let c_pre = g.slice(gates, 2 * hsz, hsz)?;
        let o_pre = g.slice(gates, 3 * hsz, hsz)?;
        let i = g.sigmoid(i_pre);
        let f = g.sigmoid(f_pre);
        let cand = g.tanh(c_pre);
        let o = g.sigmoid(o_pre);
        let keep = g.mul(f, state.c)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok(LstmState { h, c })
    }
}

/// Bilinear form `aᵀ U b`.
pub fn bilinear(g: &mut Graph, a: Var, u: Var, b: Var) -> Result<Var> {
    let ub = g.matvec(u, b)?;
    g.dot(a, ub)
}
