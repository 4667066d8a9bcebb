//! Actor and critic networks.
//!
//! Both read the state `[m_i; m_j; x]` where `x` holds the pair-feature
//! embeddings (and optionally the pair score), through their own LSTM. The input
//! matrix is split into blocks so the `m` projections can be computed once per
//! document for all mentions.

use corefrl_nn::{Graph, Linear, LstmCell, LstmState, ParamStore, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::{Action, ActionMask};
use crate::error::{CorefError, Result};

#[derive(Clone, Debug)]
pub struct PolicyNet {
    pub lstm: LstmCell,
    pub head: Linear,
}

#[derive(Clone, Debug)]
pub struct ValueNet {
    pub lstm: LstmCell,
    pub head: Linear,
}

fn body<R: Rng + ?Sized>(
    store: &mut ParamStore,
    name: &str,
    repr_dim: usize,
    extra_dim: usize,
    hidden: usize,
    rng: &mut R,
) -> Result<LstmCell> {
    Ok(LstmCell::new(store, &format!("{name}.lstm"), &[repr_dim, repr_dim, extra_dim], hidden, rng)?)
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        repr_dim: usize,
        extra_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let lstm = body(store, "actor", repr_dim, extra_dim, hidden, rng)?;
        Ok(PolicyNet { lstm, head: Linear::new(store, "actor.head", hidden, Action::ALL.len(), rng)? })
    }

    /// Unmasked action logits from the hidden state.
    pub fn logits(&self, g: &mut Graph, h: Var) -> Result<Var> {
        Ok(self.head.forward(g, h)?)
    }
}

impl ValueNet {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        repr_dim: usize,
        extra_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let lstm = body(store, "critic", repr_dim, extra_dim, hidden, rng)?;
        Ok(ValueNet { lstm, head: Linear::new(store, "critic.head", hidden, 1, rng)? })
    }

    pub fn value(&self, g: &mut Graph, h: Var) -> Result<Var> {
        Ok(self.head.forward(g, h)?)
    }
}

/// Per-document input projections of one LSTM body, so a step only has to project
/// the small pair-feature block.
pub struct ProjectedInputs {
    current: Var,
    antecedent: Var,
}

impl ProjectedInputs {
    /// `mentions` is `[(n + 1) × repr_dim]` with the sentinel in row 0.
    pub fn new(g: &mut Graph, lstm: &LstmCell, mentions: Var) -> Result<Self> {
        Ok(ProjectedInputs {
            current: lstm.project_rows(g, 0, mentions)?,
            antecedent: lstm.project_rows(g, 1, mentions)?,
        })
    }

    pub fn step(&self, g: &mut Graph, lstm: &LstmCell, i: usize, j: usize, extra: Var, state: &LstmState) -> Result<LstmState> {
        let a = g.row(self.current, i)?;
        let b = g.row(self.antecedent, j)?;
        let c = lstm.project(g, 2, extra)?;
        Ok(lstm.forward_projected(g, &[a, b, c], state)?)
    }
}

pub enum ActionMode<'a> {
    Sample(&'a mut ChaCha8Rng),
    Greedy,
}

/// Chosen action with its log-probability and the masked log-distribution.
pub struct Selection {
    pub action: Action,
    pub log_prob: Var,
    /// Log-probabilities of the legal actions, in canonical order.
    pub log_probs: Var,
}

/// Masks `logits` to the legal actions, normalizes, and picks an action: a seeded
/// categorical draw, or the argmax with ties going to the earlier action in
/// `LINK < ADVANCE < NO_ANTECEDENT` order.
pub fn select_action(g: &mut Graph, logits: Var, mask: ActionMask, mode: ActionMode<'_>) -> Result<Selection> {
    let legal = mask.actions();
    if legal.is_empty() {
        return Err(CorefError::Invalid("no legal action to select".into()));
    }
    let indices: Vec<usize> = legal.iter().map(|a| a.index()).collect();
    let kept = g.gather(logits, &indices)?;
    let log_probs = g.log_softmax(kept, 0)?;
    let lp = g.data(log_probs).to_vec();
    let k = match mode {
        ActionMode::Greedy => {
            let mut best = 0;
            for (k, &v) in lp.iter().enumerate() {
                if v > lp[best] {
                    best = k;
                }
            }
            best
        }
        ActionMode::Sample(rng) => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = lp.len() - 1;
            for (k, &v) in lp.iter().enumerate() {
                acc += v.exp();
                if u < acc {
                    pick = k;
                    break;
                }
            }
            pick
        }
    };
    let log_prob = g.slice(log_probs, k, 1)?;
    Ok(Selection { action: legal[k], log_prob, log_probs })
}
