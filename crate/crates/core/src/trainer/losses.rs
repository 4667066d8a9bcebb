//! Actor-critic, joint and scorer losses.

use corefrl_nn::{Graph, Var};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::document::{Cluster, Span};
use crate::env::Action;
use crate::error::{CorefError, Result};

/// One step of an episode, bound to the graph it was computed in.
#[derive(Clone, Debug)]
pub struct Transition {
    pub i: usize,
    pub j: usize,
    pub action: Action,
    /// `log π(a | s)`, shape `[1]`.
    pub log_prob: Var,
    /// Log-probabilities of all legal actions (for the entropy bonus).
    pub log_probs: Var,
    /// Reward credited to this step; a plain number, never differentiated.
    pub reward: f64,
    /// `V(s)`, shape `[1]`.
    pub value: Var,
    /// `V(s')`; `None` for the terminal transition, whose successor is worth 0.
    pub next_value: Option<Var>,
}

impl Transition {
    pub fn terminal(&self) -> bool {
        self.next_value.is_none()
    }
}

/// `A = r + γ V(s') − V(s)`; `L_actor = −log π(a|s) · A` with `A` held constant,
/// `L_critic = A²` differentiated through both values.
pub fn actor_critic_losses(g: &mut Graph, t: &Transition, gamma: f64) -> Result<(Var, Var)> {
    let r = g.scalar_constant(t.reward);
    let target = match t.next_value {
        Some(v) => {
            let discounted = g.scale(v, gamma);
            g.add(r, discounted)?
        }
        None => r,
    };
    let advantage = g.sub(target, t.value)?;
    let fixed = g.detach(advantage);
    let weighted = g.mul(t.log_prob, fixed)?;
    let actor = g.neg(weighted);
    let critic = g.square(advantage);
    Ok((actor, critic))
}

/// Entropy `−Σ p log p` of a normalized log-distribution.
pub fn entropy(g: &mut Graph, log_probs: Var) -> Result<Var> {
    let p = g.exp(log_probs);
    let plogp = g.mul(p, log_probs)?;
    let s = g.sum(plogp);
    Ok(g.neg(s))
}

/// Adds the detection loss to both objectives; `None` (ablation) leaves them as is.
pub fn joint_losses(g: &mut Graph, actor: Var, critic: Var, detection: Option<Var>) -> Result<(Var, Var)> {
    match detection {
        Some(d) => Ok((g.add(actor, d)?, g.add(critic, d)?)),
        None => Ok((actor, critic)),
    }
}

/// A mention pair for the scorer loss; indices are 1-based over pruned spans.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairSample {
    pub i: usize,
    pub j: usize,
    pub label: bool,
}

/// Every pair inside the antecedent window, labelled by gold coreference; all
/// positives are kept and at most `⌈ratio · max(#pos, 1)⌉` negatives are drawn
/// without replacement. Output is ordered by `(i, j)`.
pub fn sample_scorer_pairs(
    spans: &[Span],
    gold: &[Cluster],
    max_antecedents: usize,
    neg_pos_ratio: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<PairSample> {
    let cluster_of: std::collections::HashMap<Span, usize> =
        gold.iter().enumerate().flat_map(|(c, cl)| cl.iter().map(move |&s| (s, c))).collect();
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for i in 1..=spans.len() {
        for j in i.saturating_sub(max_antecedents).max(1)..i {
            let same = match (cluster_of.get(&spans[i - 1]), cluster_of.get(&spans[j - 1])) {
                (Some(a), Some(b)) => a == b,
                _ => false,
            };
            let pair = PairSample { i, j, label: same };
            if same {
                positives.push(pair);
            } else {
                negatives.push(pair);
            }
        }
    }
    let cap = (neg_pos_ratio * positives.len().max(1) as f64).ceil() as usize;
    if negatives.len() > cap {
        negatives.shuffle(rng);
        negatives.truncate(cap);
    }
    let mut pairs = positives;
    pairs.extend(negatives);
    pairs.sort_by_key(|p| (p.i, p.j));
    pairs
}

/// Mean binary cross-entropy of `sigmoid(score)` against the pair labels.
pub fn scorer_auxiliary_loss(g: &mut Graph, scores: &[Var], labels: &[bool]) -> Result<Var> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(CorefError::Invalid("scorer loss needs one label per score".into()));
    }
    let z = g.concat(scores)?;
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    Ok(g.bce_with_logits(z, &y)?)
}
