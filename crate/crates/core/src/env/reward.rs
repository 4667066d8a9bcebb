//! Distance-decayed biaffine pair score.
//!
//! ```text
//! s(i, j) = v_m·f1(m_i) + v_m·f1(m_j) + f2(m_j ⊕ φ)ᵀ U f2(m_i ⊕ φ) + v_bi·f3(m_i ⊕ φ)
//! r(i, j) = exp(−γ_decay · |i − j|) · s(i, j)
//! ```
//!
//! `φ` embeds the pair features (distance bucket, speaker match, genre). The mention
//! terms use the bare span vectors so `v_m·f1(m)` is also the mention logit used
//! for detection and pruning. For `j = 0`, `m_j` is a learned sentinel vector.

use corefrl_nn::{bilinear, Embedding, FfBlock, Graph, Init, ParamId, ParamStore, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CorefError, Result};

pub const NUM_DISTANCE_BUCKETS: usize = 9;

/// Buckets `[≤1, 2, 3, 4, 5–7, 8–15, 16–31, 32–63, 64+]`.
pub fn distance_bucket(d: usize) -> usize {
    match d {
        0..=1 => 0,
        2..=4 => d - 1,
        5..=7 => 4,
        8..=15 => 5,
        16..=31 => 6,
        32..=63 => 7,
        _ => 8,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpeakerMatch {
    Different = 0,
    Same = 1,
    /// Pairs with the sentinel.
    NotApplicable = 2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PairFeatures {
    /// `|i − j|` in mention indices.
    pub distance: usize,
    pub speaker: SpeakerMatch,
    pub genre: usize,
}

#[derive(Clone, Debug)]
pub struct RewardScorer {
    pub f1: FfBlock,
    pub f2: FfBlock,
    pub f3: FfBlock,
    pub v_m: ParamId,
    pub u_bi: ParamId,
    pub v_bi: ParamId,
    pub sentinel: ParamId,
    pub distance: Embedding,
    pub speaker: Embedding,
    pub genre: Embedding,
    pub gamma_decay: f64,
    pub repr_dim: usize,
}

/// Dimensions of a [`RewardScorer`].
#[derive(Clone, Copy, Debug)]
pub struct ScorerDims {
    pub repr_dim: usize,
    pub feature_dim: usize,
    pub hidden: usize,
    pub out: usize,
    pub num_genres: usize,
}

impl RewardScorer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        dims: ScorerDims,
        dropout: f64,
        gamma_decay: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(gamma_decay > 0.0 && gamma_decay < 1.0) {
            return Err(CorefError::config("gamma_decay must lie in (0, 1)"));
        }
        let pair_in = dims.repr_dim + 3 * dims.feature_dim;
        let ScorerDims { repr_dim, feature_dim, hidden, out, num_genres } = dims;
        Ok(RewardScorer {
            f1: FfBlock::new(store, "scorer.f1", repr_dim, hidden, out, dropout, rng)?,
            f2: FfBlock::new(store, "scorer.f2", pair_in, hidden, out, dropout, rng)?,
            f3: FfBlock::new(store, "scorer.f3", pair_in, hidden, out, dropout, rng)?,
            v_m: store.add("scorer.v_m", &[out], Init::Xavier, rng)?,
            u_bi: store.add("scorer.u_bi", &[out, out], Init::Xavier, rng)?,
            v_bi: store.add("scorer.v_bi", &[out], Init::Xavier, rng)?,
            sentinel: store.add("scorer.sentinel", &[repr_dim], Init::Uniform(0.1), rng)?,
            distance: Embedding::new(store, "scorer.distance", NUM_DISTANCE_BUCKETS, feature_dim, rng)?,
            speaker: Embedding::new(store, "scorer.speaker", 3, feature_dim, rng)?,
            genre: Embedding::new(store, "scorer.genre", num_genres, feature_dim, rng)?,
            gamma_decay,
            repr_dim,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.distance.dim
    }

    pub fn pair_feature_dim(&self) -> usize {
        3 * self.feature_dim()
    }

    pub fn decay(&self, distance: usize) -> f64 {
        (-self.gamma_decay * distance as f64).exp()
    }

    /// `φ = [distance; speaker; genre]` embeddings.
    pub fn pair_features(&self, g: &mut Graph, pf: PairFeatures) -> Result<Var> {
        if pf.genre >= self.genre.rows {
            return Err(CorefError::Invalid(format!("genre id {} out of range", pf.genre)));
        }
        let d = self.distance.lookup(g, distance_bucket(pf.distance))?;
        let s = self.speaker.lookup(g, pf.speaker as usize)?;
        let ge = self.genre.lookup(g, pf.genre)?;
        Ok(g.concat(&[d, s, ge])?)
    }

    /// Plain values of `φ`, read straight from the parameter store.
    pub fn pair_feature_values(&self, store: &ParamStore, pf: PairFeatures) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.pair_feature_dim());
        out.extend_from_slice(store.value(self.distance.table).row(distance_bucket(pf.distance)));
        out.extend_from_slice(store.value(self.speaker.table).row(pf.speaker as usize));
        out.extend_from_slice(store.value(self.genre.table).row(pf.genre.min(self.genre.rows - 1)));
        out
    }

    pub fn sentinel(&self, g: &mut Graph) -> Var {
        g.param(self.sentinel)
    }

    pub fn sentinel_value(&self, store: &ParamStore) -> Tensor {
        store.value(self.sentinel).clone()
    }

    /// Mention logit `v_m · f1(m)`.
    pub fn mention_logit(&self, g: &mut Graph, m: Var, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let h = self.f1.forward(g, m, rng)?;
        let v = g.param(self.v_m);
        Ok(g.dot(v, h)?)
    }

    /// Pair terms `f2(m_j ⊕ φ)ᵀ U f2(m_i ⊕ φ) + v_bi · f3(m_i ⊕ φ)`.
    pub fn pair_terms(
        &self,
        g: &mut Graph,
        m_i: Var,
        m_j: Var,
        phi: Var,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let xi = g.concat(&[m_i, phi])?;
        let xj = g.concat(&[m_j, phi])?;
        let a = self.f2.forward(g, xj, rng.as_deref_mut())?;
        let b = self.f2.forward(g, xi, rng.as_deref_mut())?;
        let u = g.param(self.u_bi);
        let bil = bilinear(g, a, u, b)?;
        let c = self.f3.forward(g, xi, rng.as_deref_mut())?;
        let v = g.param(self.v_bi);
        let lin = g.dot(v, c)?;
        Ok(g.add(bil, lin)?)
    }

    /// Undecayed score `s(i, j)` given precomputed mention logits.
    #[allow(clippy::too_many_arguments)]
    pub fn score_with_logits(
        &self,
        g: &mut Graph,
        m_i: Var,
        logit_i: Var,
        m_j: Var,
        logit_j: Var,
        phi: Var,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let pair = self.pair_terms(g, m_i, m_j, phi, rng)?;
        Ok(g.add_n(&[logit_i, logit_j, pair])?)
    }

    /// Undecayed score `s(i, j)`; `m_j = None` pairs `m_i` with the sentinel.
    pub fn score(
        &self,
        g: &mut Graph,
        m_i: Var,
        m_j: Option<Var>,
        pf: PairFeatures,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let m_j = match m_j {
            Some(m) => m,
            None => self.sentinel(g),
        };
        let phi = self.pair_features(g, pf)?;
        let li = self.mention_logit(g, m_i, rng.as_deref_mut())?;
        let lj = self.mention_logit(g, m_j, rng.as_deref_mut())?;
        self.score_with_logits(g, m_i, li, m_j, lj, phi, rng)
    }

    /// Decayed reward `r(i, j) = exp(−γ_decay · d) · s(i, j)`.
    pub fn reward(
        &self,
        g: &mut Graph,
        m_i: Var,
        m_j: Option<Var>,
        pf: PairFeatures,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let s = self.score(g, m_i, m_j, pf, rng)?;
        Ok(g.scale(s, self.decay(pf.distance)))
    }
}
