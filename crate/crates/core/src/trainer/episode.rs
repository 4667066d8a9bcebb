//! Running the decision process over one document.

use std::collections::HashMap;

use corefrl_nn::{Graph, Tensor, Var};
use rand_chacha::ChaCha8Rng;

use crate::corpus::EmbeddingTable;
use crate::document::{Document, Span};
use crate::env::{Action, CorefEnv, EnvState, EpisodeRecord, PairFeatures, RewardScorer, SpeakerMatch, StepRecord};
use crate::error::Result;
use crate::model::CorefModel;
use crate::span::{enumerate_spans, prune};
use crate::trainer::config::RewardCredit;
use crate::trainer::losses::Transition;
use crate::trainer::policy::{select_action, ActionMode, ProjectedInputs};

/// `[T × d]` token matrix of `doc`, or `None` for an empty document.
pub fn token_matrix(doc: &Document, embeddings: &EmbeddingTable) -> Result<Option<Tensor>> {
    let n = doc.num_tokens();
    if n == 0 {
        return Ok(None);
    }
    let data = embeddings.document_matrix(doc)?;
    Ok(Some(Tensor::matrix(n, embeddings.dim(), data)?))
}

/// Candidate spans with representations and mention logits in one graph.
pub struct Candidates {
    pub spans: Vec<Span>,
    pub reprs: Vec<Var>,
    pub logits: Vec<Var>,
}

impl Candidates {
    pub fn build(
        g: &mut Graph,
        model: &CorefModel,
        doc: &Document,
        tokens: &Tensor,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Self> {
        let spans = enumerate_spans(doc, model.config.max_span_width);
        let reprs = model.spans.represent(g, tokens, &spans)?;
        let logits = reprs
            .iter()
            .map(|&m| model.scorer.mention_logit(g, m, rng.as_deref_mut()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Candidates { spans, reprs, logits })
    }

    pub fn logit_values(&self, g: &Graph) -> Vec<f64> {
        self.logits.iter().map(|&l| g.scalar(l)).collect()
    }

    /// Indices of the spans kept by pruning, in document order.
    pub fn prune(&self, g: &Graph, ratio: f64, num_tokens: usize) -> Vec<usize> {
        prune(&self.spans, &self.logit_values(g), ratio, num_tokens)
    }
}

/// Evaluation-mode pair scores over a fixed set of pruned mentions, computed in a
/// private graph so nothing here is ever differentiated.
pub struct RewardOracle<'p> {
    g: Graph<'p>,
    scorer: &'p RewardScorer,
    reprs: Vec<Var>,
    logits: Vec<Var>,
    sentinel: Var,
    sentinel_logit: Var,
    speakers: Vec<usize>,
    genre: usize,
    scores: HashMap<(usize, usize), f64>,
}

impl<'p> RewardOracle<'p> {
    /// `reprs[k]` is the vector of mention `k + 1`; `speakers[k]` its speaker.
    pub fn new(model: &'p CorefModel, reprs: Vec<Tensor>, speakers: Vec<usize>, genre: usize) -> Result<Self> {
        let scorer = &model.scorer;
        let mut g = Graph::new(&model.store);
        let reprs: Vec<Var> = reprs.into_iter().map(|t| g.constant(t)).collect();
        let logits = reprs
            .iter()
            .map(|&m| scorer.mention_logit(&mut g, m, None))
            .collect::<Result<Vec<_>>>()?;
        let sentinel = scorer.sentinel(&mut g);
        let sentinel_logit = scorer.mention_logit(&mut g, sentinel, None)?;
        Ok(RewardOracle {
            g,
            scorer,
            reprs,
            logits,
            sentinel,
            sentinel_logit,
            speakers,
            genre: genre.min(scorer.genre.rows - 1),
            scores: HashMap::new(),
        })
    }

    pub fn pair_features(&self, i: usize, j: usize) -> PairFeatures {
        let speaker = if j == 0 {
            SpeakerMatch::NotApplicable
        } else if self.speakers[i - 1] == self.speakers[j - 1] {
            SpeakerMatch::Same
        } else {
            SpeakerMatch::Different
        };
        PairFeatures { distance: i - j, speaker, genre: self.genre }
    }

    /// Undecayed score `s(i, j)`.
    pub fn score(&mut self, i: usize, j: usize) -> Result<f64> {
        if let Some(&s) = self.scores.get(&(i, j)) {
            return Ok(s);
        }
        let (m_j, l_j) = if j == 0 { (self.sentinel, self.sentinel_logit) } else { (self.reprs[j - 1], self.logits[j - 1]) };
        let pf = self.pair_features(i, j);
        let g = &mut self.g;
        let phi = self.scorer.pair_features(g, pf)?;
        let s = self.scorer.score_with_logits(g, self.reprs[i - 1], self.logits[i - 1], m_j, l_j, phi, None)?;
        let s = g.scalar(s);
        self.scores.insert((i, j), s);
        Ok(s)
    }

    /// Decayed reward `r(i, j)`.
    pub fn reward(&mut self, i: usize, j: usize) -> Result<f64> {
        let s = self.score(i, j)?;
        Ok(self.scorer.decay(i - j) * s)
    }
}

/// Pruned mentions of a document, ready for an episode.
pub struct Mentions {
    pub spans: Vec<Span>,
    pub reprs: Vec<Var>,
}

impl Mentions {
    pub fn select(candidates: &Candidates, keep: &[usize]) -> Self {
        Mentions {
            spans: keep.iter().map(|&k| candidates.spans[k]).collect(),
            reprs: keep.iter().map(|&k| candidates.reprs[k]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn oracle<'p>(&self, g: &Graph, model: &'p CorefModel, doc: &Document) -> Result<RewardOracle<'p>> {
        let values = self.reprs.iter().map(|&m| g.value(m).clone()).collect();
        let speakers = self.spans.iter().map(|s| doc.speakers[s.start]).collect();
        RewardOracle::new(model, values, speakers, doc.genre)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RolloutOptions {
    pub credit: RewardCredit,
    pub score_feature: bool,
    /// Also run the critic and return differentiable transitions.
    pub with_critic: bool,
}

pub struct Rollout {
    pub transitions: Vec<Transition>,
    pub record: EpisodeRecord,
    pub links: Vec<(usize, usize)>,
}

/// Plays one episode. With `rng = Some` actions are sampled, otherwise greedy.
pub fn rollout(
    g: &mut Graph,
    model: &CorefModel,
    mentions: &Mentions,
    oracle: &mut RewardOracle,
    mut rng: Option<&mut ChaCha8Rng>,
    opts: RolloutOptions,
) -> Result<Rollout> {
    let env = CorefEnv::new(mentions.len(), model.config.max_antecedents);
    let mut state: EnvState = env.initial_state();
    let mut record = EpisodeRecord::default();
    let mut transitions = Vec::new();
    if env.is_terminal(&state) {
        record.terminal = true;
        return Ok(Rollout { transitions, record, links: Vec::new() });
    }

    let sentinel = g.constant(model.scorer.sentinel_value(&model.store));
    let mut rows = Vec::with_capacity(mentions.len() + 1);
    rows.push(sentinel);
    rows.extend_from_slice(&mentions.reprs);
    let matrix = g.stack(&rows)?;
    let actor_in = ProjectedInputs::new(g, &model.actor.lstm, matrix)?;
    let critic_in = if opts.with_critic { Some(ProjectedInputs::new(g, &model.critic.lstm, matrix)?) } else { None };

    let mut feature_cache: HashMap<PairFeatures, Vec<f64>> = HashMap::new();
    let mut actor_state = model.actor.lstm.zero_state(g);
    let mut critic_state = model.critic.lstm.zero_state(g);
    while !env.is_terminal(&state) {
        let (i, j) = (state.i, state.j);
        if j == 0 {
            actor_state = model.actor.lstm.zero_state(g);
            critic_state = model.critic.lstm.zero_state(g);
        }
        let pf = oracle.pair_features(i, j);
        let mut extra = feature_cache
            .entry(pf)
            .or_insert_with(|| model.scorer.pair_feature_values(&model.store, pf))
            .clone();
        if opts.score_feature {
            extra.push(oracle.score(i, j)?);
        }
        let extra = g.constant(Tensor::vector(extra));

        actor_state = actor_in.step(g, &model.actor.lstm, i, j, extra, &actor_state)?;
        let logits = model.actor.logits(g, actor_state.h)?;
        let mode = match rng.as_deref_mut() {
            Some(r) => ActionMode::Sample(r),
            None => ActionMode::Greedy,
        };
        let sel = select_action(g, logits, env.legal_actions(&state), mode)?;

        let value = match &critic_in {
            Some(inputs) => {
                critic_state = inputs.step(g, &model.critic.lstm, i, j, extra, &critic_state)?;
                Some(model.critic.value(g, critic_state.h)?)
            }
            None => None,
        };

        let (next, r) = env.step(&state, sel.action, |i, j| oracle.reward(i, j))?;
        let credited = match opts.credit {
            RewardCredit::EveryStep => r,
            RewardCredit::Link if sel.action == Action::LinkAndAdvance => r,
            RewardCredit::Link => 0.0,
        };
        record.steps.push(StepRecord { i, j, action: sel.action, reward: r, next_i: next.i, next_j: next.j });
        if let Some(value) = value {
            if let Some(prev) = transitions.last_mut() {
                let prev: &mut Transition = prev;
                prev.next_value = Some(value);
            }
            transitions.push(Transition {
                i,
                j,
                action: sel.action,
                log_prob: sel.log_prob,
                log_probs: sel.log_probs,
                reward: credited,
                value,
                next_value: None,
            });
        }
        state = next;
    }
    record.terminal = true;
    Ok(Rollout { transitions, record, links: state.links })
}
