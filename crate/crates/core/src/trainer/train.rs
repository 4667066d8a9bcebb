//! The training loop.

use corefrl_nn::{Adam, AdamConfig, Gradients, Graph, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingTable;
use crate::decode::{evaluate_corpus, mention_recall};
use crate::document::Document;
use crate::error::{CorefError, Result};
use crate::model::{CorefModel, EpochRecord};
use crate::span::{detection_loss, mention_labels};
use crate::trainer::config::TrainConfig;
use crate::trainer::episode::{rollout, token_matrix, Candidates, Mentions, RolloutOptions};
use crate::trainer::losses::{
    actor_critic_losses, entropy, joint_losses, sample_scorer_pairs, scorer_auxiliary_loss, Transition,
};

/// Loss components of one document update (means over the episode's steps).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub actor: f64,
    pub critic: f64,
    pub detection: f64,
    pub scorer: f64,
    pub total: f64,
    pub steps: usize,
}

/// Mean actor and critic losses over an episode, plus the entropy bonus.
pub fn episode_losses(
    g: &mut Graph,
    transitions: &[Transition],
    gamma_rl: f64,
    entropy_weight: f64,
) -> Result<Option<(Var, Var)>> {
    if transitions.is_empty() {
        return Ok(None);
    }
    let mut actors = Vec::with_capacity(transitions.len());
    let mut critics = Vec::with_capacity(transitions.len());
    for t in transitions {
        let (a, c) = actor_critic_losses(g, t, gamma_rl)?;
        let a = if entropy_weight > 0.0 {
            let h = entropy(g, t.log_probs)?;
            let bonus = g.scale(h, entropy_weight);
            g.sub(a, bonus)?
        } else {
            a
        };
        actors.push(a);
        critics.push(c);
    }
    let scale = 1.0 / transitions.len() as f64;
    let a = g.add_n(&actors)?;
    let c = g.add_n(&critics)?;
    Ok(Some((g.scale(a, scale), g.scale(c, scale))))
}

/// Forward and backward pass of one training document. Returns `None` for a
/// document without tokens.
pub fn document_gradients(
    model: &CorefModel,
    doc: &Document,
    tokens: &Tensor,
    rng: &mut ChaCha8Rng,
) -> Result<Option<(Gradients, StepLosses)>> {
    let cfg = &model.config;
    let mut g = Graph::new(&model.store);
    let candidates = Candidates::build(&mut g, model, doc, tokens, Some(rng))?;
    if candidates.spans.is_empty() {
        return Ok(None);
    }
    let detection = if cfg.detection_loss {
        let labels = mention_labels(&candidates.spans, &doc.gold_mentions());
        Some(detection_loss(&mut g, &candidates.logits, &labels)?)
    } else {
        None
    };

    let keep = candidates.prune(&g, cfg.prune_ratio, doc.num_tokens());
    let mentions = Mentions::select(&candidates, &keep);

    let mut oracle = mentions.oracle(&g, model, doc)?;

    // Supervised pair loss for the scorer, in training mode.
    let pairs = sample_scorer_pairs(&mentions.spans, &doc.clusters, cfg.max_antecedents, cfg.neg_pos_ratio, rng);
    let scorer_loss = if pairs.is_empty() {
        None
    } else {
        let mut scores = Vec::with_capacity(pairs.len());
        for p in &pairs {
            let (a, b) = (keep[p.i - 1], keep[p.j - 1]);
            let phi = model.scorer.pair_features(&mut g, oracle.pair_features(p.i, p.j))?;
            let s = model.scorer.score_with_logits(
                &mut g,
                candidates.reprs[a],
                candidates.logits[a],
                candidates.reprs[b],
                candidates.logits[b],
                phi,
                Some(rng),
            )?;
            scores.push(s);
        }
        let labels: Vec<bool> = pairs.iter().map(|p| p.label).collect();
        Some(scorer_auxiliary_loss(&mut g, &scores, &labels)?)
    };

    let opts = RolloutOptions { credit: cfg.reward_credit, score_feature: cfg.score_feature, with_critic: true };
    let episode = rollout(&mut g, model, &mentions, &mut oracle, Some(rng), opts)?;
    let rl = episode_losses(&mut g, &episode.transitions, cfg.gamma_rl, cfg.entropy_weight)?;

    let mut terms = Vec::new();
    let mut losses = StepLosses { steps: episode.transitions.len(), ..StepLosses::default() };
    if let Some((actor, critic)) = rl {
        losses.actor = g.scalar(actor);
        losses.critic = g.scalar(critic);
        let (a, c) = joint_losses(&mut g, actor, critic, detection)?;
        terms.push(a);
        terms.push(c);
    } else if let Some(d) = detection {
        // no episode to learn from, but the detector still trains
        terms.push(d);
    }
    if let Some(d) = detection {
        losses.detection = g.scalar(d);
    }
    if let Some(s) = scorer_loss {
        losses.scorer = g.scalar(s);
        terms.push(s);
    }
    if terms.is_empty() {
        return Ok(None);
    }
    let total = g.add_n(&terms)?;
    losses.total = g.scalar(total);
    if !losses.total.is_finite() {
        return Err(CorefError::Invalid(format!("non-finite loss on document {}", doc.doc_key)));
    }
    Ok(Some((g.backward(total)?, losses)))
}

/// Training and development data with their embeddings.
#[derive(Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a [Document],
    pub dev: &'a [Document],
    pub embeddings: &'a EmbeddingTable,
}

pub struct TrainOutcome {
    /// Parameters of the best development epoch.
    pub model: CorefModel,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochRecord>,
    /// One entry per document update, in order.
    pub step_losses: Vec<StepLosses>,
}

impl TrainOutcome {
    pub fn best_avg_f1(&self) -> f64 {
        self.best_epoch.map_or(0.0, |e| self.history[e - 1].avg_f1)
    }
}

/// Trains from scratch. After every epoch the development set is decoded greedily;
/// the returned model holds the parameters of the epoch with the best average F1
/// (earliest on ties). Training ends early once `target_f1` is reached. `on_epoch` sees each record as it is produced.
pub fn train(data: TrainData<'_>, cfg: &TrainConfig, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(CorefError::config("training corpus is empty"));
    }
    // Resolve every embedding before the first update.
    let train_tokens = data
        .train
        .iter()
        .map(|d| token_matrix(d, data.embeddings))
        .collect::<Result<Vec<_>>>()?;
    for d in data.dev {
        token_matrix(d, data.embeddings)?;
    }

    let mut model = CorefModel::new(cfg, data.embeddings.dim())?;
    let mut adam = Adam::new(AdamConfig { lr: cfg.learning_rate, ..AdamConfig::default() }, &model.store);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(TRAIN_STREAM);

    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step_losses = Vec::new();
    let mut best: Option<(usize, f64, Vec<Tensor>)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut updates = 0;
        for &k in &order {
            let Some(tokens) = &train_tokens[k] else { continue };
            let Some((grads, losses)) = document_gradients(&model, &data.train[k], tokens, &mut rng)? else {
                continue;
            };
            model.store.zero_grad();
            model.store.accumulate(&grads);
            if cfg.grad_clip > 0.0 {
                model.store.clip_grad_norm(cfg.grad_clip);
            }
            adam.step(&mut model.store);
            loss_sum += losses.total;
            updates += 1;
            step_losses.push(losses);
        }

        let report = evaluate_corpus(&model, data.dev, data.embeddings)?;
        let record = EpochRecord {
            epoch,
            muc_f1: report.muc.f1,
            b3_f1: report.b3.f1,
            ceaf_f1: report.ceaf_phi4.f1,
            avg_f1: report.avg_f1,
            mention_det_acc: mention_recall(&model, data.dev, data.embeddings)?,
            mean_train_loss: if updates > 0 { loss_sum / updates as f64 } else { 0.0 },
        };
        on_epoch(&record);
        if best.as_ref().map_or(true, |(_, f1, _)| record.avg_f1 > *f1) {
            best = Some((epoch, record.avg_f1, model.snapshot()));
        }
        let reached = cfg.target_f1.is_some_and(|t| record.avg_f1 >= t);
        history.push(record);
        if reached {
            break;
        }
    }
    let best_epoch = best.as_ref().map(|(e, _, _)| *e);
    if let Some((_, _, values)) = best {
        model.restore_snapshot(&values);
    }
    Ok(TrainOutcome { model, best_epoch, history, step_losses })
}

const TRAIN_STREAM: u64 = 2;
