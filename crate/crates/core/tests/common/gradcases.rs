//! Finite-difference checks of the composite losses on tiny random models.
//!
//! Every case draws its instance from the generator it is given and returns the
//! worst relative error over the checked coordinates. Dropout masks are fixed by
//! reseeding the dropout generator on every evaluation, so the loss is a smooth
//! function of the parameters between evaluations.

use corefrl::env::{CorefEnv, PairFeatures, SpeakerMatch};
use corefrl::span::{detection_loss, SpanModel};
use corefrl::trainer::policy::{ActionMode, ProjectedInputs};
use corefrl::trainer::train::episode_losses;
use corefrl::trainer::{joint_losses, scorer_auxiliary_loss, select_action, Transition};
use corefrl::{CorefModel, Span};
use corefrl_nn::gradcheck::{check_coordinates, randomize_all, Case, STEP};
use corefrl_nn::{Gradients, Graph, ParamId, ParamStore, Result, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tiny_config;

const TOKEN_DIM: usize = 3;
const NUM_TOKENS: usize = 6;
/// Coordinates checked per trial in the larger cases.
const SAMPLED_COORDS: usize = 60;

pub fn composite_cases() -> Vec<Case> {
    vec![
        Case { name: "span repr + mention score + detection loss", run: detection_path },
        Case { name: "pair score + reward + scorer loss", run: scorer_path },
        Case { name: "actor loss through policy LSTM (+ detection)", run: actor_path },
        Case { name: "critic loss through value LSTM and spans (+ detection)", run: critic_path },
    ]
}

struct Instance {
    model: CorefModel,
    tokens: Tensor,
    spans: Vec<Span>,
    labels: Vec<f64>,
    drop_seed: u64,
}

fn instance(rng: &mut ChaCha8Rng) -> Instance {
    let mut model = CorefModel::new(&tiny_config(rng.gen()), TOKEN_DIM).unwrap();
    randomize_all(&mut model.store, rng);
    let tokens = Tensor::matrix(
        NUM_TOKENS,
        TOKEN_DIM,
        (0..NUM_TOKENS * TOKEN_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    // every span of width ≤ 3 inside two sentences of three tokens
    let spans: Vec<Span> = [0, 3]
        .into_iter()
        .flat_map(|off| (0..3).flat_map(move |s| (s..3).map(move |e| Span::new(off + s, off + e))))
        .collect();
    let labels = spans.iter().map(|_| f64::from(rng.gen_range(0..2))).collect();
    Instance { model, tokens, spans, labels, drop_seed: rng.gen() }
}

fn coords(store: &ParamStore, prefixes: &[&str]) -> Vec<(ParamId, usize)> {
    store
        .iter()
        .filter(|(_, p)| prefixes.iter().any(|pre| p.name.starts_with(pre)))
        .flat_map(|(id, p)| (0..p.value.len()).map(move |k| (id, k)))
        .collect()
}

fn sample(mut all: Vec<(ParamId, usize)>, rng: &mut ChaCha8Rng) -> Vec<(ParamId, usize)> {
    all.shuffle(rng);
    all.truncate(SAMPLED_COORDS);
    all
}

fn finish(g: Graph, loss: Var) -> Result<(f64, Gradients)> {
    let value = g.scalar(loss);
    Ok((value, g.backward(loss)?))
}

fn detection(
    g: &mut Graph,
    spans_model: &SpanModel,
    m: &CorefModel,
    inst: &Instance,
    drop: &mut ChaCha8Rng,
) -> Result<(Vec<Var>, Var)> {
    let reprs = spans_model.represent(g, &inst.tokens, &inst.spans).map_err(into_nn)?;
    let logits = reprs
        .iter()
        .map(|&r| m.scorer.mention_logit(g, r, Some(drop)).map_err(into_nn))
        .collect::<Result<Vec<_>>>()?;
    let loss = detection_loss(g, &logits, &inst.labels).map_err(into_nn)?;
    Ok((reprs, loss))
}

fn into_nn(e: corefrl::CorefError) -> corefrl_nn::NnError {
    match e {
        corefrl::CorefError::Nn(e) => e,
        other => panic!("unexpected error: {other}"),
    }
}

fn detection_path(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut inst = instance(rng);
    let mut store = std::mem::take(&mut inst.model.store);
    let targets = coords(&store, &["span.", "scorer.f1.", "scorer.v_m"]);
    check_coordinates(&mut store, STEP, &targets, |store| {
        let mut g = Graph::new(store);
        let mut drop = ChaCha8Rng::seed_from_u64(inst.drop_seed);
        let (_, loss) = detection(&mut g, &inst.model.spans, &inst.model, &inst, &mut drop)?;
        finish(g, loss)
    })
}

fn scorer_path(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut inst = instance(rng);
    let mut store = std::mem::take(&mut inst.model.store);
    let n = inst.spans.len();
    let pairs: Vec<(usize, usize, bool, PairFeatures)> = (0..8)
        .map(|_| {
            let i = rng.gen_range(1..n);
            let speaker = [SpeakerMatch::Same, SpeakerMatch::Different][rng.gen_range(0..2)];
            let pf = PairFeatures { distance: rng.gen_range(0..70), speaker, genre: rng.gen_range(0..8) };
            (i, rng.gen_range(0..i), rng.gen(), pf)
        })
        .collect();
    let targets = sample(coords(&store, &["span.", "scorer."]), rng);
    let m = &inst.model;
    check_coordinates(&mut store, STEP, &targets, |store| {
        let mut g = Graph::new(store);
        let mut drop = ChaCha8Rng::seed_from_u64(inst.drop_seed);
        let reprs = m.spans.represent(&mut g, &inst.tokens, &inst.spans).map_err(into_nn)?;
        let mut scores = Vec::new();
        for &(i, j, _, pf) in &pairs {
            let phi = m.scorer.pair_features(&mut g, pf).map_err(into_nn)?;
            let li = m.scorer.mention_logit(&mut g, reprs[i], Some(&mut drop)).map_err(into_nn)?;
            let lj = m.scorer.mention_logit(&mut g, reprs[j], Some(&mut drop)).map_err(into_nn)?;
            let s = m
                .scorer
                .score_with_logits(&mut g, reprs[i], li, reprs[j], lj, phi, Some(&mut drop))
                .map_err(into_nn)?;
            scores.push(s);
        }
        let labels: Vec<bool> = pairs.iter().map(|p| p.2).collect();
        let aux = scorer_auxiliary_loss(&mut g, &scores, &labels).map_err(into_nn)?;
        // decayed rewards, including one against the learned sentinel
        let pf = PairFeatures { distance: 3, speaker: SpeakerMatch::NotApplicable, genre: 1 };
        let r0 = m.scorer.reward(&mut g, reprs[2], None, pf, Some(&mut drop)).map_err(into_nn)?;
        let r1 = m.scorer.reward(&mut g, reprs[4], Some(reprs[1]), pairs[0].3, Some(&mut drop)).map_err(into_nn)?;
        let loss = g.add_n(&[aux, r0, r1])?;
        finish(g, loss)
    })
}

/// Joint actor and critic objectives of one sampled episode over four mentions,
/// with fixed per-step rewards.
fn episode(
    g: &mut Graph,
    m: &CorefModel,
    inst: &Instance,
    rewards: &[f64],
    extras: &[Vec<f64>],
) -> Result<(Var, Var)> {
    let mut drop = ChaCha8Rng::seed_from_u64(inst.drop_seed);
    let (reprs, det) = detection(g, &m.spans, m, inst, &mut drop)?;
    let mentions: Vec<Var> = [0, 4, 6, 10].iter().map(|&k| reprs[k]).collect();
    let sentinel = g.constant(m.scorer.sentinel_value(g.store()));
    let mut rows = vec![sentinel];
    rows.extend(&mentions);
    let matrix = g.stack(&rows)?;
    let actor_in = ProjectedInputs::new(g, &m.actor.lstm, matrix).map_err(into_nn)?;
    let critic_in = ProjectedInputs::new(g, &m.critic.lstm, matrix).map_err(into_nn)?;

    let env = CorefEnv::new(mentions.len(), 2);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(inst.drop_seed ^ 1);
    let mut state = env.initial_state();
    let (mut a_state, mut c_state) = (m.actor.lstm.zero_state(g), m.critic.lstm.zero_state(g));
    let mut transitions: Vec<Transition> = Vec::new();
    while !env.is_terminal(&state) {
        let (i, j) = (state.i, state.j);
        if j == 0 {
            a_state = m.actor.lstm.zero_state(g);
            c_state = m.critic.lstm.zero_state(g);
        }
        let k = transitions.len();
        let extra = g.constant(Tensor::vector(extras[k].clone()));
        a_state = actor_in.step(g, &m.actor.lstm, i, j, extra, &a_state).map_err(into_nn)?;
        let logits = m.actor.logits(g, a_state.h).map_err(into_nn)?;
        let sel = select_action(g, logits, env.legal_actions(&state), ActionMode::Sample(&mut sample_rng))
            .map_err(into_nn)?;
        c_state = critic_in.step(g, &m.critic.lstm, i, j, extra, &c_state).map_err(into_nn)?;
        let value = m.critic.value(g, c_state.h).map_err(into_nn)?;
        if let Some(prev) = transitions.last_mut() {
            prev.next_value = Some(value);
        }
        transitions.push(Transition {
            i,
            j,
            action: sel.action,
            log_prob: sel.log_prob,
            log_probs: sel.log_probs,
            reward: rewards[k],
            value,
            next_value: None,
        });
        state = env.transition(&state, sel.action).map_err(into_nn)?;
    }
    let (actor, critic) = episode_losses(g, &transitions, 0.9, 0.05).map_err(into_nn)?.expect("non-empty episode");
    joint_losses(g, actor, critic, Some(det)).map_err(into_nn)
}

fn episode_inputs(inst: &Instance, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<Vec<f64>>) {
    let extra_dim = inst.model.actor.lstm.block_dims[2];
    let rewards = (0..64).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let extras = (0..64).map(|_| (0..extra_dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    (rewards, extras)
}

/// The actor objective holds the advantage constant, so it is checked against
/// the parameters that do not feed the advantage: the policy's own and the
/// detection path's scorer blocks.
fn actor_path(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut inst = instance(rng);
    let (rewards, extras) = episode_inputs(&inst, rng);
    let mut store = std::mem::take(&mut inst.model.store);
    let targets = sample(coords(&store, &["actor.", "scorer.f1.", "scorer.v_m"]), rng);
    check_coordinates(&mut store, STEP, &targets, |store| {
        let mut g = Graph::new(store);
        let (actor, _) = episode(&mut g, &inst.model, &inst, &rewards, &extras)?;
        finish(g, actor)
    })
}

/// The critic objective is differentiable everywhere it depends on.
fn critic_path(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut inst = instance(rng);
    let (rewards, extras) = episode_inputs(&inst, rng);
    let mut store = std::mem::take(&mut inst.model.store);
    let targets = sample(coords(&store, &["critic.", "span.", "scorer.f1.", "scorer.v_m"]), rng);
    check_coordinates(&mut store, STEP, &targets, |store| {
        let mut g = Graph::new(store);
        let (_, critic) = episode(&mut g, &inst.model, &inst, &rewards, &extras)?;
        finish(g, critic)
    })
}
