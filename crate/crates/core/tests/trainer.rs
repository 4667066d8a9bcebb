mod common;

use common::{small_corpus, tiny_config};
use corefrl::decode::{predict_corpus, score_predictions, evaluate_corpus};
use corefrl::env::{Action, ActionMask};
use corefrl::trainer::episode::{rollout, token_matrix, Candidates, Mentions, RolloutOptions};
use corefrl::trainer::losses::{sample_scorer_pairs, PairSample};
use corefrl::trainer::train::episode_losses;
use corefrl::trainer::{
    actor_critic_losses, scorer_auxiliary_loss, select_action, train, ActionMode, RewardCredit, TrainData, Transition,
};
use corefrl::{CorefModel, Sidecar, Span};
use corefrl_nn::{Gradients, Graph, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gradients of the mean actor and critic losses of one sampled episode.
fn rl_gradients(model: &CorefModel, seed: u64) -> (Gradients, Gradients) {
    let (docs, emb) = small_corpus(1, 8, seed);
    let tokens = token_matrix(&docs[0], &emb).unwrap().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let run = |which: usize, rng: &mut ChaCha8Rng| {
        let mut g = Graph::new(&model.store);
        let c = Candidates::build(&mut g, model, &docs[0], &tokens, Some(&mut *rng)).unwrap();
        let keep = c.prune(&g, model.config.prune_ratio, docs[0].num_tokens());
        let mentions = Mentions::select(&c, &keep);
        let mut oracle = mentions.oracle(&g, model, &docs[0]).unwrap();
        let opts = RolloutOptions { credit: RewardCredit::EveryStep, score_feature: true, with_critic: true };
        let ep = rollout(&mut g, model, &mentions, &mut oracle, Some(rng), opts).unwrap();
        assert!(ep.transitions.len() > 3);
        let (a, c) = episode_losses(&mut g, &ep.transitions, 0.95, 0.01).unwrap().unwrap();
        g.backward([a, c][which]).unwrap()
    };
    let actor = run(0, &mut rng.clone());
    let critic = run(1, &mut rng);
    (actor, critic)
}

#[test]
fn rl_losses_leave_foreign_parameters_untouched() {
    for seed in 0..3 {
        let model = CorefModel::new(&tiny_config(seed), 8).unwrap();
        let (actor, critic) = rl_gradients(&model, seed);
        let mut touched = (false, false);
        for (id, p) in model.store.iter() {
            let name = p.name.as_str();
            if name.starts_with("critic.") || name.starts_with("scorer.") {
                assert!(actor.is_zero(id), "actor loss reached {name}");
            }
            if name.starts_with("actor.") || name.starts_with("scorer.") {
                assert!(critic.is_zero(id), "critic loss reached {name}");
            }
            touched.0 |= name.starts_with("actor.") && !actor.is_zero(id);
            touched.1 |= name.starts_with("critic.") && !critic.is_zero(id);
        }
        assert_eq!(touched, (true, true));
    }
}

#[test]
fn advantage_and_losses_match_hand_computation() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let t = Transition {
        i: 2,
        j: 1,
        action: Action::LinkAndAdvance,
        log_prob: g.scalar_constant(0.25f64.ln()),
        log_probs: g.constant(Tensor::vector(vec![0.25f64.ln(), 0.75f64.ln()])),
        reward: 1.5,
        value: g.scalar_constant(0.4),
        next_value: Some(g.scalar_constant(2.0)),
    };
    let (a, c) = actor_critic_losses(&mut g, &t, 0.9).unwrap();
    let adv = 1.5 + 0.9 * 2.0 - 0.4;
    assert!((g.scalar(a) - (-(0.25f64.ln()) * adv)).abs() < 1e-12);
    assert!((g.scalar(c) - adv * adv).abs() < 1e-12);
    let terminal = Transition { next_value: None, ..t };
    let (_, c) = actor_critic_losses(&mut g, &terminal, 0.9).unwrap();
    assert!((g.scalar(c) - 1.1f64.powi(2)).abs() < 1e-12);
}

#[test]
fn sampling_follows_the_masked_distribution() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let logits = g.constant(Tensor::vector(vec![0.3, -0.7, 1.1]));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for mask in [ActionMask([true, true, true]), ActionMask([true, false, true]), ActionMask([true, true, false])] {
        let legal = mask.actions();
        let z: f64 = legal.iter().map(|a| g.data(logits)[a.index()].exp()).sum();
        let mut counts = [0usize; 3];
        let draws = 40_000;
        for _ in 0..draws {
            let s = select_action(&mut g, logits, mask, ActionMode::Sample(&mut rng)).unwrap();
            counts[s.action.index()] += 1;
        }
        for a in Action::ALL {
            let p = if mask.contains(a) { g.data(logits)[a.index()].exp() / z } else { 0.0 };
            assert!((counts[a.index()] as f64 / draws as f64 - p).abs() < 0.01, "{a:?} under {mask:?}");
        }
        let greedy = select_action(&mut g, logits, mask, ActionMode::Greedy).unwrap().action;
        let best = legal.iter().copied().max_by(|a, b| g.data(logits)[a.index()].total_cmp(&g.data(logits)[b.index()]));
        assert_eq!(Some(greedy), best);
    }
}

#[test]
fn scorer_loss_is_mean_pair_cross_entropy() {
    let store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..30 {
        let n = rng.gen_range(1..8);
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let y: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let mut g = Graph::new(&store);
        let vars: Vec<_> = s.iter().map(|&v| g.scalar_constant(v)).collect();
        let loss = scorer_auxiliary_loss(&mut g, &vars, &y).unwrap();
        let expected = s
            .iter()
            .zip(&y)
            .map(|(&s, &y)| {
                let p = 1.0 / (1.0 + (-s).exp());
                if y { -p.ln() } else { -(1.0 - p).ln() }
            })
            .sum::<f64>()
            / n as f64;
        assert!((g.scalar(loss) - expected).abs() < 1e-10);
    }
}

#[test]
fn pair_sampling_keeps_positives_and_caps_negatives() {
    let spans: Vec<Span> = (0..12).map(|k| Span::new(k, k)).collect();
    let gold = vec![vec![spans[1], spans[5], spans[9]], vec![spans[2], spans[3]]];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pairs = sample_scorer_pairs(&spans, &gold, 250, 2.0, &mut rng);
    let positives: Vec<&PairSample> = pairs.iter().filter(|p| p.label).collect();
    assert_eq!(positives.len(), 4);
    assert_eq!(pairs.len() - positives.len(), 8);
    assert!(pairs.windows(2).all(|w| (w[0].i, w[0].j) < (w[1].i, w[1].j)));
    let windowed = sample_scorer_pairs(&spans, &gold, 1, 100.0, &mut rng);
    assert!(windowed.iter().all(|p| p.i - p.j == 1));
}

#[test]
fn training_is_reproducible_and_records_history() {
    let (docs, emb) = small_corpus(7, 8, 3);
    let data = TrainData { train: &docs[..5], dev: &docs[5..], embeddings: &emb };
    let cfg = tiny_config(4);
    let mut seen = Vec::new();
    let a = train(data, &cfg, |r| seen.push(r.epoch)).unwrap();
    let b = train(data, &cfg, |_| {}).unwrap();
    assert_eq!(seen, vec![1]);
    assert_eq!(a.history.len(), 1);
    assert_eq!(a.step_losses.len(), 5);
    for (x, y) in a.step_losses.iter().zip(&b.step_losses) {
        assert_eq!(x.total.to_bits(), y.total.to_bits());
        assert_eq!(x.actor.to_bits(), y.actor.to_bits());
    }
    assert_eq!(a.model.snapshot(), b.model.snapshot());
    let other = train(data, &tiny_config(5), |_| {}).unwrap();
    assert_ne!(a.step_losses, other.step_losses);
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let (docs, emb) = small_corpus(6, 8, 9);
    let data = TrainData { train: &docs[..4], dev: &docs[4..], embeddings: &emb };
    let out = train(data, &tiny_config(1), |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let sidecar = Sidecar::new(&out.model, out.best_epoch, out.history.clone());
    out.model.save(&path, &sidecar).unwrap();
    let (loaded, side) = CorefModel::load(&path).unwrap();
    assert_eq!(side, sidecar);
    let bits = |m: &CorefModel| -> Vec<u64> {
        m.store.iter().flat_map(|(_, p)| p.value.data().iter().map(|v| v.to_bits())).collect()
    };
    assert_eq!(bits(&loaded), bits(&out.model));
    let p1 = predict_corpus(&out.model, &docs, &emb).unwrap();
    let p2 = predict_corpus(&loaded, &docs, &emb).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(score_predictions(&docs, &p1).unwrap(), evaluate_corpus(&loaded, &docs, &emb).unwrap());
}

#[test]
fn early_stop_at_target() {
    let (docs, emb) = small_corpus(4, 8, 2);
    let data = TrainData { train: &docs[..3], dev: &docs[3..], embeddings: &emb };
    let cfg = corefrl::trainer::TrainConfig { epochs: 3, target_f1: Some(0.0), ..tiny_config(0) };
    let out = train(data, &cfg, |_| {}).unwrap();
    assert_eq!(out.history.len(), 1);
    assert_eq!(out.best_epoch, Some(1));
}
