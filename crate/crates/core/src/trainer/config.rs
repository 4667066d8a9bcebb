use serde::{Deserialize, Serialize};

use crate::document::NUM_GENRES;
use crate::error::{CorefError, Result};

/// Which steps receive the pair reward in the actor-critic losses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardCredit {
    /// Only `LinkAndAdvance` earns `r(i, j)`; advancing earns 0, so an action is
    /// rewarded for the link it actually stores.
    Link,
    /// Every step earns `r(i, j)` of its pre-transition state, whatever the action.
    EveryStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Discount of the temporal-difference target.
    pub gamma_rl: f64,
    /// Distance decay of the pair reward.
    pub gamma_decay: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub max_span_width: usize,
    pub max_antecedents: usize,
    pub prune_ratio: f64,
    pub dropout: f64,
    pub feature_dim: usize,
    pub lstm_hidden: usize,
    pub ffnn_hidden: usize,
    /// Output width `k` of the scorer's feed-forward blocks.
    pub ffnn_out: usize,
    /// Adds the mention-detection loss to both actor and critic objectives.
    pub detection_loss: bool,
    pub entropy_weight: f64,
    /// Cap on sampled negative pairs per positive pair in the scorer loss.
    pub neg_pos_ratio: f64,
    pub reward_credit: RewardCredit,
    /// Feeds the (detached) pair score to the actor and critic alongside the
    /// span vectors.
    pub score_feature: bool,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub num_genres: usize,
    pub seed: u64,
    /// Stops after the first epoch whose development average F1 reaches this value.
    pub target_f1: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma_rl: 0.95,
            gamma_decay: 0.5,
            learning_rate: 1e-3,
            epochs: 20,
            max_span_width: 10,
            max_antecedents: 250,
            prune_ratio: 0.4,
            dropout: 0.5,
            feature_dim: 20,
            lstm_hidden: 200,
            ffnn_hidden: 150,
            ffnn_out: 150,
            detection_loss: true,
            entropy_weight: 0.0,
            neg_pos_ratio: 3.0,
            reward_credit: RewardCredit::Link,
            score_feature: true,
            grad_clip: 5.0,
            num_genres: NUM_GENRES,
            seed: 0,
            target_f1: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(CorefError::config(msg)) };
        check((0.0..=1.0).contains(&self.gamma_rl), "gamma_rl must lie in [0, 1]")?;
        check(self.gamma_decay > 0.0 && self.gamma_decay < 1.0, "gamma_decay must lie in (0, 1)")?;
        check(self.learning_rate > 0.0 && self.learning_rate.is_finite(), "learning_rate must be positive")?;
        check(self.epochs >= 1, "epochs must be at least 1")?;
        check(self.max_span_width >= 1, "max_span_width must be at least 1")?;
        check(self.max_antecedents >= 1, "max_antecedents must be at least 1")?;
        check(self.prune_ratio > 0.0 && self.prune_ratio <= 1.0, "prune_ratio must lie in (0, 1]")?;
        check((0.0..1.0).contains(&self.dropout), "dropout must lie in [0, 1)")?;
        for (name, v) in [
            ("feature_dim", self.feature_dim),
            ("lstm_hidden", self.lstm_hidden),
            ("ffnn_hidden", self.ffnn_hidden),
            ("ffnn_out", self.ffnn_out),
            ("num_genres", self.num_genres),
        ] {
            check(v >= 1, &format!("{name} must be at least 1"))?;
        }
        check(self.entropy_weight >= 0.0, "entropy_weight must be non-negative")?;
        check(self.neg_pos_ratio > 0.0, "neg_pos_ratio must be positive")?;
        check(self.grad_clip >= 0.0, "grad_clip must be non-negative")?;
        check(self.target_f1.map_or(true, |t| (0.0..=1.0).contains(&t)), "target_f1 must lie in [0, 1]")?;
        Ok(())
    }
}
