//! The full parameter set and its on-disk form: a binary checkpoint plus a JSON
//! sidecar (`<checkpoint>.json`) holding the configuration and training history.

use std::path::{Path, PathBuf};

use corefrl_nn::{checkpoint, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::reward::ScorerDims;
use crate::env::RewardScorer;
use crate::error::{CorefError, Result};
use crate::span::SpanModel;
use crate::trainer::config::TrainConfig;
use crate::trainer::policy::{PolicyNet, ValueNet};

pub struct CorefModel {
    pub store: ParamStore,
    pub spans: SpanModel,
    pub scorer: RewardScorer,
    pub actor: PolicyNet,
    pub critic: ValueNet,
    pub token_dim: usize,
    pub config: TrainConfig,
}

impl CorefModel {
    /// Fresh parameters drawn from a stream seeded by `config.seed`.
    pub fn new(config: &TrainConfig, token_dim: usize) -> Result<Self> {
        config.validate()?;
        if token_dim == 0 {
            return Err(CorefError::config("token embedding dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(INIT_STREAM);
        let mut store = ParamStore::new();
        let spans = SpanModel::new(&mut store, token_dim, config.feature_dim, config.max_span_width, &mut rng)?;
        let repr_dim = spans.repr_dim();
        let dims = ScorerDims {
            repr_dim,
            feature_dim: config.feature_dim,
            hidden: config.ffnn_hidden,
            out: config.ffnn_out,
            num_genres: config.num_genres,
        };
        let scorer = RewardScorer::new(&mut store, dims, config.dropout, config.gamma_decay, &mut rng)?;
        let extra = scorer.pair_feature_dim() + usize::from(config.score_feature);
        let actor = PolicyNet::new(&mut store, repr_dim, extra, config.lstm_hidden, &mut rng)?;
        let critic = ValueNet::new(&mut store, repr_dim, extra, config.lstm_hidden, &mut rng)?;
        Ok(CorefModel { store, spans, scorer, actor, critic, token_dim, config: config.clone() })
    }

    /// Writes the checkpoint to `path` and the sidecar next to it.
    pub fn save(&self, path: impl AsRef<Path>, sidecar: &Sidecar) -> Result<()> {
        let path = path.as_ref();
        checkpoint::save(&self.store, path)?;
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(sidecar).map_err(std::io::Error::from)?;
        std::fs::write(&side, json + "\n").map_err(|e| CorefError::file(side, e))?;
        Ok(())
    }

    /// Rebuilds the model described by the sidecar and restores its parameters.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Sidecar)> {
        let path = path.as_ref();
        let side = sidecar_path(path);
        let text = std::fs::read_to_string(&side).map_err(|e| CorefError::file(&side, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text)
            .map_err(|e| CorefError::Invalid(format!("{}: {e}", side.display())))?;
        if sidecar.format_version != SIDECAR_VERSION {
            return Err(CorefError::Invalid(format!(
                "{}: unsupported sidecar version {}",
                side.display(),
                sidecar.format_version
            )));
        }
        let mut model = CorefModel::new(&sidecar.config, sidecar.token_dim)?;
        if !path.exists() {
            return Err(CorefError::file(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
        checkpoint::load_into(&mut model.store, path)
            .map_err(|e| CorefError::Invalid(format!("{}: {e}", path.display())))?;
        Ok((model, sidecar))
    }

    /// Snapshot of all parameter values.
    pub fn snapshot(&self) -> Vec<corefrl_nn::Tensor> {
        self.store.iter().map(|(_, p)| p.value.clone()).collect()
    }

    pub fn restore_snapshot(&mut self, values: &[corefrl_nn::Tensor]) {
        for (p, v) in self.store.iter_mut().zip(values) {
            p.value = v.clone();
        }
    }
}

const INIT_STREAM: u64 = 1;
pub const SIDECAR_VERSION: u32 = 1;

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Per-epoch dev metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub muc_f1: f64,
    pub b3_f1: f64,
    pub ceaf_f1: f64,
    pub avg_f1: f64,
    /// Fraction of gold mentions whose mention logit is positive.
    pub mention_det_acc: f64,
    pub mean_train_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format_version: u32,
    pub token_dim: usize,
    pub config: TrainConfig,
    /// Epoch (1-based) whose parameters the checkpoint holds.
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochRecord>,
}

impl Sidecar {
    pub fn new(model: &CorefModel, best_epoch: Option<usize>, history: Vec<EpochRecord>) -> Self {
        Sidecar {
            format_version: SIDECAR_VERSION,
            token_dim: model.token_dim,
            config: model.config.clone(),
            best_epoch,
            history,
        }
    }
}
