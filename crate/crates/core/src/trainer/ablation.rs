//! Paired runs with and without the mention-detection loss.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::trainer::config::TrainConfig;
use crate::trainer::train::{train, TrainData};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub seed: u64,
    pub detection_loss: bool,
    pub best_epoch: Option<usize>,
    /// Best development average F1 over the epochs.
    pub avg_f1: f64,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationPair {
    pub joint: AblationRun,
    pub ablated: AblationRun,
    /// `joint.avg_f1 − ablated.avg_f1`.
    pub difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub pairs: Vec<AblationPair>,
    pub median_joint: f64,
    pub median_ablated: f64,
}

/// Trains twice with identical configurations except for the detection-loss toggle.
pub fn ablation_run(data: TrainData<'_>, cfg: &TrainConfig) -> Result<AblationPair> {
    let run = |detection_loss: bool| -> Result<AblationRun> {
        let config = TrainConfig { detection_loss, ..cfg.clone() };
        let out = train(data, &config, |_| {})?;
        Ok(AblationRun { seed: cfg.seed, detection_loss, best_epoch: out.best_epoch, avg_f1: out.best_avg_f1(), config })
    };
    let joint = run(true)?;
    let ablated = run(false)?;
    let difference = joint.avg_f1 - ablated.avg_f1;
    Ok(AblationPair { joint, ablated, difference })
}

/// One [`ablation_run`] per seed.
pub fn ablation_study(data: TrainData<'_>, cfg: &TrainConfig, seeds: &[u64]) -> Result<AblationReport> {
    let pairs = seeds
        .iter()
        .map(|&seed| ablation_run(data, &TrainConfig { seed, ..cfg.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let median_joint = median(pairs.iter().map(|p| p.joint.avg_f1).collect());
    let median_ablated = median(pairs.iter().map(|p| p.ablated.avg_f1).collect());
    Ok(AblationReport { pairs, median_joint, median_ablated })
}

pub fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}
