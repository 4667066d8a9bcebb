//! Actor-critic training.

pub mod ablation;
pub mod config;
pub mod episode;
pub mod losses;
pub mod policy;
pub mod train;

pub use ablation::{ablation_run, ablation_study, AblationPair, AblationReport, AblationRun};
pub use config::{RewardCredit, TrainConfig};
pub use losses::{actor_critic_losses, joint_losses, scorer_auxiliary_loss, Transition};
pub use policy::{select_action, ActionMode, PolicyNet, ValueNet};
pub use train::{document_gradients, train, StepLosses, TrainData, TrainOutcome};
