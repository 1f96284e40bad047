//! Behaviour cloning with masked-token, masked-view and grounding auxiliaries.

pub mod losses;
pub mod optim;
pub mod trainer;

pub use losses::{episode_loss, mask_count, mask_positions, mlm_term, mvc_term, nav_term, observation_seed, og_term, rollout, EpisodeLoss, LossBreakdown, LossSettings, LossWeights, Rollout};
pub use optim::{clip_global_norm, Adam};
pub use trainer::{batch_gradients, mean_breakdown, train, EpochLog, Stage, TrainConfig};
