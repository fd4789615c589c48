//! Losses, data preparation, optimization and checkpoints.

pub mod checkpoint;
pub mod data;
pub mod losses;
pub mod optim;
pub mod trainer;

pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use data::{bucket_features, FeatureStats, SampleKind, TrainingSample};
pub use losses::{
    boundary_windows, distance_map, loss_dm, loss_dm_joints, loss_rec, loss_rela, loss_smooth, LossWeights,
    DM_THRESHOLD,
};
pub use optim::Adam;
pub use trainer::{
    derive_seed, evaluate_stage1, evaluate_stage2, stage1_sample, stage2_sample, train_stage1, train_stage2,
    Alternation, Dataset, EpochRecord, LossParts, TrainConfig,
};
