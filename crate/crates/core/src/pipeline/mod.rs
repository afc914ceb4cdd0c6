//! End-to-end reconstruction: stages, losses and metrics, synthetic data, training.

pub mod metrics;
pub mod protocols;
pub mod stages;
pub mod synth;
pub mod train;

pub use metrics::{evaluate, loss, mrae, psnr, regularized_loss, sam, ssim, MetricsReport};
pub use protocols::{protocol_continuous, protocol_zeroshot, ProtocolReport};
pub use stages::{reconstruct, stage1_upsample, stage2_reconstruct, stage3_refine, Reconstruction};
pub use synth::{synth_dataset, Scene};
pub use train::{evaluate_scenes, train, train_from, Adam, EpochLoss, Model, TrainConfig, TrainOutcome};
