//! Initialization, optimization, augmentation and the training loop.

pub mod adam;
pub mod augment;
pub mod init;
pub mod patches;
pub mod schedule;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use augment::{augment, Transform};
pub use init::{derive_seed, he_init};
pub use patches::{crop_patch, sample_patches, sample_patches_seeded};
pub use schedule::{lr_at_epoch, LrPhase, TrainPlan};
pub use trainer::{
    evaluate, train, train_on_images, EpochRecord, TrainHistory, TrainOutcome, Trainer,
};
