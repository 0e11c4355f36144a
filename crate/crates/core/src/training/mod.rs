//! Dice-loss training with Adam, shift augmentation and k-fold
//! cross-validation.

mod adam;
mod augment;
mod crossval;
mod kfold;
mod train;

pub use crate::autodiff::dice_loss_value;
pub use adam::{adam_step, AdamConfig, AdamState};
pub use augment::{augment_shift, shift_sample};
pub use crossval::{cross_validate, CrossValReport, FoldResult};
pub use kfold::{kfold_split, Fold};
pub use train::{train, train_with, EpochStats, TrainConfig, TrainHistory};
