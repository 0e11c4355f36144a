//! Small Tumor-Aware Network (STAN) segmentation workbench.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`] and [`autodiff`]: an `f64` tensor and a tape-based reverse-mode
//!   engine with exactly the operations the segmentation graphs need
//!   (same-padded convolution, 2x2 transposed convolution, 2x2 max pooling,
//!   channel concatenation, ReLU, sigmoid and the smoothed dice loss).
//! - [`model`]: the dual-branch STAN wiring and a single-branch U-Net baseline,
//!   both described once and executed by a shape tracer, an eager evaluator or
//!   the recording graph.
//! - [`training`]: Adam, shift augmentation, k-fold splitting, the training
//!   loop and cross-validation.
//! - [`metrics`]: TPR, FPR, JI, DSC, AER, Hausdorff and mean boundary errors,
//!   longest-axis stratification and report aggregation.
//! - [`data_io`]: PGM (P5) I/O, resizing, the speckled ellipse phantom generator
//!   and directory manifests.
//! - [`config`]: the flat `key=value` run configuration used by the `stan` CLI.
//!
//! Data-parallel loops (per-sample convolution work, per-image evaluation,
//! phantom generation) use rayon when the default `parallel` feature is on and
//! fall back to plain iterators otherwise. Reductions always run in a fixed
//! order, so results are bitwise identical in both modes.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod data_io;
mod error;
pub mod metrics;
pub mod model;
pub(crate) mod par;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
