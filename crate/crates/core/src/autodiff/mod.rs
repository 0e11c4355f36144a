//! Reverse-mode automatic differentiation over [`Tensor`](crate::Tensor).

mod graph;
mod gradcheck;
pub mod kernels;

pub use gradcheck::{grad_check, grad_check_at};
pub use graph::{dice_loss_value, Graph, Var};
