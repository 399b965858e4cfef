//! Dense-tensor substrate: reverse-mode autodiff on f64 matrices, the AdamW
//! optimizer, the cosine learning-rate schedule and gradient clipping.

pub mod gradcheck;
mod graph;
#[cfg(test)]
mod graph_tests;
pub mod la;
mod optim;

pub use graph::{GradMap, Graph, Value};
pub use optim::{adamw_step, clip_gradients, cosine_lr, AdamWConfig, LRSchedule, OptimizerState};
