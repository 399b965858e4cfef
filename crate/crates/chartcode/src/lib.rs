//! Chart-to-code generation at desk scale.
//!
//! A small encoder-decoder translates synthetic chart rasters into programs
//! of a closed, deterministic chart DSL. Visual tokens are routed through a
//! complexity-aware mixture-of-experts layer, base weights are adapted with
//! low-rank (LoRA) updates, and generated programs are verified by rendering
//! them back and comparing ink masks.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`] — dense f64 tensors with reverse-mode autodiff, AdamW,
//!   cosine annealing and gradient clipping.
//! - [`chartlab`] — chart spec sampling, DSL emit/parse/execute, the
//!   deterministic rasterizer, IoU and success-rate metrics, augmentation.
//! - [`model`] — encoder, MoE routing, LoRA adapters, decoder, and the
//!   assembled network.
//! - [`training`] — loss composition, the training loop, evaluation and the
//!   ablation grid runner.
//!
//! See `examples/` for one runnable example per capability and the
//! `chartcode` binary for the end-to-end commands.

pub mod chartlab;
pub mod error;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
