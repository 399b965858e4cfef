//! Synthetic chart substrate.
//!
//! Charts live in three equivalent forms: a [`ChartSpec`] (structured ground
//! truth), a [`DSLProgram`] (token sequence in a closed chart DSL), and a
//! [`Raster`] (deterministic 64x64 render). Specs are sampled, emitted as
//! canonical programs, and rasterized; generated programs are executed and
//! scored against the input raster with mask IoU.

mod augment;
mod dataset;
mod dsl;
mod metrics;
mod raster;
mod spec;

pub use augment::{augment_image, augment_with};
pub use dataset::{gen_dataset, read_jsonl, write_jsonl, DataRecord, Dataset, SplitCounts};
pub use dsl::{parse, DslError, DSLProgram, Scene, SceneItem, Vocab};
pub use metrics::{iou, success_rate};
pub use raster::{execute, rasterize_scene, rasterize_spec, ExecFailure, Raster};
pub use spec::{emit_code, sample_spec, ChartSpec, ChartType, Element, TypeMix};
