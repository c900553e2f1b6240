//! Dataset transforms and evaluation for LLM function calling.
//!
//! The pipeline around a function-calling model: candidate masking and
//! naming perturbations, irrelevance augmentation and mixing, prompt
//! rendering, output parsing, and exact-match / AST scoring. The model
//! itself sits behind [`inference`].

pub mod augmentation;
pub mod dataset;
pub mod error;
pub mod inference;
pub mod masking;
pub mod metrics;
pub mod model;
pub mod parsing;
pub mod prompting;
pub mod rng;
pub mod sweep;
pub mod synth;

pub use error::{Error, Result};
pub use model::{derive_task_kind, validate_instance, FunctionSpec, Instance, ParamSpec, TaskKind, ToolCall, ValueType};
