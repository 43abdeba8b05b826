//! Benchmark harness for driver-yielding prediction at unsignalized intersections.
//!
//! The pipeline runs end to end: ingest an annotated interaction dataset,
//! compute descriptive statistics, fit a stepwise logistic-regression
//! baseline, synthesize a domain-knowledge block from the statistics and the
//! fitted model, assemble structured multimodal prompts, run batch inference
//! against any chat-completions endpoint (with deterministic record/replay),
//! and evaluate per-site precision/recall/accuracy plus token cost.

pub mod cost;
pub mod data;
pub mod datagen;
pub mod eval;
pub mod inference;
pub mod knowledge;
pub mod llm;
pub mod logit;
pub mod prompt;
pub mod report;
pub mod schema;
pub mod stats;
