//! Hierarchy-aware embeddings for medical codes, wired into a small
//! longitudinal medication recommender with a synthetic-EHR benchmark.
//!
//! The crate is organized around three layers:
//!
//! - numeric core: [`tensor`], [`graph`] (reverse-mode differentiation over
//!   an operation record), [`optim`] and [`checkpoint`];
//! - code structure: [`icd`] parsing and hierarchy trees, [`relation`]
//!   embeddings pretrained by negative sampling, [`position`] multi-hot
//!   digit encodings, composed by [`encoder`];
//! - the task: [`data`] ingestion and synthesis, the [`model`] recommender,
//!   [`metrics`], and [`experiment`]/[`config`] orchestration used by the
//!   `medrec` binary.
//!
//! Each major capability has a runnable example under `examples/`.

pub mod checkpoint;
pub mod data;
pub mod graph;
pub mod icd;
pub mod position;
pub mod relation;
pub mod optim;
pub mod tensor;
