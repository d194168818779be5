//! Interpretable tabular mortality-risk modelling.
//!
//! The crate covers the whole modelling pipeline for a binary outcome on a
//! tabular cohort: typed CSV ingestion ([`cohort`]), a class-conditional
//! synthetic cohort generator ([`synth`]), train-only preprocessing
//! ([`preprocess`]), two-stage feature selection ([`select`]), stratified
//! splitting with in-fold SMOTE ([`resample`]), a family of probabilistic
//! classifiers ([`models`]), metrics with bootstrap intervals and grid
//! search ([`metrics`], [`evaluate`]), and cohort comparison, ablation and
//! accumulated-local-effects analysis ([`interpret`]). [`pipeline`] wires
//! the stages together from a declarative [`config::PipelineConfig`].

pub mod cohort;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod interpret;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod resample;
pub mod rng;
pub mod select;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
