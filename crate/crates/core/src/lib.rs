//! Permission preference prediction for AI agents.
//!
//! The crate learns a user's data-sharing preferences from demographics,
//! self-reported attitudes and past allow/deny answers, and predicts decisions
//! for new (query, tool, data type) requests:
//!
//! - [`cf`]: signed collaborative filtering with light graph convolution,
//!   calibrated at equal false-positive/false-negative rates with 5%
//!   confidence regions.
//! - [`icl`]: in-context-learning prompts for a pluggable text model.
//! - [`hybrid`]: CF recommendations injected into the ICL prompt, with a
//!   coverage gate on the final confidence.
//! - [`eval`]: k-fold cross-validation, threshold sweeps and breakdowns.
//! - [`analytics`]: descriptive statistics over study datasets.
//! - [`service`]: human-in-the-loop decision state (standing rules, pending
//!   queue, model refresh).

pub mod analytics;
pub mod cf;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod hybrid;
pub mod icl;
pub mod model;
pub mod service;

mod rng;

pub use dataset::{Catalog, Dataset, DatasetError};
pub use model::*;
