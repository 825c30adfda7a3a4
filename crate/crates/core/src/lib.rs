//! Vocabulary difficulty modeling for second-language vocabulary tests.
//!
//! Two families of models are provided: a token-scale rater trained with
//! soft-target cross-entropy and decoded by probability weighting, and an
//! explainable gradient-boosted tree regressor with exact SHAP attributions.
//! Around them sit feature extraction, prompt rendering for LLM-derived
//! features, stacking ensembles and evaluation metrics.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data_model;
pub mod ensemble;
pub mod evaluation;
pub mod features;
pub mod gbtree;
pub mod prompting;
pub mod error;
pub mod soft_target;
pub mod toy_rater;

pub use error::{Error, Result};
