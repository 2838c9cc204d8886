//! Local, rule-based explanations for black-box binary classifiers on
//! tabular data.
//!
//! A synthetic neighborhood is evolved around the instance to explain,
//! labeled by the black box, and used to train a decision-tree surrogate.
//! The surrogate yields a decision rule satisfied by the instance and the
//! minimal-change counterfactual rules leading to the other outcome.

pub mod baselines;
pub mod blackbox;
pub mod data;
pub mod distance;
pub mod explanation;
pub mod fixtures;
pub mod genetic;
pub mod harness;
pub mod metrics;
pub mod rules;
pub mod tree;

pub use blackbox::{BlackBox, BlackBoxError, Predictor};
pub use data::{FeatureSchema, FeatureValue, Instance, Label};
pub use explanation::{explain, ExplainParams, Explanation};
