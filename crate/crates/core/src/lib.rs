//! Procedurally-fair classifier training and fairness evaluation.
//!
//! The crate trains small binary classifiers whose input-gradient
//! explanations are regularized to agree across matched cross-group pairs,
//! and measures both procedural fairness (an MMD permutation test over SHAP
//! explanations of matched pairs) and distributive fairness (DP, DI, EOP,
//! EOD). Synthetic data with a controllable bias parameter makes it possible
//! to separate bias coming from the data from bias in the decision process.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`data`] | datasets, CSV ingestion, preprocessing, synthetic generator, bias transforms |
//! | [`pairing`] | nearest-neighbour cross-group pairs |
//! | [`model`] | two-layer MLP with second-order gradients, logistic model, Adam |
//! | [`explain`] | Grad explanations, KernelSHAP, exact Shapley oracle |
//! | [`fairness`] | distributive metrics, MMD, permutation-test procedural metric |
//! | [`train`] | the regularized training loop and evaluation |
//! | [`linexp`] | linear-model sensitive-weight sweeps |
//! | [`harness`] | scenarios, result bundles, sweeps, file output |
//! | [`stats`] | rank-sum test, Spearman correlation, KS distance |

pub mod data;
pub mod error;
pub(crate) mod fsutil;
pub mod explain;
pub mod fairness;
pub mod harness;
pub mod linexp;
pub mod model;
pub mod pairing;
pub mod rng;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
