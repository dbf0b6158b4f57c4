//! Robust aggregation and training of regression ensembles whose base-regressor
//! outputs reach the aggregator through additive Gaussian channels.
//!
//! The crate is organised bottom-up:
//!
//! * [`types`] holds the shared domain types (datasets, prediction matrices,
//!   weights, noise models) and the elementary prediction operations.
//! * [`numerics`] provides the small dense linear algebra and normal-distribution
//!   helpers used by the aggregation formulas.
//! * [`trees`] implements CART regression trees and a bagging trainer.
//! * [`noise`] builds channel covariance profiles and samples correlated noise.
//! * [`mse`] and [`mae`] compute noise-aware aggregation coefficients for the
//!   squared and absolute losses.
//! * [`gradboost`] trains gradient-boosted ensembles whose stage coefficients
//!   account for the channel noise.
//! * [`harness`] runs k-fold Monte-Carlo experiments and reports metrics.

pub mod error;
pub mod gradboost;
pub mod harness;
pub mod mae;
pub mod mse;
pub mod noise;
pub mod numerics;
pub mod trees;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    build_prediction_matrix, noisy_predict, AggregationWeights, Dataset, EnsembleKind,
    EnsembleModel, Method, NoiseModel, PredictionMatrix, Predictor,
};
