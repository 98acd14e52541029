//! Gaussian aggregating forecaster for online multiclass logistic regression,
//! with its exact squared-loss specialization, proper baselines, a regret
//! harness and numerical checks of the underlying assumptions.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod gaf;
pub mod harness;
pub mod losses;
pub mod numlin;
pub mod verify;

pub use error::{Error, Result};
pub use gaf::{Gaf, GafPrediction, LearnerConfig, VawRidge, VawTerm};
pub use losses::{InputFeatures, SimplexVector};
pub use numlin::{LowRankIncrement, PdMatrixState};
