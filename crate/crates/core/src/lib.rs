//! Selectively private language-model training with privacy auditing.
//!
//! A word-level LSTM language model is trained so that only sequences a
//! context-aware detector flags as sensitive receive differentially private
//! updates. Trained models are audited with canary exposure and
//! perplexity-ranking membership inference.

pub mod attacks;
pub mod corpus;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod lm;
pub mod privacy;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision model parameters.
pub type LmParams = lm::LmParameters<f64>;
/// Single-precision model parameters.
pub type LmParamsF32 = lm::LmParameters<f32>;
pub type Grad = lm::Gradient<f64>;
pub type GradF32 = lm::Gradient<f32>;
pub type Privacy = privacy::PrivacySpec<f64>;
pub type Accountant = privacy::AccountantState<f64>;
