//! marc-core: model-agnostic rationale extraction by soft input-mask
//! optimization, plus attribution baselines and a faithfulness/agreement
//! metric suite, runnable end-to-end against built-in toy classifiers.
//!
//! The pipeline: a [`model::Model`] exposes logits and an input-gradient
//! contract; [`optim::optimize_mask`] fits a per-feature mask that keeps
//! the classifier confident while blending everything else into an
//! uninformative background; [`baselines`] provides comparison attribution
//! methods; [`eval`] measures faithfulness and agreement with reference
//! rationales.
//!
//! All numeric code is generic over [`num::Real`] (`f32` or `f64`);
//! concrete aliases are exported below.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod mask;
pub mod model;
pub mod num;
pub mod objective;
pub mod optim;
pub mod pipeline;
pub mod render;
pub mod report;
pub mod space;
pub mod tensor;

pub use error::{Error, Result};
pub use num::Real;

pub type FeatureTensor32 = tensor::FeatureTensor<f32>;
pub type FeatureTensor64 = tensor::FeatureTensor<f64>;
pub type Mask32 = mask::Mask<f32>;
pub type Mask64 = mask::Mask<f64>;
pub type MaskParams32 = mask::MaskParams<f32>;
pub type MaskParams64 = mask::MaskParams<f64>;
pub type Background32 = objective::Background<f32>;
pub type Background64 = objective::Background<f64>;
pub type ScoreMap32 = baselines::ScoreMap<f32>;
pub type ScoreMap64 = baselines::ScoreMap<f64>;
pub type ToyModel32 = model::ToyModel<f32>;
pub type ToyModel64 = model::ToyModel<f64>;
