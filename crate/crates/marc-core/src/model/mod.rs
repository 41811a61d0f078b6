//! The differentiable-classifier contract plus everything needed to
//! exercise it without an external ML framework: reference models, toy
//! text/image classifiers, a planted-rationale dataset generator, a
//! trainer, and checkpoint IO.

mod checkpoint;
mod dataset;
mod image;
mod text;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelKind, ToyModel};
pub use dataset::{
    generate_planted_dataset, load_dataset_jsonl, save_dataset_jsonl, token_text, Sample,
    SampleFeatures, Task, IMAGE_SIDE, VOCAB_SIZE,
};
pub use image::ToyImageModel;
pub use text::{ToyTextModel, PAD_TOKEN};
pub use train::{train_toy_model, train_toy_model_with, TrainOptions, TrainReport, Trainable};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::tensor::FeatureTensor;

/// A differentiable classifier: logits out, exact input gradients back.
///
/// `vjp` must be the adjoint of the forward pass's linearization at
/// `input`; the toy models verify this against finite differences in their
/// tests.
pub trait Model<T: Real> {
    /// Feature-vector width the model expects at every position.
    fn feature_dim(&self) -> usize;

    fn num_classes(&self) -> usize;

    fn forward(&self, input: &FeatureTensor<T>) -> Result<Vec<T>>;

    /// Gradient of `<logits, cotangent>` with respect to the input.
    fn vjp(&self, input: &FeatureTensor<T>, cotangent: &[T]) -> Result<FeatureTensor<T>>;

    fn check_input(&self, input: &FeatureTensor<T>) -> Result<()> {
        if input.dim() != self.feature_dim() {
            return Err(Error::shape(
                format!("feature dim {}", self.feature_dim()),
                format!("feature dim {}", input.dim()),
            ));
        }
        Ok(())
    }

    fn check_cotangent(&self, cotangent: &[T]) -> Result<()> {
        if cotangent.len() != self.num_classes() {
            return Err(Error::shape(
                format!("{} classes", self.num_classes()),
                format!("{} cotangents", cotangent.len()),
            ));
        }
        Ok(())
    }
}

/// `logits = W . flatten(x)`; the closed-form reference for baseline tests.
#[derive(Debug, Clone)]
pub struct LinearModel<T> {
    /// One weight row per class over the flattened input.
    pub weights: Vec<Vec<T>>,
    dim: usize,
}

impl<T: Real> LinearModel<T> {
    pub fn new(weights: Vec<Vec<T>>, dim: usize) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid_argument("need at least one class row"));
        }
        let len = weights[0].len();
        if len == 0 || weights.iter().any(|r| r.len() != len) {
            return Err(Error::invalid_argument("class rows must be equal and non-empty"));
        }
        if len % dim != 0 {
            return Err(Error::invalid_argument("row length must be a multiple of dim"));
        }
        Ok(Self { weights, dim })
    }

    pub fn input_positions(&self) -> usize {
        self.weights[0].len() / self.dim
    }
}

impl<T: Real> Model<T> for LinearModel<T> {
    fn feature_dim(&self) -> usize {
        self.dim
    }

    fn num_classes(&self) -> usize {
        self.weights.len()
    }

    fn forward(&self, input: &FeatureTensor<T>) -> Result<Vec<T>> {
        self.check_input(input)?;
        if input.data().len() != self.weights[0].len() {
            return Err(Error::shape(
                format!("{} inputs", self.weights[0].len()),
                format!("{}", input.data().len()),
            ));
        }
        Ok(self
            .weights
            .iter()
            .map(|row| row.iter().zip(input.data()).map(|(&w, &x)| w * x).sum())
            .collect())
    }

    fn vjp(&self, input: &FeatureTensor<T>, cotangent: &[T]) -> Result<FeatureTensor<T>> {
        self.check_input(input)?;
        self.check_cotangent(cotangent)?;
        let mut grad = vec![T::zero(); self.weights[0].len()];
        for (row, &c) in self.weights.iter().zip(cotangent) {
            for (g, &w) in grad.iter_mut().zip(row) {
                *g += c * w;
            }
        }
        FeatureTensor::new(input.positions(), self.dim, grad)
    }
}

/// Ignores its input entirely; useful for degenerate-case checks.
#[derive(Debug, Clone)]
pub struct ConstantModel<T> {
    pub logits: Vec<T>,
    dim: usize,
}

impl<T: Real> ConstantModel<T> {
    pub fn new(logits: Vec<T>, dim: usize) -> Self {
        Self { logits, dim }
    }
}

impl<T: Real> Model<T> for ConstantModel<T> {
    fn feature_dim(&self) -> usize {
        self.dim
    }

    fn num_classes(&self) -> usize {
        self.logits.len()
    }

    fn forward(&self, input: &FeatureTensor<T>) -> Result<Vec<T>> {
        self.check_input(input)?;
        Ok(self.logits.clone())
    }

    fn vjp(&self, input: &FeatureTensor<T>, cotangent: &[T]) -> Result<FeatureTensor<T>> {
        self.check_input(input)?;
        self.check_cotangent(cotangent)?;
        Ok(FeatureTensor::zeros(input.positions(), self.dim))
    }
}
