//! Cross-entropy training for the toy models, on the same Adam used by the
//! mask optimizer.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::dataset::{Sample, SampleFeatures};
use crate::model::text::PAD_TOKEN;
use crate::model::Model;
use crate::num::Real;
use crate::optim::Adam;
use crate::tensor::FeatureTensor;

/// A model whose parameters can be flattened for the optimizer and that
/// knows how to consume raw [`Sample`]s.
pub trait Trainable<T: Real>: Model<T> {
    fn n_params(&self) -> usize;

    fn params_flat(&self) -> Vec<T>;

    fn set_params_flat(&mut self, flat: &[T]) -> Result<()>;

    /// Convert a dataset sample into the tensor the model consumes.
    fn input_from_sample(&self, sample: &Sample) -> Result<FeatureTensor<T>>;

    /// Cross-entropy loss and flat parameter gradient for one sample.
    fn loss_and_param_grads(&self, sample: &Sample) -> Result<(T, Vec<T>)>;

    /// Flat-parameter range holding the embedding table, when the model
    /// has one; [`TrainOptions::embedding_decay`] applies here.
    fn embedding_param_range(&self) -> Option<std::ops::Range<usize>> {
        None
    }

    fn predict(&self, sample: &Sample) -> Result<usize> {
        let logits = self.forward(&self.input_from_sample(sample)?)?;
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Accuracy on the held-out fifth of the data (on the training set when
    /// the dataset is too small to split).
    pub holdout_accuracy: f64,
    pub mean_loss_per_epoch: Vec<f64>,
    /// Dataset indices the accuracy was measured on.
    pub holdout_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub rng_seed: u64,
    /// Upper bound of the per-sample word-dropout rate (text samples
    /// only). Each training pass draws a rate uniformly from
    /// `[0, pad_dropout]` and replaces that fraction of tokens with PAD,
    /// so the classifier sees the whole masking spectrum from clean to
    /// almost fully padded. That makes it robust in the partially-masked
    /// regime the mask optimizer and the faithfulness metrics probe, and
    /// keeps heavily padded inputs close to uninformative. Evaluation
    /// always runs on clean samples.
    pub pad_dropout: f64,
    /// L2 penalty on the embedding table (text models only). Tokens that
    /// carry no label signal decay toward the zero PAD vector, so the
    /// trained model treats them as genuinely uninformative.
    pub embedding_decay: f64,
    /// L2 penalty on every parameter; prunes detectors that only fit
    /// sampling noise.
    pub weight_decay: f64,
    /// Probability of replacing each token with a uniformly random filler
    /// token during training (text samples only). Substitution decorrelates
    /// incidental token combinations from the labels, so the classifier
    /// keeps only pattern detectors that survive resampled contexts.
    pub token_substitution: f64,
}

impl TrainOptions {
    pub fn new(epochs: usize, lr: f64, rng_seed: u64) -> Self {
        Self {
            epochs,
            lr,
            rng_seed,
            pad_dropout: 0.0,
            embedding_decay: 0.0,
            weight_decay: 0.0,
            token_substitution: 0.0,
        }
    }

    pub fn with_pad_dropout(mut self, p: f64) -> Self {
        self.pad_dropout = p;
        self
    }

    pub fn with_embedding_decay(mut self, decay: f64) -> Self {
        self.embedding_decay = decay;
        self
    }

    pub fn with_weight_decay(mut self, decay: f64) -> Self {
        self.weight_decay = decay;
        self
    }

    pub fn with_token_substitution(mut self, p: f64) -> Self {
        self.token_substitution = p;
        self
    }
}

fn augment_sample(
    sample: &Sample,
    max_dropout: f64,
    substitution: f64,
    rng: &mut ChaCha8Rng,
) -> Sample {
    let mut out = sample.clone();
    if let SampleFeatures::Tokens(tokens) = &mut out.features {
        let rate = if max_dropout > 0.0 {
            rng.gen_range(0.0..max_dropout)
        } else {
            0.0
        };
        for t in tokens.iter_mut() {
            if max_dropout > 0.0 && rng.gen::<f64>() < rate {
                *t = PAD_TOKEN;
            } else if substitution > 0.0 && rng.gen::<f64>() < substitution {
                *t = rng.gen_range(1..=149);
            }
        }
    }
    out
}

/// Train in place with per-sample Adam updates. Deterministic given
/// `rng_seed`; the last fifth of a seeded shuffle is held out.
pub fn train_toy_model<T: Real, M: Trainable<T>>(
    model: &mut M,
    dataset: &[Sample],
    epochs: usize,
    lr: f64,
    rng_seed: u64,
) -> Result<TrainReport> {
    train_toy_model_with(model, dataset, TrainOptions::new(epochs, lr, rng_seed))
}

/// As [`train_toy_model`], with the full option set.
pub fn train_toy_model_with<T: Real, M: Trainable<T>>(
    model: &mut M,
    dataset: &[Sample],
    options: TrainOptions,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::invalid_argument("cannot train on an empty dataset"));
    }
    if !(0.0..1.0).contains(&options.pad_dropout) {
        return Err(Error::invalid_argument("pad_dropout must lie in [0, 1)"));
    }
    if !(0.0..1.0).contains(&options.token_substitution) {
        return Err(Error::invalid_argument(
            "token_substitution must lie in [0, 1)",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.rng_seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let holdout_len = dataset.len() / 5;
    let (train_idx, holdout_idx) = order.split_at(dataset.len() - holdout_len);
    let mut train_idx = train_idx.to_vec();

    let mut adam = Adam::<T>::new(model.n_params(), options.lr, 0.9, 0.999, 1e-8)?;
    let mut mean_loss_per_epoch = Vec::with_capacity(options.epochs);
    for _ in 0..options.epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &i in &train_idx {
            let augment = options.pad_dropout > 0.0 || options.token_substitution > 0.0;
            let (loss, mut grads) = if augment {
                let augmented = augment_sample(
                    &dataset[i],
                    options.pad_dropout,
                    options.token_substitution,
                    &mut rng,
                );
                model.loss_and_param_grads(&augmented)?
            } else {
                model.loss_and_param_grads(&dataset[i])?
            };
            loss_sum += loss.as_f64();
            let mut flat = model.params_flat();
            if options.weight_decay > 0.0 {
                let decay = T::of(options.weight_decay);
                for (g, &p) in grads.iter_mut().zip(&flat) {
                    *g += decay * p;
                }
            }
            if options.embedding_decay > 0.0 {
                if let Some(range) = model.embedding_param_range() {
                    let decay = T::of(options.embedding_decay);
                    for k in range {
                        grads[k] += decay * flat[k];
                    }
                }
            }
            adam.step(&mut flat, &grads)?;
            model.set_params_flat(&flat)?;
        }
        mean_loss_per_epoch.push(loss_sum / train_idx.len() as f64);
    }

    let eval_idx: &[usize] = if holdout_idx.is_empty() {
        &train_idx
    } else {
        holdout_idx
    };
    let mut correct = 0;
    for &i in eval_idx {
        if model.predict(&dataset[i])? == dataset[i].label {
            correct += 1;
        }
    }
    Ok(TrainReport {
        holdout_accuracy: correct as f64 / eval_idx.len() as f64,
        mean_loss_per_epoch,
        holdout_indices: eval_idx.to_vec(),
    })
}
