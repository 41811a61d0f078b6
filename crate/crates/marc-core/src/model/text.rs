//! Token-sequence classifier: embedding table, window-3 convolution,
//! log-sum-exp pooling, one hidden layer, linear head. All activations are
//! tanh and the pooling is smooth, so every gradient path is
//! differentiable.
//!
//! Pooling is log-sum-exp rather than mean so each channel acts as a soft
//! "does any window match" detector: the pooled value tracks the strongest
//! window activations and is nearly invariant to how many uninformative
//! windows surround them. That keeps the classifier's evidence concentrated
//! on the phrase windows it actually detects.
//!
//! The model consumes embeddings, not token ids, so that convex blending
//! toward a background is well-defined; masking interpolates embeddings
//! toward the PAD embedding, which is pinned to the zero vector and never
//! trained.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::dataset::{Sample, SampleFeatures};
use crate::model::train::Trainable;
use crate::model::Model;
use crate::num::Real;
use crate::tensor::FeatureTensor;

pub const PAD_TOKEN: u32 = 0;

/// Inverse temperature of the log-sum-exp pooling.
const POOL_SHARPNESS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTextModel<T> {
    pub(crate) vocab: usize,
    pub(crate) embed_dim: usize,
    pub(crate) channels: usize,
    pub(crate) hidden: usize,
    pub(crate) classes: usize,
    // parameter tensors, flattened row-major
    pub(crate) embedding: Vec<T>, // vocab x embed_dim, PAD row all zero
    pub(crate) conv_w: Vec<T>,    // channels x 3 x embed_dim
    pub(crate) conv_b: Vec<T>,    // channels
    pub(crate) hid_w: Vec<T>,     // hidden x channels
    pub(crate) hid_b: Vec<T>,     // hidden
    pub(crate) out_w: Vec<T>,     // classes x hidden
    pub(crate) out_b: Vec<T>,     // classes
}

struct Activations<T> {
    conv_act: Vec<T>,     // n x channels, post-tanh
    pool_weight: Vec<T>,  // n x channels, softmax weights of the pooling
    pooled: Vec<T>,       // channels
    hid_act: Vec<T>,      // hidden, post-tanh
    logits: Vec<T>,
}

impl<T: Real> ToyTextModel<T> {
    pub fn new(
        vocab: usize,
        embed_dim: usize,
        channels: usize,
        hidden: usize,
        classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if vocab < 2 || embed_dim == 0 || channels == 0 || hidden == 0 || classes < 2 {
            return Err(Error::invalid_argument("degenerate text model dimensions"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |count: usize, scale: f64| -> Vec<T> {
            (0..count)
                .map(|_| T::of(rng.gen_range(-scale..scale)))
                .collect()
        };
        let mut embedding = uniform(vocab * embed_dim, 0.5);
        // PAD embedding frozen at zero
        for v in &mut embedding[..embed_dim] {
            *v = T::zero();
        }
        let conv_scale = 1.0 / ((3 * embed_dim) as f64).sqrt();
        let conv_w = uniform(channels * 3 * embed_dim, conv_scale);
        let hid_scale = 1.0 / (channels as f64).sqrt();
        let hid_w = uniform(hidden * channels, hid_scale);
        let out_scale = 1.0 / (hidden as f64).sqrt();
        let out_w = uniform(classes * hidden, out_scale);
        Ok(Self {
            vocab,
            embed_dim,
            channels,
            hidden,
            classes,
            embedding,
            conv_w,
            conv_b: vec![T::zero(); channels],
            hid_w,
            hid_b: vec![T::zero(); hidden],
            out_w,
            out_b: vec![T::zero(); classes],
        })
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Look up embeddings for a token sequence.
    pub fn embed(&self, tokens: &[u32]) -> Result<FeatureTensor<T>> {
        if tokens.is_empty() {
            return Err(Error::invalid_argument("empty token sequence"));
        }
        let mut data = Vec::with_capacity(tokens.len() * self.embed_dim);
        for &t in tokens {
            let t = t as usize;
            if t >= self.vocab {
                return Err(Error::MalformedData(format!(
                    "token id {t} outside vocabulary of {}",
                    self.vocab
                )));
            }
            data.extend_from_slice(&self.embedding[t * self.embed_dim..(t + 1) * self.embed_dim]);
        }
        FeatureTensor::new(tokens.len(), self.embed_dim, data)
    }

    fn activations(&self, input: &FeatureTensor<T>) -> Activations<T> {
        let n = input.positions();
        let (ed, ch) = (self.embed_dim, self.channels);
        let mut conv_act = vec![T::zero(); n * ch];
        for i in 0..n {
            for c in 0..ch {
                let mut acc = self.conv_b[c];
                for k in 0..3usize {
                    let pos = i as isize + k as isize - 1;
                    if pos < 0 || pos >= n as isize {
                        continue; // zero padding
                    }
                    let row = input.position(pos as usize);
                    let wbase = (c * 3 + k) * ed;
                    for e in 0..ed {
                        acc += self.conv_w[wbase + e] * row[e];
                    }
                }
                conv_act[i * ch + c] = acc.tanh();
            }
        }
        // log-sum-exp pooling per channel:
        //   pooled_c = (1/beta) * ln( (1/n) sum_i exp(beta * h_ic) )
        let beta = T::of(POOL_SHARPNESS);
        let mut pooled = vec![T::zero(); ch];
        let mut pool_weight = vec![T::zero(); n * ch];
        for c in 0..ch {
            let mut max = T::neg_infinity();
            for i in 0..n {
                max = max.max(conv_act[i * ch + c]);
            }
            let mut denom = T::zero();
            for i in 0..n {
                let e = (beta * (conv_act[i * ch + c] - max)).exp();
                pool_weight[i * ch + c] = e;
                denom += e;
            }
            for i in 0..n {
                pool_weight[i * ch + c] /= denom;
            }
            pooled[c] = max + ((denom / T::of(n as f64)).ln()) / beta;
        }
        let hid_act: Vec<T> = (0..self.hidden)
            .map(|u| {
                let mut acc = self.hid_b[u];
                for c in 0..ch {
                    acc += self.hid_w[u * ch + c] * pooled[c];
                }
                acc.tanh()
            })
            .collect();
        let logits: Vec<T> = (0..self.classes)
            .map(|cl| {
                let mut acc = self.out_b[cl];
                for u in 0..self.hidden {
                    acc += self.out_w[cl * self.hidden + u] * hid_act[u];
                }
                acc
            })
            .collect();
        Activations {
            conv_act,
            pool_weight,
            pooled,
            hid_act,
            logits,
        }
    }

    /// Backward pass shared by the input vjp and the trainer. Returns the
    /// input gradient and, when `want_params` is set, the flat parameter
    /// gradient in [`Trainable::params_flat`] order.
    fn backward(
        &self,
        input: &FeatureTensor<T>,
        acts: &Activations<T>,
        cotangent: &[T],
        want_params: bool,
    ) -> (FeatureTensor<T>, Option<Vec<T>>) {
        let n = input.positions();
        let (ed, ch) = (self.embed_dim, self.channels);
        let one = T::one();

        let mut d_hid = vec![T::zero(); self.hidden];
        for cl in 0..self.classes {
            for u in 0..self.hidden {
                d_hid[u] += cotangent[cl] * self.out_w[cl * self.hidden + u];
            }
        }
        let d_hid_pre: Vec<T> = d_hid
            .iter()
            .zip(&acts.hid_act)
            .map(|(&g, &a)| g * (one - a * a))
            .collect();
        let mut d_pooled = vec![T::zero(); ch];
        for u in 0..self.hidden {
            for c in 0..ch {
                d_pooled[c] += d_hid_pre[u] * self.hid_w[u * ch + c];
            }
        }

        let mut d_input = FeatureTensor::zeros(n, ed);
        let mut d_params = if want_params {
            Some(vec![T::zero(); self.n_params()])
        } else {
            None
        };
        // flat layout offsets: embedding | conv_w | conv_b | hid_w | hid_b | out_w | out_b
        let off_conv_w = self.vocab * ed;
        let off_conv_b = off_conv_w + ch * 3 * ed;
        let off_hid_w = off_conv_b + ch;
        let off_hid_b = off_hid_w + self.hidden * ch;
        let off_out_w = off_hid_b + self.hidden;
        let off_out_b = off_out_w + self.classes * self.hidden;

        for i in 0..n {
            for c in 0..ch {
                let a = acts.conv_act[i * ch + c];
                let d_pre = d_pooled[c] * acts.pool_weight[i * ch + c] * (one - a * a);
                if d_pre == T::zero() {
                    continue;
                }
                for k in 0..3usize {
                    let pos = i as isize + k as isize - 1;
                    if pos < 0 || pos >= n as isize {
                        continue;
                    }
                    let pos = pos as usize;
                    let wbase = (c * 3 + k) * ed;
                    let row = input.position(pos);
                    let grad_row = d_input.position_mut(pos);
                    for e in 0..ed {
                        grad_row[e] += d_pre * self.conv_w[wbase + e];
                    }
                    if let Some(dp) = d_params.as_mut() {
                        for e in 0..ed {
                            dp[off_conv_w + wbase + e] += d_pre * row[e];
                        }
                    }
                }
                if let Some(dp) = d_params.as_mut() {
                    dp[off_conv_b + c] += d_pre;
                }
            }
        }
        if let Some(dp) = d_params.as_mut() {
            for u in 0..self.hidden {
                for c in 0..ch {
                    dp[off_hid_w + u * ch + c] += d_hid_pre[u] * acts.pooled[c];
                }
                dp[off_hid_b + u] += d_hid_pre[u];
            }
            for cl in 0..self.classes {
                for u in 0..self.hidden {
                    dp[off_out_w + cl * self.hidden + u] += cotangent[cl] * acts.hid_act[u];
                }
                dp[off_out_b + cl] += cotangent[cl];
            }
        }
        (d_input, d_params)
    }
}

impl<T: Real> Model<T> for ToyTextModel<T> {
    fn feature_dim(&self) -> usize {
        self.embed_dim
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn forward(&self, input: &FeatureTensor<T>) -> Result<Vec<T>> {
        self.check_input(input)?;
        Ok(self.activations(input).logits)
    }

    fn vjp(&self, input: &FeatureTensor<T>, cotangent: &[T]) -> Result<FeatureTensor<T>> {
        self.check_input(input)?;
        self.check_cotangent(cotangent)?;
        let acts = self.activations(input);
        Ok(self.backward(input, &acts, cotangent, false).0)
    }
}

impl<T: Real> Trainable<T> for ToyTextModel<T> {
    fn n_params(&self) -> usize {
        self.vocab * self.embed_dim
            + self.channels * 3 * self.embed_dim
            + self.channels
            + self.hidden * self.channels
            + self.hidden
            + self.classes * self.hidden
            + self.classes
    }

    fn params_flat(&self) -> Vec<T> {
        let mut flat = Vec::with_capacity(self.n_params());
        flat.extend_from_slice(&self.embedding);
        flat.extend_from_slice(&self.conv_w);
        flat.extend_from_slice(&self.conv_b);
        flat.extend_from_slice(&self.hid_w);
        flat.extend_from_slice(&self.hid_b);
        flat.extend_from_slice(&self.out_w);
        flat.extend_from_slice(&self.out_b);
        flat
    }

    fn set_params_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::shape(
                format!("{} params", self.n_params()),
                format!("{}", flat.len()),
            ));
        }
        let mut cursor = 0;
        let mut take = |len: usize| {
            let s = &flat[cursor..cursor + len];
            cursor += len;
            s.to_vec()
        };
        self.embedding = take(self.vocab * self.embed_dim);
        self.conv_w = take(self.channels * 3 * self.embed_dim);
        self.conv_b = take(self.channels);
        self.hid_w = take(self.hidden * self.channels);
        self.hid_b = take(self.hidden);
        self.out_w = take(self.classes * self.hidden);
        self.out_b = take(self.classes);
        // PAD stays the zero vector no matter what was written
        for v in &mut self.embedding[..self.embed_dim] {
            *v = T::zero();
        }
        Ok(())
    }

    fn input_from_sample(&self, sample: &Sample) -> Result<FeatureTensor<T>> {
        match &sample.features {
            SampleFeatures::Tokens(tokens) => self.embed(tokens),
            SampleFeatures::Grid { .. } => Err(Error::invalid_argument(
                "text model expects token features",
            )),
        }
    }

    fn embedding_param_range(&self) -> Option<std::ops::Range<usize>> {
        Some(0..self.vocab * self.embed_dim)
    }

    fn loss_and_param_grads(&self, sample: &Sample) -> Result<(T, Vec<T>)> {
        let tokens = match &sample.features {
            SampleFeatures::Tokens(tokens) => tokens,
            SampleFeatures::Grid { .. } => {
                return Err(Error::invalid_argument("text model expects token features"))
            }
        };
        if sample.label >= self.classes {
            return Err(Error::MalformedData(format!(
                "label {} outside {} classes",
                sample.label, self.classes
            )));
        }
        let input = self.embed(tokens)?;
        let acts = self.activations(&input);
        // cross-entropy on logits
        let max = acts.logits.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max
            + acts
                .logits
                .iter()
                .map(|&l| (l - max).exp())
                .sum::<T>()
                .ln();
        let loss = lse - acts.logits[sample.label];
        let mut cotangent: Vec<T> = acts.logits.iter().map(|&l| (l - lse).exp()).collect();
        cotangent[sample.label] -= T::one();

        let (d_input, d_params) = self.backward(&input, &acts, &cotangent, true);
        let mut grads = d_params.expect("requested parameter gradients");
        // scatter the input gradient into embedding rows; PAD frozen
        let ed = self.embed_dim;
        for (i, &t) in tokens.iter().enumerate() {
            if t == PAD_TOKEN {
                continue;
            }
            let base = t as usize * ed;
            let src = d_input.position(i);
            for e in 0..ed {
                grads[base + e] += src[e];
            }
        }
        Ok((loss, grads))
    }
}
