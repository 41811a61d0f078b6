//! Grayscale-grid classifier: one 3x3 convolution (tanh), 2x2 mean
//! pooling, linear head. Input is a `height*width` x 1 feature tensor in
//! row-major pixel order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::dataset::{Sample, SampleFeatures};
use crate::model::train::Trainable;
use crate::model::Model;
use crate::num::Real;
use crate::tensor::FeatureTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyImageModel<T> {
    pub(crate) height: usize,
    pub(crate) width: usize,
    pub(crate) channels: usize,
    pub(crate) classes: usize,
    pub(crate) conv_w: Vec<T>, // channels x 3 x 3
    pub(crate) conv_b: Vec<T>, // channels
    pub(crate) out_w: Vec<T>,  // classes x (channels * height/2 * width/2)
    pub(crate) out_b: Vec<T>,  // classes
}

struct Activations<T> {
    conv_act: Vec<T>, // channels x height x width, post-tanh
    pooled: Vec<T>,   // channels x height/2 x width/2
    logits: Vec<T>,
}

impl<T: Real> ToyImageModel<T> {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if height < 2 || width < 2 || height % 2 != 0 || width % 2 != 0 {
            return Err(Error::invalid_argument(
                "grid dimensions must be even and at least 2",
            ));
        }
        if channels == 0 || classes < 2 {
            return Err(Error::invalid_argument("degenerate image model dimensions"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pooled_len = channels * (height / 2) * (width / 2);
        let conv_scale = 1.0 / 3.0;
        let out_scale = 1.0 / (pooled_len as f64).sqrt();
        let conv_w = (0..channels * 9)
            .map(|_| T::of(rng.gen_range(-conv_scale..conv_scale)))
            .collect();
        let out_w = (0..classes * pooled_len)
            .map(|_| T::of(rng.gen_range(-out_scale..out_scale)))
            .collect();
        Ok(Self {
            height,
            width,
            channels,
            classes,
            conv_w,
            conv_b: vec![T::zero(); channels],
            out_w,
            out_b: vec![T::zero(); classes],
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn check_grid(&self, input: &FeatureTensor<T>) -> Result<()> {
        if input.positions() != self.height * self.width {
            return Err(Error::shape(
                format!("{} pixels", self.height * self.width),
                format!("{}", input.positions()),
            ));
        }
        Ok(())
    }

    fn activations(&self, input: &FeatureTensor<T>) -> Activations<T> {
        let (h, w, ch) = (self.height, self.width, self.channels);
        let (ph, pw) = (h / 2, w / 2);
        let px = input.data();
        let mut conv_act = vec![T::zero(); ch * h * w];
        for c in 0..ch {
            for r in 0..h {
                for col in 0..w {
                    let mut acc = self.conv_b[c];
                    for dr in -1_isize..=1 {
                        for dc in -1_isize..=1 {
                            let rr = r as isize + dr;
                            let cc = col as isize + dc;
                            if rr < 0 || rr >= h as isize || cc < 0 || cc >= w as isize {
                                continue;
                            }
                            let k = (dr + 1) as usize * 3 + (dc + 1) as usize;
                            acc += self.conv_w[c * 9 + k] * px[rr as usize * w + cc as usize];
                        }
                    }
                    conv_act[(c * h + r) * w + col] = acc.tanh();
                }
            }
        }
        let quarter = T::of(0.25);
        let mut pooled = vec![T::zero(); ch * ph * pw];
        for c in 0..ch {
            for r in 0..ph {
                for col in 0..pw {
                    let base = c * h * w;
                    let sum = conv_act[base + (2 * r) * w + 2 * col]
                        + conv_act[base + (2 * r) * w + 2 * col + 1]
                        + conv_act[base + (2 * r + 1) * w + 2 * col]
                        + conv_act[base + (2 * r + 1) * w + 2 * col + 1];
                    pooled[(c * ph + r) * pw + col] = sum * quarter;
                }
            }
        }
        let logits: Vec<T> = (0..self.classes)
            .map(|cl| {
                let mut acc = self.out_b[cl];
                let base = cl * pooled.len();
                for (i, &p) in pooled.iter().enumerate() {
                    acc += self.out_w[base + i] * p;
                }
                acc
            })
            .collect();
        Activations {
            conv_act,
            pooled,
            logits,
        }
    }

    fn backward(
        &self,
        input: &FeatureTensor<T>,
        acts: &Activations<T>,
        cotangent: &[T],
        want_params: bool,
    ) -> (FeatureTensor<T>, Option<Vec<T>>) {
        let (h, w, ch) = (self.height, self.width, self.channels);
        let (ph, pw) = (h / 2, w / 2);
        let one = T::one();
        let quarter = T::of(0.25);
        let px = input.data();

        let mut d_pooled = vec![T::zero(); acts.pooled.len()];
        for cl in 0..self.classes {
            let base = cl * d_pooled.len();
            for (i, d) in d_pooled.iter_mut().enumerate() {
                *d += cotangent[cl] * self.out_w[base + i];
            }
        }

        let mut d_input = FeatureTensor::zeros(h * w, 1);
        let mut d_params = if want_params {
            Some(vec![T::zero(); self.n_params()])
        } else {
            None
        };
        let off_conv_b = ch * 9;
        let off_out_w = off_conv_b + ch;
        let off_out_b = off_out_w + self.classes * acts.pooled.len();

        for c in 0..ch {
            for r in 0..h {
                for col in 0..w {
                    let a = acts.conv_act[(c * h + r) * w + col];
                    let d_act = d_pooled[(c * ph + r / 2) * pw + col / 2] * quarter;
                    let d_pre = d_act * (one - a * a);
                    if d_pre == T::zero() {
                        continue;
                    }
                    for dr in -1_isize..=1 {
                        for dc in -1_isize..=1 {
                            let rr = r as isize + dr;
                            let cc = col as isize + dc;
                            if rr < 0 || rr >= h as isize || cc < 0 || cc >= w as isize {
                                continue;
                            }
                            let k = (dr + 1) as usize * 3 + (dc + 1) as usize;
                            let pix = rr as usize * w + cc as usize;
                            d_input.data_mut()[pix] += d_pre * self.conv_w[c * 9 + k];
                            if let Some(dp) = d_params.as_mut() {
                                dp[c * 9 + k] += d_pre * px[pix];
                            }
                        }
                    }
                    if let Some(dp) = d_params.as_mut() {
                        dp[off_conv_b + c] += d_pre;
                    }
                }
            }
        }
        if let Some(dp) = d_params.as_mut() {
            for cl in 0..self.classes {
                for (i, &p) in acts.pooled.iter().enumerate() {
                    dp[off_out_w + cl * acts.pooled.len() + i] += cotangent[cl] * p;
                }
                dp[off_out_b + cl] += cotangent[cl];
            }
        }
        (d_input, d_params)
    }
}

impl<T: Real> Model<T> for ToyImageModel<T> {
    fn feature_dim(&self) -> usize {
        1
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn forward(&self, input: &FeatureTensor<T>) -> Result<Vec<T>> {
        self.check_input(input)?;
        self.check_grid(input)?;
        Ok(self.activations(input).logits)
    }

    fn vjp(&self, input: &FeatureTensor<T>, cotangent: &[T]) -> Result<FeatureTensor<T>> {
        self.check_input(input)?;
        self.check_grid(input)?;
        self.check_cotangent(cotangent)?;
        let acts = self.activations(input);
        Ok(self.backward(input, &acts, cotangent, false).0)
    }
}

impl<T: Real> Trainable<T> for ToyImageModel<T> {
    fn n_params(&self) -> usize {
        let pooled_len = self.channels * (self.height / 2) * (self.width / 2);
        self.channels * 9 + self.channels + self.classes * pooled_len + self.classes
    }

    fn params_flat(&self) -> Vec<T> {
        let mut flat = Vec::with_capacity(self.n_params());
        flat.extend_from_slice(&self.conv_w);
        flat.extend_from_slice(&self.conv_b);
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
        let pooled_len = self.channels * (self.height / 2) * (self.width / 2);
        let mut cursor = 0;
        let mut take = |len: usize| {
            let s = &flat[cursor..cursor + len];
            cursor += len;
            s.to_vec()
        };
        self.conv_w = take(self.channels * 9);
        self.conv_b = take(self.channels);
        self.out_w = take(self.classes * pooled_len);
        self.out_b = take(self.classes);
        Ok(())
    }

    fn input_from_sample(&self, sample: &Sample) -> Result<FeatureTensor<T>> {
        match &sample.features {
            SampleFeatures::Grid {
                height,
                width,
                values,
            } => {
                if *height != self.height || *width != self.width {
                    return Err(Error::shape(
                        format!("{}x{} grid", self.height, self.width),
                        format!("{height}x{width}"),
                    ));
                }
                FeatureTensor::new(height * width, 1, values.iter().map(|&v| T::of(v)).collect())
            }
            SampleFeatures::Tokens(_) => Err(Error::invalid_argument(
                "image model expects grid features",
            )),
        }
    }

    fn loss_and_param_grads(&self, sample: &Sample) -> Result<(T, Vec<T>)> {
        if sample.label >= self.classes {
            return Err(Error::MalformedData(format!(
                "label {} outside {} classes",
                sample.label, self.classes
            )));
        }
        let input = self.input_from_sample(sample)?;
        let acts = self.activations(&input);
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
        let (_, d_params) = self.backward(&input, &acts, &cotangent, true);
        Ok((loss, d_params.expect("requested parameter gradients")))
    }
}
