//! Masked inputs and the full optimization objective.
//!
//! The loss for one sample averages, over the uninformative backgrounds,
//! the negated score of the masked input plus the score of its complement,
//! then adds the sparsity, spread, and (on grids) neighbor regularizers:
//!
//! ```text
//! loss = mean_b [ -L(x_masked(b)) + L(x_complement(b)) ]
//!      + alpha_lambda * mean(lambda)^2
//!      - alpha_sigma  * mean(log sigma)
//!      + alpha_nb     * mean over neighbor pairs (lambda_p - lambda_q)^2
//! ```
//!
//! Gradients flow from the model's input gradient through the `(x - b)`
//! blending factor into the mask vjp; positions whose mask value was
//! flipped for the step carry no gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{compute_mask, mask_vjp, Mask, MaskParams};
use crate::model::Model;
use crate::num::{sigmoid, softplus, Real};
use crate::optim::{perturb, PerturbConfig};
use crate::space::FeatureSpace;
use crate::tensor::FeatureTensor;

/// Probabilities are floored here before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// An uninformative input of the same shape as the sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Background<T> {
    pub values: FeatureTensor<T>,
    pub label: String,
}

impl<T: Real> Background<T> {
    pub fn new(values: FeatureTensor<T>, label: impl Into<String>) -> Self {
        Self {
            values,
            label: label.into(),
        }
    }
}

/// How logits are turned into the scalar score `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Log-likelihood of the class: highlights class-discriminative evidence.
    LogSoftmax,
    /// Log of the logit's sigmoid: highlights class-indicative evidence.
    LogSigmoid,
    /// Log of `w * softmax_c + (1 - w) * sigmoid(logit_c)`.
    LogMixture { softmax_weight: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub mode: ScoreMode,
    pub class_index: usize,
}

impl ScoringConfig {
    pub fn log_softmax(class_index: usize) -> Self {
        Self {
            mode: ScoreMode::LogSoftmax,
            class_index,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ScoreMode::LogMixture { softmax_weight } = self.mode {
            if !(0.0..=1.0).contains(&softmax_weight) {
                return Err(Error::invalid_argument("mixture weight must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Regularizer strengths; all non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegWeights {
    pub alpha_lambda: f64,
    pub alpha_sigma: f64,
    pub alpha_nb: f64,
}

impl RegWeights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_lambda < 0.0 || self.alpha_sigma < 0.0 || self.alpha_nb < 0.0 {
            return Err(Error::invalid_argument("regularizer weights must be >= 0"));
        }
        Ok(())
    }
}

/// `x_masked_j = lambda_j * x_j + (1 - lambda_j) * b_j`, with `lambda_j`
/// broadcast across the feature dimensions of position `j`.
pub fn blend_input<T: Real>(
    x: &FeatureTensor<T>,
    b: &FeatureTensor<T>,
    mask: &Mask<T>,
) -> Result<FeatureTensor<T>> {
    if !x.same_shape(b) {
        return Err(Error::shape(x.shape_of(), b.shape_of()));
    }
    if mask.len() != x.positions() {
        return Err(Error::shape(
            format!("{} mask values", x.positions()),
            format!("{}", mask.len()),
        ));
    }
    let mut out = x.clone();
    for j in 0..x.positions() {
        let l = mask.lambda()[j];
        let keep = l;
        let fill = T::one() - l;
        let bj = b.position(j);
        for (k, v) in out.position_mut(j).iter_mut().enumerate() {
            *v = keep * *v + fill * bj[k];
        }
    }
    Ok(out)
}

/// Complement of the rationale: blending with mask `1 - lambda`.
pub fn blend_complement<T: Real>(
    x: &FeatureTensor<T>,
    b: &FeatureTensor<T>,
    mask: &Mask<T>,
) -> Result<FeatureTensor<T>> {
    let inverted = Mask::from_lambda(mask.lambda().iter().map(|&l| T::one() - l).collect())?;
    blend_input(x, b, &inverted)
}

fn softmax_probs<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Scalar score and its analytic gradient with respect to the logits.
pub fn score<T: Real>(logits: &[T], cfg: &ScoringConfig) -> Result<(T, Vec<T>)> {
    cfg.validate()?;
    if logits.is_empty() {
        return Err(Error::invalid_argument("logits must be non-empty"));
    }
    let c = cfg.class_index;
    if c >= logits.len() {
        return Err(Error::invalid_argument(format!(
            "class index {c} out of range for {} logits",
            logits.len()
        )));
    }
    match cfg.mode {
        ScoreMode::LogSoftmax => {
            let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max
                + logits
                    .iter()
                    .map(|&l| (l - max).exp())
                    .sum::<T>()
                    .ln();
            let probs = softmax_probs(logits);
            let mut grad: Vec<T> = probs.iter().map(|&p| -p).collect();
            grad[c] += T::one();
            Ok((logits[c] - lse, grad))
        }
        ScoreMode::LogSigmoid => {
            let value = -softplus(-logits[c]);
            let mut grad = vec![T::zero(); logits.len()];
            grad[c] = sigmoid(-logits[c]); // 1 - sigmoid(l_c)
            Ok((value, grad))
        }
        ScoreMode::LogMixture { softmax_weight } => {
            let w = T::of(softmax_weight);
            let probs = softmax_probs(logits);
            let sig_c = sigmoid(logits[c]);
            let p_mix = (w * probs[c] + (T::one() - w) * sig_c).max(T::of(PROB_FLOOR));
            let mut grad: Vec<T> = probs
                .iter()
                .enumerate()
                .map(|(k, &pk)| {
                    let delta = if k == c { T::one() } else { T::zero() };
                    let d_soft = probs[c] * (delta - pk);
                    let d_sig = delta * sig_c * (T::one() - sig_c);
                    (w * d_soft + (T::one() - w) * d_sig) / p_mix
                })
                .collect();
            // clamp is flat when it engages
            if w * probs[c] + (T::one() - w) * sig_c < T::of(PROB_FLOOR) {
                grad.iter_mut().for_each(|g| *g = T::zero());
            }
            Ok((p_mix.ln(), grad))
        }
    }
}

/// Sparsity term `alpha * mean(lambda)^2` and its gradient.
pub fn reg_lambda<T: Real>(lambda: &[T], alpha: f64) -> (T, Vec<T>) {
    let n = lambda.len();
    if n == 0 {
        return (T::zero(), Vec::new());
    }
    let a = T::of(alpha);
    let nt = T::of(n as f64);
    let mean = lambda.iter().copied().sum::<T>() / nt;
    let value = a * mean * mean;
    let g = T::of(2.0) * a * mean / nt;
    (value, vec![g; n])
}

/// Spread term `-alpha * mean(log sigma)` and its gradient.
pub fn reg_sigma<T: Real>(sigma: &[T], alpha: f64) -> (T, Vec<T>) {
    let n = sigma.len();
    if n == 0 {
        return (T::zero(), Vec::new());
    }
    let a = T::of(alpha);
    let nt = T::of(n as f64);
    let value = -a * sigma.iter().map(|&s| s.ln()).sum::<T>() / nt;
    let grad = sigma.iter().map(|&s| -a / (nt * s)).collect();
    (value, grad)
}

/// Smoothness term for grids: `alpha * mean over unordered 8-connected
/// pairs of (lambda_p - lambda_q)^2`. Rejects chain spaces.
pub fn reg_neighbors<T: Real>(
    space: &FeatureSpace,
    lambda: &[T],
    alpha: f64,
) -> Result<(T, Vec<T>)> {
    if !space.is_grid() {
        return Err(Error::invalid_argument(
            "neighbor regularizer is defined on grids only",
        ));
    }
    if lambda.len() != space.len() {
        return Err(Error::shape(
            format!("{} mask values", space.len()),
            format!("{}", lambda.len()),
        ));
    }
    let pairs = space.neighbor_pairs();
    let mut grad = vec![T::zero(); lambda.len()];
    if pairs.is_empty() {
        return Ok((T::zero(), grad));
    }
    let a = T::of(alpha);
    let count = T::of(pairs.len() as f64);
    let mut value = T::zero();
    for (p, q) in pairs {
        let diff = lambda[p] - lambda[q];
        value += diff * diff;
        let g = T::of(2.0) * a * diff / count;
        grad[p] += g;
        grad[q] -= g;
    }
    Ok((a * value / count, grad))
}

/// Settings of the loss itself (scoring, regularizers, ablation switch,
/// mask truncation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub scoring: ScoringConfig,
    pub regs: RegWeights,
    /// Keep the complement score term; switched off for ablations.
    pub include_complement: bool,
    pub truncation_eps: f64,
}

/// Loss value, slot gradients, and the term breakdown for one evaluation.
#[derive(Debug, Clone)]
pub struct ObjectiveEval<T> {
    pub loss: T,
    pub grad_w: Vec<T>,
    pub grad_sigma: Vec<T>,
    /// Background-averaged `-L(x_masked) [+ L(x_complement)]`.
    pub score_term: T,
    pub reg_lambda_term: T,
    pub reg_sigma_term: T,
    pub reg_neighbors_term: T,
    /// The perturbation-free mask the step was evaluated around.
    pub lambda: Mask<T>,
}

/// Evaluate the full objective and its gradient with respect to `(w, sigma)`.
///
/// Perturbations (noise and mask flips) are drawn freshly for every
/// background evaluation; pass [`PerturbConfig::disabled`] for the exact
/// objective.
#[allow(clippy::too_many_arguments)]
pub fn total_objective<T: Real, M: Model<T> + ?Sized, R: Rng + ?Sized>(
    model: &M,
    x: &FeatureTensor<T>,
    backgrounds: &[Background<T>],
    space: &FeatureSpace,
    params: &MaskParams<T>,
    cfg: &ObjectiveConfig,
    perturb_cfg: &PerturbConfig,
    rng: &mut R,
) -> Result<ObjectiveEval<T>> {
    if backgrounds.is_empty() {
        return Err(Error::invalid_argument("need at least one background"));
    }
    cfg.scoring.validate()?;
    cfg.regs.validate()?;
    for b in backgrounds {
        if !b.values.same_shape(x) {
            return Err(Error::shape(x.shape_of(), b.values.shape_of()));
        }
    }
    if x.positions() != space.len() {
        return Err(Error::shape(
            format!("{} positions", space.len()),
            format!("{}", x.positions()),
        ));
    }

    let n = space.len();
    let dim = x.dim();
    let mask = compute_mask(space, params, cfg.truncation_eps)?;
    let inv_b = T::of(1.0 / backgrounds.len() as f64);

    let mut score_term = T::zero();
    let mut dl_dlambda = vec![T::zero(); n];
    for bg in backgrounds {
        let pert = perturb(
            mask.lambda(),
            x,
            &bg.values,
            params.tying(),
            perturb_cfg,
            rng,
        )?;

        let logits = model.forward(&pert.masked)?;
        let (masked_score, d_logits) = score(&logits, &cfg.scoring)?;
        let g_masked = model.vjp(&pert.masked, &d_logits)?;

        let mut bg_score = -masked_score;
        if cfg.include_complement {
            let logits_c = model.forward(&pert.complement)?;
            let (comp_score, d_logits_c) = score(&logits_c, &cfg.scoring)?;
            let g_comp = model.vjp(&pert.complement, &d_logits_c)?;
            bg_score += comp_score;
            for j in 0..n {
                if !pert.kept[j] {
                    continue;
                }
                let xj = x.position(j);
                let bj = bg.values.position(j);
                let gm = g_masked.position(j);
                let gc = g_comp.position(j);
                let mut dot = T::zero();
                for k in 0..dim {
                    dot += (gm[k] + gc[k]) * (xj[k] - bj[k]);
                }
                dl_dlambda[j] -= inv_b * dot;
            }
        } else {
            for j in 0..n {
                if !pert.kept[j] {
                    continue;
                }
                let xj = x.position(j);
                let bj = bg.values.position(j);
                let gm = g_masked.position(j);
                let mut dot = T::zero();
                for k in 0..dim {
                    dot += gm[k] * (xj[k] - bj[k]);
                }
                dl_dlambda[j] -= inv_b * dot;
            }
        }
        score_term += inv_b * bg_score;
    }

    let (reg_l_val, reg_l_grad) = reg_lambda(mask.lambda(), cfg.regs.alpha_lambda);
    for (g, r) in dl_dlambda.iter_mut().zip(&reg_l_grad) {
        *g += *r;
    }
    let mut reg_nb_val = T::zero();
    if space.is_grid() && cfg.regs.alpha_nb != 0.0 {
        let (v, nb_grad) = reg_neighbors(space, mask.lambda(), cfg.regs.alpha_nb)?;
        reg_nb_val = v;
        for (g, r) in dl_dlambda.iter_mut().zip(&nb_grad) {
            *g += *r;
        }
    }

    let (mut grad_w, mut grad_sigma) = mask_vjp(space, params, &dl_dlambda, cfg.truncation_eps)?;
    let (reg_s_val, reg_s_grad) = reg_sigma(params.sigma(), cfg.regs.alpha_sigma);
    for (g, r) in grad_sigma.iter_mut().zip(&reg_s_grad) {
        *g += *r;
    }
    // keep zero gradients exactly zero (constant models, zero cotangents)
    debug_assert_eq!(grad_w.len(), params.n_slots());
    if cfg.regs.alpha_lambda == 0.0
        && cfg.regs.alpha_nb == 0.0
        && dl_dlambda.iter().all(|&g| g == T::zero())
    {
        grad_w.iter_mut().for_each(|g| *g = T::zero());
    }

    Ok(ObjectiveEval {
        loss: score_term + reg_l_val + reg_s_val + reg_nb_val,
        grad_w,
        grad_sigma,
        score_term,
        reg_lambda_term: reg_l_val,
        reg_sigma_term: reg_s_val,
        reg_neighbors_term: reg_nb_val,
        lambda: mask,
    })
}
