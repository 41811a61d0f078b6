//! Mask optimization: Adam, stochastic perturbations, the optimization
//! loop, segmentation of long inputs, and the shipped presets.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{compute_mask, Mask, MaskParams};
use crate::model::Model;
use crate::num::Real;
use crate::objective::{
    blend_complement, blend_input, total_objective, Background, ObjectiveConfig, RegWeights,
    ScoreMode, ScoringConfig,
};
use crate::space::FeatureSpace;
use crate::tensor::FeatureTensor;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    t: usize,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(n_params: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if lr <= 0.0 {
            return Err(Error::invalid_argument("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::invalid_argument("betas must lie in [0, 1)"));
        }
        Ok(Self {
            lr: T::of(lr),
            beta1: T::of(beta1),
            beta2: T::of(beta2),
            eps: T::of(eps),
            t: 0,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
        })
    }

    pub fn step_count(&self) -> usize {
        self.t
    }

    /// One descent update; `params` and `grads` must match the state length.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                format!("{} params", self.m.len()),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        self.t += 1;
        let one = T::one();
        let bc1 = one - self.beta1.powi(self.t as i32);
        let bc2 = one - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Stochastic regularization applied inside each optimization step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub enabled: bool,
    /// Std of zero-mean Gaussian noise added to both blended tensors.
    pub noise_std: f64,
    /// Fraction of mask slots forced to 0 for the step.
    pub flip_to_zero_frac: f64,
    /// Fraction of (other) mask slots forced to 1 for the step.
    pub flip_to_one_frac: f64,
}

impl PerturbConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            noise_std: 0.0,
            flip_to_zero_frac: 0.0,
            flip_to_one_frac: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_std < 0.0 {
            return Err(Error::invalid_argument("noise_std must be >= 0"));
        }
        let in_unit = |f: f64| (0.0..=1.0).contains(&f);
        if !in_unit(self.flip_to_zero_frac) || !in_unit(self.flip_to_one_frac) {
            return Err(Error::invalid_argument("flip fractions must lie in [0, 1]"));
        }
        if self.flip_to_zero_frac + self.flip_to_one_frac > 1.0 {
            return Err(Error::invalid_argument("flip fractions must sum to <= 1"));
        }
        Ok(())
    }
}

/// Result of one perturbation draw: the effective mask, both blended
/// tensors, and which positions kept a live gradient path (flipped
/// positions are constants for the step).
#[derive(Debug, Clone)]
pub struct Perturbed<T> {
    pub lambda: Vec<T>,
    pub masked: FeatureTensor<T>,
    pub complement: FeatureTensor<T>,
    pub kept: Vec<bool>,
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; u1 shifted into (0, 1] to keep the log finite
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Apply mask flips and Gaussian input noise for one step.
///
/// Flips pick `floor(frac * n_slots)` distinct slots to force to 0 and a
/// disjoint set to force to 1; every feature tied to a flipped slot follows
/// it. Blending happens after flipping; noise lands on the blended tensors.
/// Stored parameters are never touched.
pub fn perturb<T: Real, R: Rng + ?Sized>(
    lambda: &[T],
    x: &FeatureTensor<T>,
    background: &FeatureTensor<T>,
    tying: &[usize],
    cfg: &PerturbConfig,
    rng: &mut R,
) -> Result<Perturbed<T>> {
    cfg.validate()?;
    if lambda.len() != x.positions() || tying.len() != lambda.len() {
        return Err(Error::shape(
            format!("{} positions", x.positions()),
            format!("{} lambda / {} tying", lambda.len(), tying.len()),
        ));
    }
    let mask = Mask::from_lambda(lambda.to_vec())?;
    if !cfg.enabled {
        return Ok(Perturbed {
            lambda: lambda.to_vec(),
            masked: blend_input(x, background, &mask)?,
            complement: blend_complement(x, background, &mask)?,
            kept: vec![true; lambda.len()],
        });
    }

    let n_slots = tying.iter().max().map_or(0, |&m| m + 1);
    let n_zero = (cfg.flip_to_zero_frac * n_slots as f64).floor() as usize;
    let n_one = (cfg.flip_to_one_frac * n_slots as f64).floor() as usize;

    let mut lambda_eff = lambda.to_vec();
    let mut kept = vec![true; lambda.len()];
    if n_zero + n_one > 0 {
        let picked = rand::seq::index::sample(rng, n_slots, n_zero + n_one);
        let mut slot_state = vec![None::<T>; n_slots];
        for (rank, slot) in picked.into_iter().enumerate() {
            slot_state[slot] = Some(if rank < n_zero { T::zero() } else { T::one() });
        }
        for (i, &slot) in tying.iter().enumerate() {
            if let Some(v) = slot_state[slot] {
                lambda_eff[i] = v;
                kept[i] = false;
            }
        }
    }

    let mask_eff = Mask::from_lambda(lambda_eff.clone())?;
    let mut masked = blend_input(x, background, &mask_eff)?;
    let mut complement = blend_complement(x, background, &mask_eff)?;
    if cfg.noise_std > 0.0 {
        let std = T::of(cfg.noise_std);
        for v in masked.data_mut() {
            *v += std * T::of(standard_normal(rng));
        }
        for v in complement.data_mut() {
            *v += std * T::of(standard_normal(rng));
        }
    }
    Ok(Perturbed {
        lambda: lambda_eff,
        masked,
        complement,
        kept,
    })
}

/// Hyperparameters of one mask optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub steps: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub alpha_lambda: f64,
    pub alpha_sigma: f64,
    pub alpha_nb: f64,
    pub w_init: f64,
    pub sigma_init: f64,
    pub sigma_clamp: (f64, f64),
    pub truncation_eps: f64,
    pub include_complement: bool,
    pub rng_seed: u64,
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid_argument("steps must be >= 1"));
        }
        if self.lr <= 0.0 {
            return Err(Error::invalid_argument("lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid_argument("adam betas must lie in [0, 1)"));
        }
        if self.sigma_init <= 0.0 || self.sigma_clamp.0 <= 0.0 {
            return Err(Error::invalid_argument("sigma values must stay positive"));
        }
        if self.sigma_clamp.0 > self.sigma_clamp.1 {
            return Err(Error::invalid_argument("sigma clamp range inverted"));
        }
        if self.alpha_lambda < 0.0 || self.alpha_sigma < 0.0 || self.alpha_nb < 0.0 {
            return Err(Error::invalid_argument("regularizer weights must be >= 0"));
        }
        Ok(())
    }

    fn base() -> Self {
        Self {
            steps: 300,
            lr: 0.05,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            alpha_lambda: 1.0,
            alpha_sigma: 1.2,
            alpha_nb: 0.0,
            w_init: 1.2,
            sigma_init: 2.0,
            sigma_clamp: (1e-3, 1e4),
            truncation_eps: 1e-8,
            include_complement: true,
            rng_seed: 0,
        }
    }
}

/// Where a background tensor comes from when a preset is materialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundSpec {
    /// All-zero tensor; the PAD embedding for text models.
    Pad,
    Black,
    White,
    /// Constant image at the dataset mean value.
    MeanColor,
    /// The input itself, box-blurred (11x11, applied twice).
    BlurredInput,
}

/// A named bundle of optimization, perturbation, and scoring settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub optim: OptimConfig,
    pub perturb: PerturbConfig,
    pub score_mode: ScoreMode,
    pub backgrounds: Vec<BackgroundSpec>,
}

/// Look up a shipped preset by name: `text-default`, `image-resnet-like`,
/// or `image-vit-like`.
pub fn preset(name: &str) -> Option<Preset> {
    match name {
        "text-default" => Some(Preset {
            name: name.to_string(),
            optim: OptimConfig::base(),
            perturb: PerturbConfig {
                enabled: true,
                noise_std: 0.03,
                flip_to_zero_frac: 0.05,
                flip_to_one_frac: 0.05,
            },
            score_mode: ScoreMode::LogSoftmax,
            backgrounds: vec![BackgroundSpec::Pad],
        }),
        "image-resnet-like" => Some(Preset {
            name: name.to_string(),
            optim: OptimConfig {
                alpha_lambda: 0.6,
                alpha_nb: 10.0,
                w_init: 0.5,
                sigma_init: 1.2,
                ..OptimConfig::base()
            },
            perturb: PerturbConfig::disabled(),
            score_mode: ScoreMode::LogMixture {
                softmax_weight: 0.9,
            },
            backgrounds: vec![
                BackgroundSpec::Black,
                BackgroundSpec::White,
                BackgroundSpec::MeanColor,
            ],
        }),
        "image-vit-like" => Some(Preset {
            name: name.to_string(),
            optim: OptimConfig {
                alpha_lambda: 0.25,
                alpha_nb: 10.0,
                w_init: 0.5,
                sigma_init: 1.2,
                ..OptimConfig::base()
            },
            perturb: PerturbConfig::disabled(),
            score_mode: ScoreMode::LogSoftmax,
            backgrounds: vec![BackgroundSpec::BlurredInput],
        }),
        _ => None,
    }
}

pub fn preset_names() -> &'static [&'static str] {
    &["text-default", "image-resnet-like", "image-vit-like"]
}

/// One row of the optimization trace; serialized as CSV
/// `step,loss,mean_lambda,mean_sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTraceRow {
    pub step: usize,
    pub loss: f64,
    pub mean_lambda: f64,
    pub mean_sigma: f64,
}

pub fn trace_to_csv(trace: &[LossTraceRow]) -> String {
    let mut out = String::from("step,loss,mean_lambda,mean_sigma\n");
    for row in trace {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.step, row.loss, row.mean_lambda, row.mean_sigma
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct OptimOutcome<T> {
    pub mask: Mask<T>,
    pub params: MaskParams<T>,
    pub trace: Vec<LossTraceRow>,
}

/// Run the full mask optimization for one sample.
///
/// Starts from a uniform `(w_init, sigma_init)` initialization, runs
/// `steps` Adam updates on the objective gradient, clamps sigma after every
/// step, and returns the perturbation-free final mask plus the loss trace.
/// Fully deterministic given `optim.rng_seed`.
pub fn optimize_mask<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    x: &FeatureTensor<T>,
    backgrounds: &[Background<T>],
    space: &FeatureSpace,
    scoring: &ScoringConfig,
    optim: &OptimConfig,
    perturb_cfg: &PerturbConfig,
) -> Result<OptimOutcome<T>> {
    let params = MaskParams::untied(space.len(), T::of(optim.w_init), T::of(optim.sigma_init))?;
    optimize_mask_from(model, x, backgrounds, space, scoring, optim, perturb_cfg, params)
}

/// As [`optimize_mask`] but from caller-supplied initial parameters
/// (custom tying maps enter here).
#[allow(clippy::too_many_arguments)]
pub fn optimize_mask_from<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    x: &FeatureTensor<T>,
    backgrounds: &[Background<T>],
    space: &FeatureSpace,
    scoring: &ScoringConfig,
    optim: &OptimConfig,
    perturb_cfg: &PerturbConfig,
    mut params: MaskParams<T>,
) -> Result<OptimOutcome<T>> {
    optim.validate()?;
    perturb_cfg.validate()?;
    let obj_cfg = ObjectiveConfig {
        scoring: scoring.clone(),
        regs: RegWeights {
            alpha_lambda: optim.alpha_lambda,
            alpha_sigma: optim.alpha_sigma,
            alpha_nb: optim.alpha_nb,
        },
        include_complement: optim.include_complement,
        truncation_eps: optim.truncation_eps,
    };
    let slots = params.n_slots();
    let mut adam = Adam::<T>::new(
        2 * slots,
        optim.lr,
        optim.adam_beta1,
        optim.adam_beta2,
        optim.adam_eps,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(optim.rng_seed);
    let (clamp_lo, clamp_hi) = (T::of(optim.sigma_clamp.0), T::of(optim.sigma_clamp.1));
    let mut trace = Vec::with_capacity(optim.steps);
    let mut last_finite = None;

    for step in 1..=optim.steps {
        let eval = total_objective(
            model,
            x,
            backgrounds,
            space,
            &params,
            &obj_cfg,
            perturb_cfg,
            &mut rng,
        )?;
        let loss = eval.loss.as_f64();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step, last_finite });
        }
        last_finite = Some(loss);
        let mean_sigma =
            params.sigma().iter().copied().sum::<T>().as_f64() / params.n_slots() as f64;
        trace.push(LossTraceRow {
            step,
            loss,
            mean_lambda: eval.lambda.mean().as_f64(),
            mean_sigma,
        });

        let mut flat: Vec<T> = params.w().iter().chain(params.sigma()).copied().collect();
        let grads: Vec<T> = eval
            .grad_w
            .iter()
            .chain(eval.grad_sigma.iter())
            .copied()
            .collect();
        adam.step(&mut flat, &grads)?;
        params.w_mut().copy_from_slice(&flat[..slots]);
        params.sigma_mut().copy_from_slice(&flat[slots..]);
        params.clamp_sigma(clamp_lo, clamp_hi);
    }

    let mask = compute_mask(space, &params, optim.truncation_eps)?;
    Ok(OptimOutcome {
        mask,
        params,
        trace,
    })
}

/// Segmentation of a long input into fixed-length overlapping windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentPlan {
    pub segment_length: usize,
    pub overlap: usize,
    pub starts: Vec<usize>,
    pub total: usize,
}

pub fn plan_segments(n: usize, segment_length: usize, overlap: usize) -> Result<SegmentPlan> {
    if segment_length == 0 {
        return Err(Error::invalid_argument("segment_length must be positive"));
    }
    if overlap >= segment_length {
        return Err(Error::invalid_argument(
            "overlap must be smaller than segment_length",
        ));
    }
    let mut starts = vec![0];
    if n > segment_length {
        let stride = segment_length - overlap;
        let mut s = stride;
        while s + segment_length < n {
            starts.push(s);
            s += stride;
        }
        starts.push(n - segment_length);
    }
    Ok(SegmentPlan {
        segment_length,
        overlap,
        starts,
        total: n,
    })
}

impl SegmentPlan {
    pub fn segment_len_at(&self, start: usize) -> usize {
        self.segment_length.min(self.total - start)
    }
}

/// Optimize each segment independently and stitch the per-segment masks.
///
/// Inside an overlap of length `O`, the position at 1-based offset `k`
/// takes weight `k / (O + 1)` for the later segment and the rest for the
/// earlier one; positions outside every overlap copy their segment's value.
pub fn segment_and_blend<T: Real>(
    plan: &SegmentPlan,
    mut per_segment: impl FnMut(usize, usize) -> Result<Vec<T>>,
) -> Result<Vec<T>> {
    let n = plan.total;
    let mut out = vec![T::zero(); n];
    let mut covered = 0usize;
    for &start in &plan.starts {
        let len = plan.segment_len_at(start);
        let seg = per_segment(start, len)?;
        if seg.len() != len {
            return Err(Error::shape(
                format!("{len} mask values"),
                format!("{}", seg.len()),
            ));
        }
        if covered == 0 {
            out[..len].copy_from_slice(&seg);
        } else {
            if start > covered {
                return Err(Error::invalid_state("segment plan leaves a gap"));
            }
            let ov = covered - start;
            for k in 1..=ov {
                let pos = start + k - 1;
                let w_later = T::of(k as f64 / (ov as f64 + 1.0));
                out[pos] = out[pos] * (T::one() - w_later) + seg[k - 1] * w_later;
            }
            out[covered..start + len].copy_from_slice(&seg[ov..]);
        }
        covered = start + len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut adam = Adam::<f64>::new(3, 0.1, 0.9, 0.999, 1e-8).unwrap();
        let mut p = [1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn adam_first_step_matches_hand_computation() {
        let mut adam = Adam::<f64>::new(1, 0.1, 0.9, 0.999, 1e-8).unwrap();
        let mut p = [0.0];
        adam.step(&mut p, &[2.0]).unwrap();
        // m_hat = 2, v_hat = 4, update = 0.1 * 2 / (2 + 1e-8)
        assert!((p[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn perturb_disabled_is_identity() {
        let x = FeatureTensor::from_scalars(&[1.0_f64, 2.0, 3.0]);
        let b = FeatureTensor::zeros(3, 1);
        let lambda = [0.25, 0.5, 1.0];
        let tying = [0, 1, 2];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = perturb(&lambda, &x, &b, &tying, &PerturbConfig::disabled(), &mut rng).unwrap();
        assert_eq!(p.lambda, lambda.to_vec());
        assert_eq!(p.masked.data(), &[0.25, 1.0, 3.0]);
        assert_eq!(p.complement.data(), &[0.75, 1.0, 0.0]);
        assert!(p.kept.iter().all(|&k| k));
    }

    #[test]
    fn perturb_flip_counts_match_floor_arithmetic() {
        let n = 100;
        let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let x = FeatureTensor::from_scalars(&values);
        let b = FeatureTensor::zeros(n, 1);
        let lambda = vec![0.5; n];
        let tying: Vec<usize> = (0..n).collect();
        let cfg = PerturbConfig {
            enabled: true,
            noise_std: 0.0,
            flip_to_zero_frac: 0.05,
            flip_to_one_frac: 0.05,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = perturb(&lambda, &x, &b, &tying, &cfg, &mut rng).unwrap();
        let zeros = p.lambda.iter().filter(|&&l| l == 0.0).count();
        let ones = p.lambda.iter().filter(|&&l| l == 1.0).count();
        assert_eq!(zeros, 5);
        assert_eq!(ones, 5);
        assert_eq!(p.kept.iter().filter(|&&k| !k).count(), 10);
    }

    #[test]
    fn perturb_deterministic_given_seed() {
        let x = FeatureTensor::from_scalars(&[0.4_f64; 50]);
        let b = FeatureTensor::zeros(50, 1);
        let lambda = vec![0.5; 50];
        let tying: Vec<usize> = (0..50).collect();
        let cfg = PerturbConfig {
            enabled: true,
            noise_std: 0.03,
            flip_to_zero_frac: 0.05,
            flip_to_one_frac: 0.05,
        };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            perturb(&lambda, &x, &b, &tying, &cfg, &mut rng).unwrap()
        };
        let a = run();
        let c = run();
        assert_eq!(a.lambda, c.lambda);
        assert_eq!(a.masked.data(), c.masked.data());
        assert_eq!(a.complement.data(), c.complement.data());
    }

    #[test]
    fn flips_follow_tied_slots() {
        // 6 features, 3 slots of 2 members each; one slot flipped to zero
        let x = FeatureTensor::from_scalars(&[1.0_f64; 6]);
        let b = FeatureTensor::zeros(6, 1);
        let lambda = vec![0.5; 6];
        let tying = vec![0, 0, 1, 1, 2, 2];
        let cfg = PerturbConfig {
            enabled: true,
            noise_std: 0.0,
            flip_to_zero_frac: 0.34,
            flip_to_one_frac: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = perturb(&lambda, &x, &b, &tying, &cfg, &mut rng).unwrap();
        let zeros = p.lambda.iter().filter(|&&l| l == 0.0).count();
        assert_eq!(zeros, 2, "one flipped slot covers two member positions");
    }

    #[test]
    fn segment_plan_short_input_single_segment() {
        let plan = plan_segments(40, 510, 100).unwrap();
        assert_eq!(plan.starts, vec![0]);
        assert_eq!(plan.segment_len_at(0), 40);
    }

    #[test]
    fn segment_blend_constant_masks_blend_linearly() {
        // segments [0, 10) and [6, 16): overlap 4
        let plan = SegmentPlan {
            segment_length: 10,
            overlap: 4,
            starts: vec![0, 6],
            total: 16,
        };
        let blended = segment_and_blend(&plan, |start, len| {
            Ok(vec![if start == 0 { 1.0_f64 } else { 0.0 }; len])
        })
        .unwrap();
        for (pos, expected) in [(6, 0.8), (7, 0.6), (8, 0.4), (9, 0.2)] {
            assert!((blended[pos] - expected).abs() < 1e-12);
        }
        assert!(blended[..6].iter().all(|&v| v == 1.0));
        assert!(blended[10..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn segment_blend_identical_masks_pass_through() {
        let plan = plan_segments(16, 10, 4).unwrap();
        let blended = segment_and_blend(&plan, |_, len| Ok(vec![0.7_f64; len])).unwrap();
        assert!(blended.iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn overlap_must_be_smaller_than_segment() {
        assert!(plan_segments(100, 10, 10).is_err());
    }

    #[test]
    fn presets_resolve() {
        for name in preset_names() {
            let p = preset(name).unwrap();
            assert!(p.optim.validate().is_ok());
            assert!(p.perturb.validate().is_ok());
        }
        assert!(preset("no-such").is_none());
    }
}
