//! End-to-end explanation driver: converts samples to tensors,
//! materializes backgrounds, dispatches every explanation method, and
//! evaluates faithfulness with the task's removal backgrounds.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    integrated_gradients, input_x_grad, lime, occlusion, reduce_embedding_scores, saliency,
    shapley_sampling, ReduceMode, ScoreMap,
};
use crate::error::{Error, Result};
use crate::eval::{faithfulness, FaithfulnessResult};
use crate::model::{Sample, SampleFeatures, ToyModel, Trainable};
use crate::num::Real;
use crate::objective::{Background, ScoringConfig};
use crate::optim::{
    optimize_mask, plan_segments, segment_and_blend, BackgroundSpec, LossTraceRow, OptimConfig,
    Preset,
};
use crate::space::FeatureSpace;
use crate::tensor::FeatureTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Marc,
    Occlusion,
    Saliency,
    InxGrad,
    IntGrads,
    Lime,
    Shapley,
}

impl Method {
    pub fn all() -> &'static [Method] {
        &[
            Method::Marc,
            Method::Occlusion,
            Method::Saliency,
            Method::InxGrad,
            Method::IntGrads,
            Method::Lime,
            Method::Shapley,
        ]
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "marc" => Ok(Method::Marc),
            "occlusion" => Ok(Method::Occlusion),
            "saliency" => Ok(Method::Saliency),
            "inxgrad" => Ok(Method::InxGrad),
            "intgrads" => Ok(Method::IntGrads),
            "lime" => Ok(Method::Lime),
            "shapley" => Ok(Method::Shapley),
            other => Err(Error::invalid_argument(format!("unknown method '{other}'"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Marc => "marc",
            Method::Occlusion => "occlusion",
            Method::Saliency => "saliency",
            Method::InxGrad => "inxgrad",
            Method::IntGrads => "intgrads",
            Method::Lime => "lime",
            Method::Shapley => "shapley",
        };
        write!(f, "{s}")
    }
}

/// Everything an explanation run needs besides the model and sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainOptions {
    pub method: Method,
    pub preset: Preset,
    pub reduce: ReduceMode,
    /// Occlusion window; defaults to 5 on chains and a third of the grid
    /// side on grids.
    pub occlusion_width: Option<usize>,
    pub occlusion_stride: usize,
    pub ig_steps: usize,
    pub lime_evals: usize,
    pub lime_frac_range: (f64, f64),
    pub lime_span_extension: usize,
    pub shapley_permutations: usize,
    /// Long chain inputs are split into overlapping segments for the mask
    /// optimizer and linearly re-blended.
    pub segment_length: usize,
    pub segment_overlap: usize,
    pub seed: u64,
}

impl ExplainOptions {
    pub fn new(method: Method, preset: Preset, seed: u64) -> Self {
        Self {
            method,
            preset,
            reduce: ReduceMode::NormL1,
            occlusion_width: None,
            occlusion_stride: 1,
            ig_steps: 50,
            lime_evals: 50,
            lime_frac_range: (0.05, 0.13),
            lime_span_extension: 3,
            shapley_permutations: 25,
            segment_length: 510,
            segment_overlap: 100,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Explanation {
    pub method: Method,
    pub scores: Vec<f64>,
    pub trace: Option<Vec<LossTraceRow>>,
    pub faithfulness: FaithfulnessResult,
}

/// Mean of all grid values in the dataset; the "mean color". Zero for
/// token datasets.
pub fn dataset_mean_value(samples: &[Sample]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in samples {
        if let SampleFeatures::Grid { values, .. } = &s.features {
            sum += values.iter().sum::<f64>();
            count += values.len();
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// The spatial structure of one sample: chain for token sequences, grid
/// for images.
pub fn space_for_sample(sample: &Sample) -> Result<FeatureSpace> {
    match &sample.features {
        SampleFeatures::Tokens(t) => FeatureSpace::chain(t.len()),
        SampleFeatures::Grid { height, width, .. } => FeatureSpace::grid(*height, *width),
    }
}

/// Box blur with border renormalization, `radius` cells each side,
/// applied `passes` times.
fn box_blur(height: usize, width: usize, values: &[f64], radius: usize, passes: usize) -> Vec<f64> {
    let mut cur = values.to_vec();
    for _ in 0..passes {
        let mut next = vec![0.0; cur.len()];
        for r in 0..height {
            for c in 0..width {
                let r0 = r.saturating_sub(radius);
                let r1 = (r + radius).min(height - 1);
                let c0 = c.saturating_sub(radius);
                let c1 = (c + radius).min(width - 1);
                let mut acc = 0.0;
                for rr in r0..=r1 {
                    for cc in c0..=c1 {
                        acc += cur[rr * width + cc];
                    }
                }
                next[r * width + c] = acc / ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64;
            }
        }
        cur = next;
    }
    cur
}

/// Materialize one background tensor for the given input.
pub fn materialize_background<T: Real>(
    spec: BackgroundSpec,
    x: &FeatureTensor<T>,
    space: &FeatureSpace,
    dataset_mean: f64,
) -> Result<Background<T>> {
    let (n, dim) = (x.positions(), x.dim());
    match spec {
        BackgroundSpec::Pad => Ok(Background::new(FeatureTensor::zeros(n, dim), "pad")),
        BackgroundSpec::Black => Ok(Background::new(FeatureTensor::zeros(n, dim), "black")),
        BackgroundSpec::White => Ok(Background::new(
            FeatureTensor::constant(n, dim, T::one()),
            "white",
        )),
        BackgroundSpec::MeanColor => Ok(Background::new(
            FeatureTensor::constant(n, dim, T::of(dataset_mean)),
            "mean",
        )),
        BackgroundSpec::BlurredInput => {
            let (height, width) = match space.kind() {
                crate::space::SpaceKind::Grid { height, width } => (height, width),
                crate::space::SpaceKind::Chain { .. } => {
                    return Err(Error::invalid_argument(
                        "blurred background requires a grid input",
                    ))
                }
            };
            if dim != 1 {
                return Err(Error::invalid_argument("blur expects single-channel grids"));
            }
            let values: Vec<f64> = x.data().iter().map(|v| v.as_f64()).collect();
            let blurred = box_blur(height, width, &values, 5, 2);
            Ok(Background::new(
                FeatureTensor::new(n, 1, blurred.into_iter().map(T::of).collect())?,
                "blurred",
            ))
        }
    }
}

pub fn materialize_backgrounds<T: Real>(
    specs: &[BackgroundSpec],
    x: &FeatureTensor<T>,
    space: &FeatureSpace,
    dataset_mean: f64,
) -> Result<Vec<Background<T>>> {
    specs
        .iter()
        .map(|&s| materialize_background(s, x, space, dataset_mean))
        .collect()
}

/// The single background input-perturbation baselines replace features
/// with: PAD for text, the blurred input for images.
fn baseline_background<T: Real>(
    x: &FeatureTensor<T>,
    space: &FeatureSpace,
    dataset_mean: f64,
) -> Result<Background<T>> {
    if space.is_grid() {
        materialize_background(BackgroundSpec::BlurredInput, x, space, dataset_mean)
    } else {
        materialize_background(BackgroundSpec::Pad, x, space, dataset_mean)
    }
}

/// Removal backgrounds for the faithfulness metrics: PAD for text; white,
/// black, mean color, and blurred input for images.
pub fn faithfulness_backgrounds<T: Real>(
    x: &FeatureTensor<T>,
    space: &FeatureSpace,
    dataset_mean: f64,
) -> Result<Vec<FeatureTensor<T>>> {
    let specs: &[BackgroundSpec] = if space.is_grid() {
        &[
            BackgroundSpec::White,
            BackgroundSpec::Black,
            BackgroundSpec::MeanColor,
            BackgroundSpec::BlurredInput,
        ]
    } else {
        &[BackgroundSpec::Pad]
    };
    Ok(materialize_backgrounds(specs, x, space, dataset_mean)?
        .into_iter()
        .map(|b| b.values)
        .collect())
}

fn per_sample_seed(seed: u64, sample_id: usize) -> u64 {
    seed ^ (sample_id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn run_marc<T: Real>(
    model: &ToyModel<T>,
    x: &FeatureTensor<T>,
    space: &FeatureSpace,
    scoring: &ScoringConfig,
    opts: &ExplainOptions,
    dataset_mean: f64,
    sample_seed: u64,
) -> Result<(Vec<f64>, Vec<LossTraceRow>)> {
    let optim = OptimConfig {
        rng_seed: sample_seed,
        ..opts.preset.optim.clone()
    };
    let n = space.len();
    if !space.is_grid() && n > opts.segment_length {
        // optimize overlapping segments independently, then blend
        let plan = plan_segments(n, opts.segment_length, opts.segment_overlap)?;
        let mut traces = Vec::new();
        let mut seg_index = 0u64;
        let lambda = segment_and_blend(&plan, |start, len| {
            let sub_x = x.slice_positions(start, len)?;
            let sub_space = FeatureSpace::chain(len)?;
            let backgrounds = materialize_backgrounds(
                &opts.preset.backgrounds,
                &sub_x,
                &sub_space,
                dataset_mean,
            )?;
            let sub_optim = OptimConfig {
                rng_seed: sample_seed.wrapping_add(seg_index),
                ..optim.clone()
            };
            seg_index += 1;
            let outcome = optimize_mask(
                model,
                &sub_x,
                &backgrounds,
                &sub_space,
                scoring,
                &sub_optim,
                &opts.preset.perturb,
            )?;
            traces.extend(outcome.trace.iter().copied());
            Ok(outcome.mask.lambda().to_vec())
        })?;
        for (i, row) in traces.iter_mut().enumerate() {
            row.step = i + 1;
        }
        Ok((lambda.iter().map(|l| l.as_f64()).collect(), traces))
    } else {
        let backgrounds =
            materialize_backgrounds(&opts.preset.backgrounds, x, space, dataset_mean)?;
        let outcome = optimize_mask(
            model,
            x,
            &backgrounds,
            space,
            scoring,
            &optim,
            &opts.preset.perturb,
        )?;
        Ok((
            outcome.mask.lambda().iter().map(|l| l.as_f64()).collect(),
            outcome.trace,
        ))
    }
}

/// Produce soft scores (and, for the mask optimizer, a loss trace) plus
/// the faithfulness evaluation for one sample.
pub fn explain_sample<T: Real>(
    model: &ToyModel<T>,
    sample: &Sample,
    sample_id: usize,
    opts: &ExplainOptions,
    dataset_mean: f64,
) -> Result<Explanation> {
    let x = model.input_from_sample(sample)?;
    let space = space_for_sample(sample)?;
    let class = sample.label;
    let scoring = ScoringConfig {
        mode: opts.preset.score_mode,
        class_index: class,
    };
    let sample_seed = per_sample_seed(opts.seed, sample_id);

    let mut trace = None;
    let score_map: ScoreMap<T> = match opts.method {
        Method::Marc => {
            let (scores, t) =
                run_marc(model, &x, &space, &scoring, opts, dataset_mean, sample_seed)?;
            trace = Some(t);
            ScoreMap::new(scores.into_iter().map(T::of).collect(), "marc")?
        }
        Method::Occlusion => {
            let bg = baseline_background(&x, &space, dataset_mean)?;
            let width = opts.occlusion_width.unwrap_or_else(|| match space.kind() {
                crate::space::SpaceKind::Chain { .. } => 5,
                crate::space::SpaceKind::Grid { height, .. } => (height / 3).max(1),
            });
            let width = width.min(space.len());
            occlusion(
                model,
                &x,
                &space,
                &bg.values,
                class,
                width,
                opts.occlusion_stride.min(width),
            )?
        }
        Method::Saliency => {
            let tensor = saliency(model, &x, class)?;
            reduce_embedding_scores(&tensor, opts.reduce, class, "saliency")?
        }
        Method::InxGrad => {
            let tensor = input_x_grad(model, &x, class)?;
            reduce_embedding_scores(&tensor, opts.reduce, class, "inxgrad")?
        }
        Method::IntGrads => {
            let bg = baseline_background(&x, &space, dataset_mean)?;
            let tensor = integrated_gradients(model, &x, &bg.values, class, opts.ig_steps)?;
            reduce_embedding_scores(&tensor, opts.reduce, class, "intgrads")?
        }
        Method::Lime => {
            let bg = baseline_background(&x, &space, dataset_mean)?;
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
            lime(
                model,
                &x,
                &bg.values,
                class,
                opts.lime_evals,
                opts.lime_frac_range,
                opts.lime_span_extension,
                &mut rng,
            )?
        }
        Method::Shapley => {
            let bg = baseline_background(&x, &space, dataset_mean)?;
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
            shapley_sampling(
                model,
                &x,
                &bg.values,
                class,
                opts.shapley_permutations,
                &mut rng,
            )?
        }
    };

    let removal = faithfulness_backgrounds(&x, &space, dataset_mean)?;
    let faith = faithfulness(model, &x, class, &score_map.scores, &removal)?;
    Ok(Explanation {
        method: opts.method,
        scores: score_map.scores.iter().map(|s| s.as_f64()).collect(),
        trace,
        faithfulness: faith,
    })
}
