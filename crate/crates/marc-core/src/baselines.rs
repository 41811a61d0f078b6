//! Model-agnostic attribution baselines.
//!
//! Every method here attributes the raw logit of the target class; the
//! closed-form identities on linear models (occlusion drop, saliency rows,
//! the integrated-gradients product, Shapley additivity) hold exactly under
//! that convention.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::num::Real;
use crate::space::{FeatureSpace, SpaceKind};
use crate::tensor::FeatureTensor;

/// Per-position relevance scores; higher means more relevant.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap<T> {
    pub scores: Vec<T>,
    pub method: String,
}

impl<T: Real> ScoreMap<T> {
    pub fn new(scores: Vec<T>, method: impl Into<String>) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid_state("score map contains non-finite values"));
        }
        Ok(Self {
            scores,
            method: method.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// How per-dimension tensors collapse to one score per position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReduceMode {
    NormL1,
    SignedSum,
}

impl FromStr for ReduceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "norm_l1" => Ok(ReduceMode::NormL1),
            "signed_sum" => Ok(ReduceMode::SignedSum),
            other => Err(Error::invalid_argument(format!(
                "unknown reduce mode '{other}'"
            ))),
        }
    }
}

impl fmt::Display for ReduceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReduceMode::NormL1 => write!(f, "norm_l1"),
            ReduceMode::SignedSum => write!(f, "signed_sum"),
        }
    }
}

fn class_logit<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    x: &FeatureTensor<T>,
    class_index: usize,
) -> Result<T> {
    let logits = model.forward(x)?;
    logits
        .get(class_index)
        .copied()
        .ok_or_else(|| Error::invalid_argument(format!("class index {class_index} out of range")))
}

fn class_logit_grad<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    x: &FeatureTensor<T>,
    class_index: usize,
) -> Result<FeatureTensor<T>> {
    let classes = model.num_classes();
    if class_index >= classes {
        return Err(Error::invalid_argument(format!(
            "class index {class_index} out of range"
        )));
    }
    let mut cot = vec![T::zero(); classes];
    cot[class_index] = T::one();
    model.vjp(x, &cot)
}

fn check_background<T: Real>(x: &FeatureTensor<T>, background: &FeatureTensor<T>) -> Result<()> {
    if !x.same_shape(background) {
        return Err(Error::shape(x.shape_of(), background.shape_of()));
    }
    Ok(())
}

/// Full-width window starts covering `0..n`, stepping by `stride` with a
/// final start snapped to `n - width`.
fn window_starts(n: usize, width: usize, stride: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..=n - width).step_by(stride).collect();
    if *starts.last().unwrap() != n - width {
        starts.push(n - width);
    }
    starts
}

/// Occlusion scores: each position averages the score drop over all
/// occluding windows (1-D spans on chains, square patches on grids) that
/// contain it.
pub fn occlusion<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    x: &FeatureTensor<T>,
    space: &FeatureSpace,
    background: &FeatureTensor<T>,
    class_index: usize,
    span_width: usize,
    stride: usize,
) -> Result<ScoreMap<T>> {
    check_background(x, background)?;
    let n = x.positions();
    if span_width == 0 || stride == 0 {
        return Err(Error::invalid_argument("span width and stride must be positive"));
    }
    if stride > span_width {
        return Err(Error::invalid_argument(
            "stride larger than the window leaves positions uncovered",
        ));
    }
    let windows: Vec<Vec<usize>> = match space.kind() {
        SpaceKind::Chain { len } => {
            if span_width > len {
                return Err(Error::invalid_argument("span wider than the input"));
            }
            window_starts(len, span_width, stride)
                .into_iter()
                .map(|s| (s..s + span_width).collect())
                .collect()
        }
        SpaceKind::Grid { height, width } => {
            if span_width > height || span_width > width {
                return Err(Error::invalid_argument("patch wider than the grid"));
            }
            let mut w = Vec::new();
            for r0 in window_starts(height, span_width, stride) {
                for c0 in window_starts(width, span_width, stride) {
                    let mut cells = Vec::with_capacity(span_width * span_width);
                    for r in r0..r0 + span_width {
                        for c in c0..c0 + span_width {
                            cells.push(r * width + c);
                        }
                    }
                    w.push(cells);
                }
            }
            w
        }
    };

    let base = class_logit(model, x, class_index)?;
    let mut acc = vec![T::zero(); n];
    let mut count = vec![0usize; n];
    for cells in &windows {
        let mut occluded = x.clone();
        for &j in cells {
            occluded
                .position_mut(j)
                .copy_from_slice(background.position(j));
        }
        let drop = base - class_logit(model, &occluded, class_index)?;
        for &j in cells {
            acc[j] += drop;
            count[j] += 1;
        }
    }
    let scores = acc
        .into_iter()
        .zip(count)
        .map(|(a, c)| if c == 0 { T::zero() } else { a / T::of(c as f64) })
        .collect();
    ScoreMap::new(scores, "occlusion")
}

/// Gradient of the class logit at the input, per dimension.
pub fn saliency<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    x: &FeatureTensor<T>,
    class_index: usize,
) -> Result<FeatureTensor<T>> {
    class_logit_grad(model, x, class_index)
}

/// Elementwise input times gradient.
pub fn input_x_grad<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    x: &FeatureTensor<T>,
    class_index: usize,
) -> Result<FeatureTensor<T>> {
    let mut grad = class_logit_grad(model, x, class_index)?;
    for (g, &v) in grad.data_mut().iter_mut().zip(x.data()) {
        *g *= v;
    }
    Ok(grad)
}

/// Integrated gradients with midpoint Riemann steps:
/// `(x - b) * mean_k grad(b + ((k - 1/2)/steps)(x - b))`, `k = 1..steps`.
/// The midpoint rule keeps the completeness gap at `O(steps^-2)`; on linear
/// models any rule is exact.
pub fn integrated_gradients<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    x: &FeatureTensor<T>,
    background: &FeatureTensor<T>,
    class_index: usize,
    steps: usize,
) -> Result<FeatureTensor<T>> {
    check_background(x, background)?;
    if steps == 0 {
        return Err(Error::invalid_argument("need at least one step"));
    }
    let len = x.data().len();
    let mut grad_sum = vec![T::zero(); len];
    for k in 1..=steps {
        let alpha = T::of((k as f64 - 0.5) / steps as f64);
        let point_data: Vec<T> = background
            .data()
            .iter()
            .zip(x.data())
            .map(|(&b, &xv)| b + alpha * (xv - b))
            .collect();
        let point = FeatureTensor::new(x.positions(), x.dim(), point_data)?;
        let g = class_logit_grad(model, &point, class_index)?;
        for (acc, &gv) in grad_sum.iter_mut().zip(g.data()) {
            *acc += gv;
        }
    }
    let inv = T::of(1.0 / steps as f64);
    let attr: Vec<T> = grad_sum
        .into_iter()
        .zip(x.data().iter().zip(background.data()))
        .map(|(g, (&xv, &b))| (xv - b) * g * inv)
        .collect();
    FeatureTensor::new(x.positions(), x.dim(), attr)
}

/// Local linear surrogate: mask random position subsets (each selection
/// extended by the next `span_extension` positions) to the background,
/// record the class logit, and fit least squares on the binary presence
/// vectors. A tiny ridge (1e-6, coefficients only) keeps the underdetermined
/// system unique.
#[allow(clippy::too_many_arguments)]
pub fn lime<T: Real, M: Model<T> + ?Sized, R: Rng + ?Sized>(
    model: &M,
    x: &FeatureTensor<T>,
    background: &FeatureTensor<T>,
    class_index: usize,
    n_evals: usize,
    mask_frac_range: (f64, f64),
    span_extension: usize,
    rng: &mut R,
) -> Result<ScoreMap<T>> {
    check_background(x, background)?;
    if n_evals < 2 {
        return Err(Error::invalid_argument("need at least two evaluations"));
    }
    let (lo, hi) = mask_frac_range;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(Error::invalid_argument("bad mask fraction range"));
    }
    let n = x.positions();
    let mut design: Vec<Vec<f64>> = Vec::with_capacity(n_evals);
    let mut targets: Vec<f64> = Vec::with_capacity(n_evals);
    for _ in 0..n_evals {
        let u = rng.gen_range(lo..=hi);
        let k = ((u * n as f64).round() as usize).clamp(1, n);
        let seeds = rand::seq::index::sample(rng, n, k);
        let mut removed = vec![false; n];
        for p in seeds {
            for q in p..=(p + span_extension).min(n - 1) {
                removed[q] = true;
            }
        }
        let mut perturbed = x.clone();
        for (j, &r) in removed.iter().enumerate() {
            if r {
                perturbed
                    .position_mut(j)
                    .copy_from_slice(background.position(j));
            }
        }
        let y = class_logit(model, &perturbed, class_index)?.as_f64();
        design.push(removed.iter().map(|&r| if r { 0.0 } else { 1.0 }).collect());
        targets.push(y);
    }

    // normal equations over [presence, 1] with ridge on the coefficients;
    // targets are centered so a constant response solves to exactly zero
    let y_mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let dim = n + 1;
    let mut ata = vec![vec![0.0_f64; dim]; dim];
    let mut atb = vec![0.0_f64; dim];
    for (row, &y) in design.iter().zip(&targets) {
        let augmented = |i: usize| if i < n { row[i] } else { 1.0 };
        for i in 0..dim {
            let ai = augmented(i);
            if ai == 0.0 {
                continue;
            }
            atb[i] += ai * (y - y_mean);
            for j in 0..dim {
                ata[i][j] += ai * augmented(j);
            }
        }
    }
    for (i, row) in ata.iter_mut().enumerate().take(n) {
        row[i] += 1e-6;
    }
    let solution = solve_linear_system(&mut ata, &mut atb)?;
    let scores = solution[..n].iter().map(|&c| T::of(c)).collect();
    ScoreMap::new(scores, "lime")
}

/// Gaussian elimination with partial pivoting; consumes its inputs.
fn solve_linear_system(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::invalid_state("singular system in surrogate fit"));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Monte-Carlo Shapley values: walk random feature permutations, reveal
/// features one at a time over the background, and attribute each feature
/// its marginal score change.
pub fn shapley_sampling<T: Real, M: Model<T> + ?Sized, R: Rng + ?Sized>(
    model: &M,
    x: &FeatureTensor<T>,
    background: &FeatureTensor<T>,
    class_index: usize,
    n_permutations: usize,
    rng: &mut R,
) -> Result<ScoreMap<T>> {
    check_background(x, background)?;
    if n_permutations == 0 {
        return Err(Error::invalid_argument("need at least one permutation"));
    }
    let n = x.positions();
    let base_score = class_logit(model, background, class_index)?;
    let mut attr = vec![T::zero(); n];
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..n_permutations {
        order.shuffle(rng);
        let mut current = background.clone();
        let mut prev = base_score;
        for &p in &order {
            current.position_mut(p).copy_from_slice(x.position(p));
            let s = class_logit(model, &current, class_index)?;
            attr[p] += s - prev;
            prev = s;
        }
    }
    let inv = T::of(1.0 / n_permutations as f64);
    for a in &mut attr {
        *a *= inv;
    }
    ScoreMap::new(attr, "shapley")
}

/// Collapse a per-dimension attribution tensor to per-position scores:
/// `norm_l1` sums absolute values; `signed_sum` sums raw values and negates
/// the result when the target label is 0 (binary tasks).
pub fn reduce_embedding_scores<T: Real>(
    tensor: &FeatureTensor<T>,
    mode: ReduceMode,
    target_label: usize,
    method: impl Into<String>,
) -> Result<ScoreMap<T>> {
    let scores = (0..tensor.positions())
        .map(|j| {
            let row = tensor.position(j);
            match mode {
                ReduceMode::NormL1 => row.iter().map(|v| v.abs()).sum(),
                ReduceMode::SignedSum => {
                    let s: T = row.iter().copied().sum();
                    if target_label == 0 {
                        -s
                    } else {
                        s
                    }
                }
            }
        })
        .collect();
    ScoreMap::new(scores, method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstantModel, LinearModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain(n: usize) -> FeatureSpace {
        FeatureSpace::chain(n).unwrap()
    }

    #[test]
    fn occlusion_constant_model_is_zero() {
        let model = ConstantModel::new(vec![1.0_f64, -1.0], 1);
        let x = FeatureTensor::from_scalars(&[1.0, 2.0, 3.0, 4.0]);
        let b = FeatureTensor::zeros(4, 1);
        let s = occlusion(&model, &x, &chain(4), &b, 0, 2, 1).unwrap();
        assert!(s.scores.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn occlusion_width_one_recovers_linear_contributions() {
        let model = LinearModel::new(vec![vec![2.0_f64, -1.0, 0.5]], 1).unwrap();
        let x = FeatureTensor::from_scalars(&[1.0, 3.0, -2.0]);
        let b = FeatureTensor::zeros(3, 1);
        let s = occlusion(&model, &x, &chain(3), &b, 0, 1, 1).unwrap();
        assert!((s.scores[0] - 2.0).abs() < 1e-10);
        assert!((s.scores[1] + 3.0).abs() < 1e-10);
        assert!((s.scores[2] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn occlusion_full_width_gives_uniform_scores() {
        let model = LinearModel::new(vec![vec![1.0_f64, 2.0, 3.0]], 1).unwrap();
        let x = FeatureTensor::from_scalars(&[1.0, 1.0, 1.0]);
        let b = FeatureTensor::zeros(3, 1);
        let s = occlusion(&model, &x, &chain(3), &b, 0, 3, 1).unwrap();
        assert!(s.scores.iter().all(|&v| (v - 6.0).abs() < 1e-10));
    }

    #[test]
    fn occlusion_span_wider_than_input_rejected() {
        let model = LinearModel::new(vec![vec![1.0_f64, 1.0]], 1).unwrap();
        let x = FeatureTensor::from_scalars(&[1.0, 1.0]);
        let b = FeatureTensor::zeros(2, 1);
        assert!(occlusion(&model, &x, &chain(2), &b, 0, 3, 1).is_err());
    }

    #[test]
    fn saliency_of_linear_model_is_weight_row() {
        let model = LinearModel::new(vec![vec![1.0_f64, -2.0], vec![0.3, 0.4]], 1).unwrap();
        let x = FeatureTensor::from_scalars(&[5.0, 6.0]);
        let g = saliency(&model, &x, 0).unwrap();
        assert_eq!(g.data(), &[1.0, -2.0]);
        let g = saliency(&model, &x, 1).unwrap();
        assert_eq!(g.data(), &[0.3, 0.4]);
    }

    #[test]
    fn input_x_grad_linear_model() {
        let model = LinearModel::new(vec![vec![2.0_f64, -1.0]], 1).unwrap();
        let x = FeatureTensor::from_scalars(&[3.0, 4.0]);
        let g = input_x_grad(&model, &x, 0).unwrap();
        assert_eq!(g.data(), &[6.0, -4.0]);
        let zero = input_x_grad(&model, &FeatureTensor::zeros(2, 1), 0).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn integrated_gradients_linear_closed_form() {
        let model = LinearModel::new(vec![vec![1.5_f64, -0.5, 2.0]], 1).unwrap();
        let x = FeatureTensor::from_scalars(&[2.0, 1.0, -1.0]);
        let b = FeatureTensor::from_scalars(&[0.5, 0.0, 1.0]);
        for steps in [1, 3, 50] {
            let attr = integrated_gradients(&model, &x, &b, 0, steps).unwrap();
            let expected = [1.5 * 1.5, -0.5 * 1.0, 2.0 * -2.0];
            for (a, e) in attr.data().iter().zip(expected) {
                assert!((a - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn integrated_gradients_at_background_is_zero() {
        let model = LinearModel::new(vec![vec![1.0_f64, 1.0]], 1).unwrap();
        let x = FeatureTensor::from_scalars(&[0.7, -0.2]);
        let attr = integrated_gradients(&model, &x, &x, 0, 10).unwrap();
        assert!(attr.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lime_constant_model_gives_null_coefficients() {
        let model = ConstantModel::new(vec![0.42_f64, -0.1], 1);
        let x = FeatureTensor::from_scalars(&[1.0; 10]);
        let b = FeatureTensor::zeros(10, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = lime(&model, &x, &b, 0, 60, (0.05, 0.13), 3, &mut rng).unwrap();
        assert!(s.scores.iter().all(|&v| v.abs() < 1e-8));
    }

    #[test]
    fn lime_is_deterministic_under_fixed_seed() {
        let model = LinearModel::new(vec![(0..12).map(|i| i as f64 * 0.3 - 1.0).collect()], 1)
            .unwrap();
        let x = FeatureTensor::from_scalars(&[1.0; 12]);
        let b = FeatureTensor::zeros(12, 1);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            lime(&model, &x, &b, 0, 50, (0.05, 0.13), 3, &mut rng).unwrap()
        };
        assert_eq!(run().scores, run().scores);
    }

    #[test]
    fn lime_recovers_signs_of_additive_model() {
        // +-alternating weights, enough draws to overdetermine the fit
        let weights: Vec<f64> = (0..12)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + i as f64 * 0.1))
            .collect();
        let model = LinearModel::new(vec![weights.clone()], 1).unwrap();
        let x = FeatureTensor::from_scalars(&[1.0; 12]);
        let b = FeatureTensor::zeros(12, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = lime(&model, &x, &b, 0, 500, (0.05, 0.13), 3, &mut rng).unwrap();
        let matches = s
            .scores
            .iter()
            .zip(&weights)
            .filter(|(&c, &w)| c.signum() == w.signum())
            .count();
        assert!(matches as f64 >= 0.95 * 12.0, "only {matches}/12 signs match");
    }

    #[test]
    fn shapley_additive_model_is_exact_for_any_permutation_count() {
        let model = LinearModel::new(vec![vec![1.0_f64, -2.0, 0.5, 3.0]], 1).unwrap();
        let x = FeatureTensor::from_scalars(&[1.0, 1.0, 2.0, -1.0]);
        let b = FeatureTensor::from_scalars(&[0.0, 0.5, 0.0, 0.0]);
        for perms in [1, 5] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let s = shapley_sampling(&model, &x, &b, 0, perms, &mut rng).unwrap();
            let expected = [1.0, -2.0 * 0.5, 0.5 * 2.0, 3.0 * -1.0];
            for (a, e) in s.scores.iter().zip(expected) {
                assert!((a - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn shapley_deterministic_under_fixed_seed() {
        let model = LinearModel::new(vec![vec![1.0_f64, -2.0, 0.5, 3.0]], 1).unwrap();
        let x = FeatureTensor::from_scalars(&[1.0, 1.0, 2.0, -1.0]);
        let b = FeatureTensor::zeros(4, 1);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            shapley_sampling(&model, &x, &b, 0, 10, &mut rng).unwrap().scores
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shapley_efficiency_identity_per_permutation() {
        // nonlinear in the mask pattern: use a constant + interaction model
        #[derive(Debug)]
        struct Product;
        impl Model<f64> for Product {
            fn feature_dim(&self) -> usize {
                1
            }
            fn num_classes(&self) -> usize {
                1
            }
            fn forward(&self, input: &FeatureTensor<f64>) -> Result<Vec<f64>> {
                Ok(vec![input.data().iter().product::<f64>()
                    + input.data().iter().sum::<f64>()])
            }
            fn vjp(&self, input: &FeatureTensor<f64>, _: &[f64]) -> Result<FeatureTensor<f64>> {
                Ok(FeatureTensor::zeros(input.positions(), 1))
            }
        }
        let model = Product;
        let x = FeatureTensor::from_scalars(&[1.3, -0.7, 2.1, 0.4]);
        let b = FeatureTensor::from_scalars(&[0.2, 0.1, -0.3, 0.0]);
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = shapley_sampling(&model, &x, &b, 0, 1, &mut rng).unwrap();
            let total: f64 = s.scores.iter().sum();
            let fx = model.forward(&x).unwrap()[0];
            let fb = model.forward(&b).unwrap()[0];
            assert!((total - (fx - fb)).abs() < 1e-12);
        }
    }

    #[test]
    fn reduce_modes_match_hand_values() {
        let t = FeatureTensor::new(2, 2, vec![1.0_f64, -2.0, 0.0, 0.0]).unwrap();
        let n = reduce_embedding_scores(&t, ReduceMode::NormL1, 1, "m").unwrap();
        assert_eq!(n.scores, vec![3.0, 0.0]);
        let s = reduce_embedding_scores(&t, ReduceMode::SignedSum, 1, "m").unwrap();
        assert_eq!(s.scores, vec![-1.0, 0.0]);
        let s0 = reduce_embedding_scores(&t, ReduceMode::SignedSum, 0, "m").unwrap();
        assert_eq!(s0.scores, vec![1.0, 0.0]);
    }
}
