//! Integration tests for the optimization loop: determinism, trace
//! semantics, clamping, and descent behavior.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use marc_core::mask::MaskParams;
use marc_core::model::{ConstantModel, LinearModel};
use marc_core::objective::{
    total_objective, Background, ObjectiveConfig, RegWeights, ScoringConfig,
};
use marc_core::optim::{optimize_mask, preset, Adam, OptimConfig, PerturbConfig};
use marc_core::space::FeatureSpace;
use marc_core::tensor::FeatureTensor;

fn small_setup() -> (
    LinearModel<f64>,
    FeatureTensor<f64>,
    Vec<Background<f64>>,
    FeatureSpace,
    ScoringConfig,
) {
    let model = LinearModel::new(
        vec![vec![1.2, -0.4, 0.8, 0.0, 0.5, -0.9], vec![-0.6, 0.3, -0.2, 0.7, 0.0, 0.4]],
        1,
    )
    .unwrap();
    let x = FeatureTensor::from_scalars(&[1.0, -0.5, 0.8, 0.2, -1.1, 0.6]);
    let backgrounds = vec![Background::new(FeatureTensor::zeros(6, 1), "pad")];
    let space = FeatureSpace::chain(6).unwrap();
    let scoring = ScoringConfig::log_softmax(0);
    (model, x, backgrounds, space, scoring)
}

fn quick_config() -> OptimConfig {
    let mut cfg = preset("text-default").unwrap().optim;
    cfg.steps = 40;
    cfg
}

#[test]
fn same_seed_gives_identical_masks_and_traces() {
    let (model, x, backgrounds, space, scoring) = small_setup();
    let optim = quick_config();
    let perturb = preset("text-default").unwrap().perturb;
    let run = || optimize_mask(&model, &x, &backgrounds, &space, &scoring, &optim, &perturb)
        .unwrap();
    let a = run();
    let b = run();
    assert_eq!(a.mask.lambda(), b.mask.lambda());
    assert_eq!(a.trace, b.trace);
}

#[test]
fn different_seeds_differ_under_perturbation() {
    let (model, x, backgrounds, space, scoring) = small_setup();
    let mut optim = quick_config();
    let perturb = preset("text-default").unwrap().perturb;
    let a = optimize_mask(&model, &x, &backgrounds, &space, &scoring, &optim, &perturb).unwrap();
    optim.rng_seed = 1;
    let b = optimize_mask(&model, &x, &backgrounds, &space, &scoring, &optim, &perturb).unwrap();
    assert_ne!(a.mask.lambda(), b.mask.lambda());
}

/// With perturbation disabled, the loop must be reproducible by an
/// independent objective + Adam recursion, step for step.
#[test]
fn disabled_perturbation_trace_equals_exact_objective() {
    let (model, x, backgrounds, space, scoring) = small_setup();
    let optim = quick_config();
    let outcome = optimize_mask(
        &model,
        &x,
        &backgrounds,
        &space,
        &scoring,
        &optim,
        &PerturbConfig::disabled(),
    )
    .unwrap();

    // shadow loop
    let cfg = ObjectiveConfig {
        scoring: scoring.clone(),
        regs: RegWeights {
            alpha_lambda: optim.alpha_lambda,
            alpha_sigma: optim.alpha_sigma,
            alpha_nb: optim.alpha_nb,
        },
        include_complement: optim.include_complement,
        truncation_eps: optim.truncation_eps,
    };
    let mut params = MaskParams::untied(6, optim.w_init, optim.sigma_init).unwrap();
    let mut adam = Adam::<f64>::new(
        12,
        optim.lr,
        optim.adam_beta1,
        optim.adam_beta2,
        optim.adam_eps,
    )
    .unwrap();
    for (step, row) in outcome.trace.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(optim.rng_seed);
        let eval = total_objective(
            &model,
            &x,
            &backgrounds,
            &space,
            &params,
            &cfg,
            &PerturbConfig::disabled(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(
            eval.loss, row.loss,
            "trace loss at step {} is not the exact objective",
            step + 1
        );
        let mut flat: Vec<f64> = params.w().iter().chain(params.sigma()).copied().collect();
        let grads: Vec<f64> = eval
            .grad_w
            .iter()
            .chain(eval.grad_sigma.iter())
            .copied()
            .collect();
        adam.step(&mut flat, &grads).unwrap();
        params.w_mut().copy_from_slice(&flat[..6]);
        params.sigma_mut().copy_from_slice(&flat[6..]);
        params.clamp_sigma(optim.sigma_clamp.0, optim.sigma_clamp.1);
    }
}

#[test]
fn constant_model_pure_regularizer_descent() {
    let model = ConstantModel::new(vec![0.4_f64, -0.4], 1);
    let x = FeatureTensor::from_scalars(&[1.0; 12]);
    let backgrounds = vec![Background::new(FeatureTensor::zeros(12, 1), "pad")];
    let space = FeatureSpace::chain(12).unwrap();
    let scoring = ScoringConfig::log_softmax(0);
    let mut optim = preset("text-default").unwrap().optim;
    optim.steps = 120;
    let outcome = optimize_mask(
        &model,
        &x,
        &backgrounds,
        &space,
        &scoring,
        &optim,
        &PerturbConfig::disabled(),
    )
    .unwrap();
    // the sparsity term pushes the mean mask down from its initial value
    assert!(
        outcome.trace.last().unwrap().mean_lambda < outcome.trace[0].mean_lambda,
        "mean lambda did not decrease"
    );
    // smooth objective: loss non-increasing after the warmup steps
    for pair in outcome.trace[10..].windows(2) {
        assert!(
            pair[1].loss <= pair[0].loss + 1e-6,
            "loss increased from {} to {} at step {}",
            pair[0].loss,
            pair[1].loss,
            pair[1].step
        );
    }
}

#[test]
fn sigma_respects_clamp_throughout() {
    let (model, x, backgrounds, space, scoring) = small_setup();
    let mut optim = quick_config();
    optim.sigma_clamp = (1.5, 2.5);
    optim.steps = 60;
    let perturb = preset("text-default").unwrap().perturb;
    let outcome =
        optimize_mask(&model, &x, &backgrounds, &space, &scoring, &optim, &perturb).unwrap();
    for row in &outcome.trace[1..] {
        assert!(row.mean_sigma >= 1.5 - 1e-12 && row.mean_sigma <= 2.5 + 1e-12);
    }
    for &s in outcome.params.sigma() {
        assert!((1.5..=2.5).contains(&s));
    }
}

#[test]
fn non_finite_loss_aborts_with_diagnostic() {
    // a model emitting NaN logits must surface as an error, not a panic
    #[derive(Debug)]
    struct NanModel;
    impl marc_core::model::Model<f64> for NanModel {
        fn feature_dim(&self) -> usize {
            1
        }
        fn num_classes(&self) -> usize {
            2
        }
        fn forward(
            &self,
            _input: &FeatureTensor<f64>,
        ) -> marc_core::Result<Vec<f64>> {
            Ok(vec![f64::NAN, 0.0])
        }
        fn vjp(
            &self,
            input: &FeatureTensor<f64>,
            _cotangent: &[f64],
        ) -> marc_core::Result<FeatureTensor<f64>> {
            Ok(FeatureTensor::zeros(input.positions(), 1))
        }
    }
    let x = FeatureTensor::from_scalars(&[1.0, 2.0]);
    let backgrounds = vec![Background::new(FeatureTensor::zeros(2, 1), "pad")];
    let space = FeatureSpace::chain(2).unwrap();
    let optim = quick_config();
    let err = optimize_mask(
        &NanModel,
        &x,
        &backgrounds,
        &space,
        &ScoringConfig::log_softmax(0),
        &optim,
        &PerturbConfig::disabled(),
    )
    .unwrap_err();
    assert!(matches!(err, marc_core::Error::NonFiniteLoss { step: 1, .. }));
}
