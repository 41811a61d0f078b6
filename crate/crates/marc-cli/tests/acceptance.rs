//! Acceptance suite. Each test checks one release criterion end to end at
//! its stated tolerance and prints a `criterion N: PASS` line; run with
//! `cargo test --test acceptance -- --nocapture` to see them.

use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use marc_core::baselines::integrated_gradients;
use marc_core::eval::{
    average_precision, corpus_iou_f1, f1_from_counts, faithfulness, iou_match_counts,
    rank_positions_desc, token_counts, NwBinarizer, Rationale, Span,
};
use marc_core::mask::{compute_mask, MaskParams};
use marc_core::model::{
    generate_planted_dataset, train_toy_model_with, ConstantModel, LinearModel, Model, Sample,
    SampleFeatures, Task, ToyImageModel, ToyModel, ToyTextModel, TrainOptions, Trainable,
};
use marc_core::objective::{
    total_objective, Background, ObjectiveConfig, RegWeights, ScoringConfig,
};
use marc_core::optim::{preset, PerturbConfig};
use marc_core::pipeline::{explain_sample, ExplainOptions, Method};
use marc_core::space::FeatureSpace;
use marc_core::tensor::FeatureTensor;

// ---------------------------------------------------------------------------
// shared fixture: trained text model + 50-positive-sample suite, explained
// with the mask optimizer (full and ablated) and the saliency baseline
// ---------------------------------------------------------------------------

struct MethodEval {
    scores: Vec<Vec<f64>>,
    sufficiency: f64,
    comprehensiveness: f64,
    token_f1: f64,
    iou_f1: f64,
    mean_span_len: f64,
}

struct Fixture {
    model: ToyModel<f64>,
    accuracy: f64,
    suite: Vec<Sample>,
    marc: MethodEval,
    saliency: MethodEval,
    marc_no_complement: MethodEval,
    marc_no_sigma_reg: MethodEval,
    /// Seconds spent on train + marc + saliency (the criterion-3 budget).
    core_seconds: f64,
}

fn evaluate_method(
    model: &ToyModel<f64>,
    suite: &[Sample],
    method: Method,
    mutate: impl Fn(&mut ExplainOptions),
) -> MethodEval {
    let mut opts = ExplainOptions::new(method, preset("text-default").unwrap(), 2024);
    mutate(&mut opts);
    let mut scores = Vec::with_capacity(suite.len());
    let mut suff = 0.0;
    let mut comp = 0.0;
    for (id, sample) in suite.iter().enumerate() {
        let e = explain_sample(model, sample, id, &opts, 0.0).unwrap();
        suff += e.faithfulness.sufficiency;
        comp += e.faithfulness.comprehensiveness;
        scores.push(e.scores);
    }
    let golds: Vec<Vec<bool>> = suite.iter().map(|s| s.gold_bools()).collect();
    let refs: Vec<(&[f64], &[bool])> = scores
        .iter()
        .zip(&golds)
        .map(|(s, g)| (s.as_slice(), g.as_slice()))
        .collect();
    let nw = NwBinarizer::from_references(&refs, 0.1, 0.05).unwrap();
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut pairs = Vec::new();
    let mut span_len = 0usize;
    let mut span_count = 0usize;
    for (k, (s, g)) in scores.iter().zip(&golds).enumerate() {
        let pred = nw.binarize(s, Some(k));
        let gold = Rationale::from_binary(g.clone());
        let (a, b, c) = token_counts(&pred, &gold).unwrap();
        tp += a;
        fp += b;
        fn_ += c;
        span_len += pred.spans().iter().map(Span::len).sum::<usize>();
        span_count += pred.spans().len();
        pairs.push((pred, gold));
    }
    MethodEval {
        scores,
        sufficiency: suff / suite.len() as f64,
        comprehensiveness: comp / suite.len() as f64,
        token_f1: f1_from_counts(tp, fp, fn_),
        iou_f1: corpus_iou_f1(pairs.iter().map(|(p, g)| (p, g))),
        mean_span_len: span_len as f64 / span_count.max(1) as f64,
    }
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let t0 = Instant::now();
        let data = generate_planted_dataset(Task::Text, 6000, 1234).unwrap();
        let mut model = ToyTextModel::<f64>::new(200, 16, 32, 32, 2, 7).unwrap();
        let report = train_toy_model_with(
            &mut model,
            &data,
            TrainOptions::new(10, 0.003, 99)
                .with_pad_dropout(0.8)
                .with_embedding_decay(0.005)
                .with_token_substitution(0.3),
        )
        .unwrap();
        let model = ToyModel::Text(model);
        let suite: Vec<Sample> = generate_planted_dataset(Task::Text, 120, 555)
            .unwrap()
            .into_iter()
            .filter(|s| s.label == 1)
            .take(50)
            .collect();
        assert_eq!(suite.len(), 50);

        let marc = evaluate_method(&model, &suite, Method::Marc, |_| {});
        let saliency = evaluate_method(&model, &suite, Method::Saliency, |_| {});
        let core_seconds = t0.elapsed().as_secs_f64();

        let marc_no_complement = evaluate_method(&model, &suite, Method::Marc, |o| {
            o.preset.optim.include_complement = false;
        });
        let marc_no_sigma_reg = evaluate_method(&model, &suite, Method::Marc, |o| {
            o.preset.optim.alpha_sigma = 0.0;
        });
        Fixture {
            model,
            accuracy: report.holdout_accuracy,
            suite,
            marc,
            saliency,
            marc_no_complement,
            marc_no_sigma_reg,
            core_seconds,
        }
    })
}

// ---------------------------------------------------------------------------
// criterion 1: analytic objective gradient vs central finite differences
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_objective_gradient_matches_finite_differences() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_001);
    let cfg = ObjectiveConfig {
        scoring: ScoringConfig::log_softmax(1),
        regs: RegWeights {
            alpha_lambda: 1.0,
            alpha_sigma: 1.2,
            alpha_nb: 0.0,
        },
        include_complement: true,
        truncation_eps: 0.0,
    };
    let mut worst: f64 = 0.0;
    for instance in 0..20 {
        let model = ToyTextModel::<f64>::new(200, 8, 6, 6, 2, 100 + instance).unwrap();
        let n = rng.gen_range(4..=32usize);
        let tokens: Vec<u32> = (0..n).map(|_| rng.gen_range(1..200)).collect();
        let x = model.embed(&tokens).unwrap();
        let space = FeatureSpace::chain(n).unwrap();
        let backgrounds = [Background::new(FeatureTensor::zeros(n, 8), "pad")];
        let mut params = MaskParams::untied(n, 0.0_f64, 1.0).unwrap();
        for w in params.w_mut() {
            *w = rng.gen_range(-2.0..2.0);
        }
        for s in params.sigma_mut() {
            *s = rng.gen_range(0.5..5.0);
        }

        let eval_loss = |p: &MaskParams<f64>| -> f64 {
            let mut r = ChaCha8Rng::seed_from_u64(0);
            total_objective(
                &model,
                &x,
                &backgrounds,
                &space,
                p,
                &cfg,
                &PerturbConfig::disabled(),
                &mut r,
            )
            .unwrap()
            .loss
        };
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let eval = total_objective(
            &model,
            &x,
            &backgrounds,
            &space,
            &params,
            &cfg,
            &PerturbConfig::disabled(),
            &mut r,
        )
        .unwrap();

        let h = 1e-5;
        let mut fd = Vec::with_capacity(2 * n);
        for k in 0..n {
            let mut plus = params.clone();
            plus.w_mut()[k] += h;
            let mut minus = params.clone();
            minus.w_mut()[k] -= h;
            fd.push((eval_loss(&plus) - eval_loss(&minus)) / (2.0 * h));
        }
        for k in 0..n {
            let mut plus = params.clone();
            plus.sigma_mut()[k] += h;
            let mut minus = params.clone();
            minus.sigma_mut()[k] -= h;
            fd.push((eval_loss(&plus) - eval_loss(&minus)) / (2.0 * h));
        }
        let analytic: Vec<f64> = eval
            .grad_w
            .iter()
            .chain(eval.grad_sigma.iter())
            .copied()
            .collect();
        let diff_norm = fd
            .iter()
            .zip(&analytic)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let ref_norm = analytic.iter().map(|g| g * g).sum::<f64>().sqrt();
        let rel = diff_norm / ref_norm.max(1e-12);
        worst = worst.max(rel);
        assert!(
            rel < 1e-4,
            "criterion 1: instance {instance} (n={n}) relative error {rel:.3e} >= 1e-4"
        );
    }
    let secs = t0.elapsed().as_secs_f64();
    assert!(secs < 30.0, "criterion 1: took {secs:.1}s >= 30s");
    println!(
        "criterion 1: PASS — objective gradient matches finite differences on 20 instances \
         (worst relative error {worst:.2e}, {secs:.1}s)"
    );
}

// ---------------------------------------------------------------------------
// criterion 2: truncated mask kernel vs exact O(n^2) sum
// ---------------------------------------------------------------------------

fn exact_mask_reference(space: &FeatureSpace, params: &MaskParams<f64>) -> Vec<f64> {
    let n = space.len();
    (0..n)
        .map(|j| {
            let mut s = 0.0;
            for i in 0..n {
                let slot = params.tying()[i];
                s += params.w()[slot] * (-space.distance_sq(i, j) / params.sigma()[slot]).exp();
            }
            1.0 / (1.0 + (-s).exp())
        })
        .collect()
}

#[test]
fn criterion_2_mask_truncation_sound_up_to_1024() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_002);
    let mut worst: f64 = 0.0;
    for space in [
        FeatureSpace::chain(64).unwrap(),
        FeatureSpace::chain(1024).unwrap(),
        FeatureSpace::grid(32, 32).unwrap(),
        FeatureSpace::grid(8, 128).unwrap(),
    ] {
        for _ in 0..3 {
            let n = space.len();
            let mut params = MaskParams::untied(n, 0.0_f64, 1.0).unwrap();
            for w in params.w_mut() {
                *w = rng.gen_range(-3.0..3.0);
            }
            for s in params.sigma_mut() {
                *s = rng.gen_range(0.1..10.0);
            }
            let truncated = compute_mask(&space, &params, 1e-8).unwrap();
            let exact = exact_mask_reference(&space, &params);
            let max_diff = truncated
                .lambda()
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            worst = worst.max(max_diff);
            assert!(
                max_diff < 1e-6,
                "criterion 2: {space:?} truncation drift {max_diff:.3e} >= 1e-6"
            );
        }
    }
    println!(
        "criterion 2: PASS — truncated mask within {worst:.2e} of the exact sum up to n=1024"
    );
}

// ---------------------------------------------------------------------------
// criteria 3-5: planted-rationale recovery, faithfulness ordering, ablations
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_planted_rationale_recovery() {
    let f = fixture();
    assert!(
        f.accuracy >= 0.97,
        "criterion 3: held-out accuracy {:.4} < 0.97",
        f.accuracy
    );
    assert!(
        f.marc.token_f1 >= 0.75,
        "criterion 3: token F1 {:.4} < 0.75",
        f.marc.token_f1
    );
    assert!(
        f.marc.iou_f1 >= 0.5,
        "criterion 3: IoU F1 {:.4} < 0.5",
        f.marc.iou_f1
    );
    assert!(
        f.marc.token_f1 > f.saliency.token_f1,
        "criterion 3: token F1 {:.4} does not beat saliency {:.4}",
        f.marc.token_f1,
        f.saliency.token_f1
    );
    assert!(
        f.core_seconds < 300.0,
        "criterion 3: train + explain took {:.0}s >= 5min",
        f.core_seconds
    );
    // the soft masks themselves separate planted from filler positions
    let mut gold_mass = 0.0;
    let mut gold_n = 0.0;
    let mut rest_mass = 0.0;
    let mut rest_n = 0.0;
    for (scores, sample) in f.marc.scores.iter().zip(&f.suite) {
        for (s, g) in scores.iter().zip(sample.gold_bools()) {
            if g {
                gold_mass += s;
                gold_n += 1.0;
            } else {
                rest_mass += s;
                rest_n += 1.0;
            }
        }
    }
    assert!(
        gold_mass / gold_n > rest_mass / rest_n,
        "criterion 3: mean mask on planted positions ({:.3}) not above filler ({:.3})",
        gold_mass / gold_n,
        rest_mass / rest_n
    );
    println!(
        "criterion 3: PASS — accuracy {:.3}, token F1 {:.3} (saliency {:.3}), IoU F1 {:.3}, {:.0}s",
        f.accuracy, f.marc.token_f1, f.saliency.token_f1, f.marc.iou_f1, f.core_seconds
    );
}

#[test]
fn criterion_4_faithfulness_ordering_vs_saliency() {
    let f = fixture();
    assert!(
        f.marc.sufficiency <= f.saliency.sufficiency,
        "criterion 4: sufficiency {:.4} > saliency {:.4}",
        f.marc.sufficiency,
        f.saliency.sufficiency
    );
    assert!(
        f.marc.comprehensiveness >= f.saliency.comprehensiveness,
        "criterion 4: comprehensiveness {:.4} < saliency {:.4}",
        f.marc.comprehensiveness,
        f.saliency.comprehensiveness
    );
    println!(
        "criterion 4: PASS — sufficiency {:.4} <= {:.4}, comprehensiveness {:.4} >= {:.4}",
        f.marc.sufficiency,
        f.saliency.sufficiency,
        f.marc.comprehensiveness,
        f.saliency.comprehensiveness
    );
}

#[test]
fn criterion_5_ablation_directions() {
    let f = fixture();
    assert!(
        f.marc_no_complement.comprehensiveness < f.marc.comprehensiveness,
        "criterion 5: dropping the complement term did not reduce comprehensiveness \
         ({:.4} vs {:.4})",
        f.marc_no_complement.comprehensiveness,
        f.marc.comprehensiveness
    );
    assert!(
        f.marc_no_sigma_reg.mean_span_len < f.marc.mean_span_len,
        "criterion 5: dropping the spread regularizer did not reduce span length \
         ({:.2} vs {:.2})",
        f.marc_no_sigma_reg.mean_span_len,
        f.marc.mean_span_len
    );
    println!(
        "criterion 5: PASS — comprehensiveness {:.3} -> {:.3} without complement; \
         span length {:.2} -> {:.2} without spread regularizer",
        f.marc.comprehensiveness,
        f.marc_no_complement.comprehensiveness,
        f.marc.mean_span_len,
        f.marc_no_sigma_reg.mean_span_len
    );
}

// ---------------------------------------------------------------------------
// criterion 6: sampled Shapley vs exact Shapley over all coalitions
// ---------------------------------------------------------------------------

fn coalition_value(
    model: &ToyTextModel<f64>,
    x: &FeatureTensor<f64>,
    background: &FeatureTensor<f64>,
    mask: u32,
) -> f64 {
    let mut input = background.clone();
    for j in 0..x.positions() {
        if mask & (1 << j) != 0 {
            input.position_mut(j).copy_from_slice(x.position(j));
        }
    }
    model.forward(&input).unwrap()[1]
}

#[test]
fn criterion_6_shapley_sampling_matches_brute_force() {
    let n = 8usize;
    let model = ToyTextModel::<f64>::new(50, 6, 5, 5, 2, 61).unwrap();
    let tokens: Vec<u32> = (1..=n as u32).collect();
    let x = model.embed(&tokens).unwrap();
    let background = FeatureTensor::zeros(n, 6);

    // exact Shapley values over all 2^8 coalitions
    let values: Vec<f64> = (0u32..1 << n)
        .map(|m| coalition_value(&model, &x, &background, m))
        .collect();
    let mut factorial = [1.0_f64; 9];
    for k in 1..=n {
        factorial[k] = factorial[k - 1] * k as f64;
    }
    let mut exact = vec![0.0_f64; n];
    for j in 0..n {
        for m in 0u32..1 << n {
            if m & (1 << j) != 0 {
                continue;
            }
            let s = m.count_ones() as usize;
            let weight = factorial[s] * factorial[n - s - 1] / factorial[n];
            exact[j] += weight * (values[(m | (1 << j)) as usize] - values[m as usize]);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(20_240_006);
    let sampled =
        marc_core::baselines::shapley_sampling(&model, &x, &background, 1, 2000, &mut rng)
            .unwrap();
    let mut worst: f64 = 0.0;
    for (a, e) in sampled.scores.iter().zip(&exact) {
        worst = worst.max((a - e).abs());
    }
    assert!(
        worst <= 0.02,
        "criterion 6: sampled Shapley off by {worst:.4} > 0.02"
    );

    // efficiency identity per permutation (single-permutation runs)
    let fx = values[(1 << n) - 1];
    let fb = values[0];
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let one = marc_core::baselines::shapley_sampling(&model, &x, &background, 1, 1, &mut rng)
            .unwrap();
        let total: f64 = one.scores.iter().sum();
        assert!(
            (total - (fx - fb)).abs() < 1e-9,
            "criterion 6: efficiency identity violated by {:.2e}",
            (total - (fx - fb)).abs()
        );
    }
    println!(
        "criterion 6: PASS — sampled Shapley within {worst:.4} of brute force; \
         efficiency identity telescopes per permutation"
    );
}

// ---------------------------------------------------------------------------
// criterion 7: integrated gradients closed form and completeness
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_integrated_gradients_closed_form_and_completeness() {
    // closed form on a linear model, any step count
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_007);
    let n = 6;
    let weights: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let model = LinearModel::new(weights.clone(), 1).unwrap();
    let xv: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let bv: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let x = FeatureTensor::from_scalars(&xv);
    let b = FeatureTensor::from_scalars(&bv);
    for steps in [1, 7, 50] {
        let attr = integrated_gradients(&model, &x, &b, 1, steps).unwrap();
        for j in 0..n {
            let expected = weights[1][j] * (xv[j] - bv[j]);
            assert!(
                (attr.data()[j] - expected).abs() <= 1e-10,
                "criterion 7: linear closed form off by {:.2e}",
                (attr.data()[j] - expected).abs()
            );
        }
    }

    // completeness on the trained text model and a trained image model
    let f = fixture();
    let text_model = f.model.as_text().unwrap();
    let mut worst: f64 = 0.0;
    for sample in f.suite.iter().take(3) {
        let tokens = match &sample.features {
            SampleFeatures::Tokens(t) => t,
            SampleFeatures::Grid { .. } => unreachable!(),
        };
        let x = text_model.embed(tokens).unwrap();
        let b = FeatureTensor::zeros(x.positions(), x.dim());
        let attr = integrated_gradients(text_model, &x, &b, sample.label, 200).unwrap();
        let total: f64 = attr.data().iter().sum();
        let gap = (total
            - (text_model.forward(&x).unwrap()[sample.label]
                - text_model.forward(&b).unwrap()[sample.label]))
            .abs();
        worst = worst.max(gap);
    }
    let image_data = generate_planted_dataset(Task::Image, 1200, 77).unwrap();
    let mut image_model = ToyImageModel::<f64>::new(24, 24, 4, 2, 7).unwrap();
    train_toy_model_with(&mut image_model, &image_data, TrainOptions::new(8, 0.005, 99)).unwrap();
    for sample in generate_planted_dataset(Task::Image, 3, 43).unwrap() {
        let x = image_model.input_from_sample(&sample).unwrap();
        let b = FeatureTensor::zeros(x.positions(), 1);
        let attr = integrated_gradients(&image_model, &x, &b, sample.label, 200).unwrap();
        let total: f64 = attr.data().iter().sum();
        let gap = (total
            - (image_model.forward(&x).unwrap()[sample.label]
                - image_model.forward(&b).unwrap()[sample.label]))
            .abs();
        worst = worst.max(gap);
    }
    assert!(
        worst < 1e-3,
        "criterion 7: completeness gap {worst:.2e} >= 1e-3 at 200 steps"
    );
    println!(
        "criterion 7: PASS — linear closed form exact to 1e-10; completeness gap {worst:.2e} \
         at 200 steps"
    );
}

// ---------------------------------------------------------------------------
// criterion 8: metric implementations vs naive reference implementations
// ---------------------------------------------------------------------------

/// Naive faithfulness: explicit top lists, hand-built tensors, inline
/// softmax. No shared ranking or masking code with the library path.
fn naive_faithfulness(
    model: &LinearModel<f64>,
    x: &[f64],
    class: usize,
    scores: &[f64],
    backgrounds: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let prob = |values: &[f64]| -> f64 {
        let logits = model
            .forward(&FeatureTensor::from_scalars(values))
            .unwrap();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        (logits[class] - max).exp() / denom
    };
    let full = prob(x);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut suff = Vec::new();
    let mut comp = Vec::new();
    for i in 1..=19usize {
        let k = (i * 5 * n + 50) / 100;
        let top = &order[..k.min(n)];
        let mut s_acc = 0.0;
        let mut c_acc = 0.0;
        for bg in backgrounds {
            let mut only: Vec<f64> = bg.clone();
            let mut without: Vec<f64> = x.to_vec();
            for &j in top {
                only[j] = x[j];
                without[j] = bg[j];
            }
            s_acc += full - prob(&only);
            c_acc += full - prob(&without);
        }
        suff.push(s_acc / backgrounds.len() as f64);
        comp.push(c_acc / backgrounds.len() as f64);
    }
    (suff, comp)
}

/// Naive average precision: per gold position, count how many positions
/// outrank it; terms are added in rank order so the float sum is canonical.
fn naive_average_precision(scores: &[f64], gold: &[bool]) -> Option<f64> {
    let n = scores.len();
    let total_gold = gold.iter().filter(|&&g| g).count();
    if total_gold == 0 {
        return None;
    }
    let outranks = |a: usize, b: usize| {
        scores[a] > scores[b] || (scores[a] == scores[b] && a < b)
    };
    let mut terms = Vec::new();
    for j in 0..n {
        if !gold[j] {
            continue;
        }
        let rank = 1 + (0..n).filter(|&k| k != j && outranks(k, j)).count();
        let gold_at_or_above = (0..n)
            .filter(|&k| gold[k] && (k == j || outranks(k, j)))
            .count();
        terms.push((rank, gold_at_or_above as f64 / rank as f64));
    }
    terms.sort_by_key(|&(rank, _)| rank);
    Some(terms.iter().map(|&(_, p)| p).sum::<f64>() / total_gold as f64)
}

/// Naive IoU matching: repeatedly scan the full pair matrix for the best
/// remaining pair instead of sorting once.
fn naive_iou_counts(pred: &[Span], gold: &[Span]) -> (usize, usize, usize) {
    let iou = |a: &Span, b: &Span| -> f64 {
        let inter = a.end.min(b.end).saturating_sub(a.start.max(b.start));
        let union = (a.end - a.start) + (b.end - b.start) - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    };
    let mut used_p = vec![false; pred.len()];
    let mut used_g = vec![false; gold.len()];
    let mut matched = 0;
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, p) in pred.iter().enumerate() {
            for (j, g) in gold.iter().enumerate() {
                if used_p[i] || used_g[j] {
                    continue;
                }
                let v = iou(p, g);
                if v > 0.5 {
                    let better = match best {
                        None => true,
                        Some((bv, bi, bj)) => {
                            v > bv || (v == bv && (i, j) < (bi, bj))
                        }
                    };
                    if better {
                        best = Some((v, i, j));
                    }
                }
            }
        }
        match best {
            Some((_, i, j)) => {
                used_p[i] = true;
                used_g[j] = true;
                matched += 1;
            }
            None => break,
        }
    }
    (matched, pred.len(), gold.len())
}

#[test]
fn criterion_8_metrics_match_naive_references() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_008);
    for instance in 0..100 {
        let n = rng.gen_range(1..=12usize);
        // scores with deliberate ties to exercise the index tie-break
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.gen_range(0..=6) as f64) / 6.0)
            .collect();
        let gold: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();

        // mean average precision
        let lib_ap = average_precision(&scores, &gold).unwrap();
        let naive_ap = naive_average_precision(&scores, &gold);
        assert_eq!(lib_ap, naive_ap, "criterion 8: AP mismatch on instance {instance}");

        // faithfulness traces against a linear model
        let weights: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect())
            .collect();
        let model = LinearModel::new(weights, 1).unwrap();
        let xv: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n_bg = rng.gen_range(1..=2usize);
        let bgs: Vec<Vec<f64>> = (0..n_bg)
            .map(|_| (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect())
            .collect();
        let class = rng.gen_range(0..2usize);
        let x = FeatureTensor::from_scalars(&xv);
        let bg_tensors: Vec<FeatureTensor<f64>> = bgs
            .iter()
            .map(|b| FeatureTensor::from_scalars(b))
            .collect();
        let lib = faithfulness(&model, &x, class, &scores, &bg_tensors).unwrap();
        let (naive_suff, naive_comp) = naive_faithfulness(&model, &xv, class, &scores, &bgs);
        assert_eq!(
            lib.sufficiency_trace, naive_suff,
            "criterion 8: sufficiency trace mismatch on instance {instance}"
        );
        assert_eq!(
            lib.comprehensiveness_trace, naive_comp,
            "criterion 8: comprehensiveness trace mismatch on instance {instance}"
        );

        // IoU span matching
        let pred_bin: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let pred = Rationale::from_binary(pred_bin);
        let gold_r = Rationale::from_binary(gold.clone());
        assert_eq!(
            iou_match_counts(pred.spans(), gold_r.spans()),
            naive_iou_counts(pred.spans(), gold_r.spans()),
            "criterion 8: IoU matching mismatch on instance {instance}"
        );
    }
    println!(
        "criterion 8: PASS — faithfulness traces, AP, and IoU matching agree exactly with \
         naive references on 100 instances"
    );
}

// ---------------------------------------------------------------------------
// criterion 9: degenerate sanity on a constant model
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_constant_model_degenerates_to_zero() {
    let model = ConstantModel::new(vec![0.8_f64, -0.2], 1);
    let x = FeatureTensor::from_scalars(&[1.0, -2.0, 0.5, 3.0, 0.1]);
    let bg = FeatureTensor::zeros(5, 1);
    let scores = vec![0.9, 0.1, 0.5, 0.3, 0.7];
    let faith = faithfulness(&model, &x, 0, &scores, &[bg.clone()]).unwrap();
    assert_eq!(faith.sufficiency, 0.0, "criterion 9: sufficiency not exactly 0");
    assert_eq!(
        faith.comprehensiveness, 0.0,
        "criterion 9: comprehensiveness not exactly 0"
    );

    let space = FeatureSpace::chain(5).unwrap();
    let params = MaskParams::untied(5, 1.2_f64, 2.0).unwrap();
    let cfg = ObjectiveConfig {
        scoring: ScoringConfig::log_softmax(0),
        regs: RegWeights {
            alpha_lambda: 0.0,
            alpha_sigma: 0.0,
            alpha_nb: 0.0,
        },
        include_complement: true,
        truncation_eps: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let eval = total_objective(
        &model,
        &x,
        &[Background::new(bg, "pad")],
        &space,
        &params,
        &cfg,
        &PerturbConfig::disabled(),
        &mut rng,
    )
    .unwrap();
    assert!(
        eval.grad_w.iter().all(|&g| g == 0.0),
        "criterion 9: score-term w gradient not exactly zero"
    );
    assert!(
        eval.grad_sigma.iter().all(|&g| g == 0.0),
        "criterion 9: score-term sigma gradient not exactly zero"
    );
    assert_eq!(eval.score_term, 0.0);
    println!("criterion 9: PASS — constant model yields zero faithfulness and zero score gradients");
}

// ---------------------------------------------------------------------------
// criterion 10: CLI byte-determinism
// ---------------------------------------------------------------------------

fn run_cli(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_marc"))
        .args(args)
        .env_remove("MARC_SEED")
        .status()
        .expect("CLI binary runs");
    assert!(status.success(), "CLI command failed: {args:?}");
}

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().to_string();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn criterion_10_cli_commands_are_byte_deterministic() {
    let base = std::env::temp_dir().join("marc_acceptance_determinism");
    let _ = std::fs::remove_dir_all(&base);
    for run in ["a", "b"] {
        let dir = base.join(run);
        std::fs::create_dir_all(&dir).unwrap();
        let p = |name: &str| dir.join(name).to_string_lossy().to_string();
        run_cli(&[
            "generate-data", "--task", "text", "--size", "6", "--seed", "9",
            "--out", &p("data.jsonl"),
        ]);
        run_cli(&[
            "train", "--dataset", &p("data.jsonl"), "--model-kind", "text",
            "--epochs", "2", "--seed", "3", "--out", &p("model.bin"),
        ]);
        run_cli(&[
            "explain", "--model", &p("model.bin"), "--dataset", &p("data.jsonl"),
            "--method", "marc", "--steps", "15", "--seed", "4",
            "--out", &p("reports"),
        ]);
        run_cli(&[
            "evaluate", "--reports", &p("reports"), "--dataset", &p("data.jsonl"),
            "--out", &p("metrics.json"),
        ]);
        run_cli(&[
            "render", "--reports", &p("reports"), "--dataset", &p("data.jsonl"),
            "--out", &p("renders"),
        ]);
    }
    let a = dir_bytes(&base.join("a"));
    let b = dir_bytes(&base.join("b"));
    assert_eq!(a.len(), b.len(), "criterion 10: runs produced different file sets");
    for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(&b) {
        assert_eq!(name_a, name_b, "criterion 10: file set differs");
        assert_eq!(
            bytes_a, bytes_b,
            "criterion 10: {name_a} differs between identically seeded runs"
        );
    }
    let _ = std::fs::remove_dir_all(&base);
    println!(
        "criterion 10: PASS — all five CLI commands byte-identical across two runs ({} files)",
        a.len()
    );
}

// ---------------------------------------------------------------------------
// smoke: every method produces a full-length report through the CLI driver
// ---------------------------------------------------------------------------

#[test]
fn all_methods_smoke_through_pipeline() {
    let f = fixture();
    let smoke: Vec<Sample> = f.suite.iter().take(5).cloned().collect();
    for &method in Method::all() {
        let mut opts = ExplainOptions::new(method, preset("text-default").unwrap(), 99);
        opts.preset.optim.steps = 10;
        opts.lime_evals = 10;
        opts.ig_steps = 10;
        opts.shapley_permutations = 3;
        for (id, sample) in smoke.iter().enumerate() {
            let e = explain_sample(&f.model, sample, id, &opts, 0.0).unwrap();
            assert_eq!(e.scores.len(), sample.num_positions());
            assert!(e.scores.iter().all(|s| s.is_finite()));
        }
    }
    println!("smoke: all 7 methods ran on a 5-sample set");
}

// ---------------------------------------------------------------------------
// property: monotone score transforms leave rankings and metrics unchanged
// ---------------------------------------------------------------------------

#[test]
fn monotone_transforms_preserve_rankings_and_faithfulness() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_011);
    let n = 10;
    let weights: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let model = LinearModel::new(weights, 1).unwrap();
    let xv: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = FeatureTensor::from_scalars(&xv);
    let bg = FeatureTensor::zeros(n, 1);
    let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let transformed: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 1.0).collect();
    assert_eq!(rank_positions_desc(&scores), rank_positions_desc(&transformed));
    let a = faithfulness(&model, &x, 0, &scores, &[bg.clone()]).unwrap();
    let b = faithfulness(&model, &x, 0, &transformed, &[bg]).unwrap();
    assert_eq!(a.sufficiency_trace, b.sufficiency_trace);
    assert_eq!(a.comprehensiveness_trace, b.comprehensiveness_trace);
    assert_eq!(
        average_precision(&scores, &vec![true, false, true, false, true, false, true, false, false, false]).unwrap(),
        average_precision(&transformed, &vec![true, false, true, false, true, false, true, false, false, false]).unwrap()
    );
}
