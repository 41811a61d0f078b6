use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use marc_core::baselines::ReduceMode;
use marc_core::error::{Error, Result};
use marc_core::eval::{
    corpus_iou_f1, f1_from_counts, iou_f1, token_counts, token_f1, NwBinarizer, Rationale,
    DEFAULT_NW_BANDWIDTH, DEFAULT_NW_THRESHOLD,
};
use marc_core::model::{
    generate_planted_dataset, load_checkpoint, load_dataset_jsonl, save_checkpoint,
    save_dataset_jsonl, train_toy_model_with, Sample, SampleFeatures, Task, ToyImageModel,
    ToyModel, ToyTextModel, TrainOptions, Trainable, VOCAB_SIZE,
};
use marc_core::optim::{preset, trace_to_csv, Preset};
use marc_core::pipeline::{dataset_mean_value, explain_sample, ExplainOptions, Method};
use marc_core::render::{render_heatmap, render_text_html};
use marc_core::report::{fingerprint_json, RationaleReport, ReportMetrics};

#[derive(Parser)]
#[command(
    name = "marc",
    version,
    about = "Rationale extraction by input-mask optimization, with attribution baselines and a metric suite"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic planted-rationale dataset (JSON lines).
    GenerateData(GenerateDataArgs),
    /// Train a toy classifier and write a binary checkpoint.
    Train(TrainArgs),
    /// Produce per-sample rationale reports with one explanation method.
    Explain(ExplainArgs),
    /// Aggregate saved reports into corpus metrics.
    Evaluate(EvaluateArgs),
    /// Render saved reports as HTML (text) or PPM heatmaps (images).
    Render(RenderArgs),
}

/// `MARC_SEED` in the environment overrides any `--seed` flag.
fn resolve_seed(flag: u64) -> Result<u64> {
    match std::env::var("MARC_SEED") {
        Ok(v) => v
            .parse::<u64>()
            .map_err(|_| Error::invalid_argument(format!("MARC_SEED must be an integer, got '{v}'"))),
        Err(_) => Ok(flag),
    }
}

#[derive(Args)]
pub struct GenerateDataArgs {
    /// Task kind: text or image.
    #[arg(long)]
    pub task: String,
    /// Number of samples.
    #[arg(long)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSON-lines path.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_generate_data(args: GenerateDataArgs) -> Result<()> {
    let task: Task = args.task.parse()?;
    let seed = resolve_seed(args.seed)?;
    let samples = generate_planted_dataset(task, args.size, seed)?;
    save_dataset_jsonl(&samples, &args.out)?;
    println!("wrote {} samples to {}", samples.len(), args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset produced by generate-data.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Model kind: text or image.
    #[arg(long)]
    pub model_kind: String,
    /// Checkpoint output path; a JSON sidecar lands next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Word-dropout upper bound (text only).
    #[arg(long)]
    pub pad_dropout: Option<f64>,
    /// L2 decay on the embedding table (text only).
    #[arg(long)]
    pub embedding_decay: Option<f64>,
    /// Random token substitution probability (text only).
    #[arg(long)]
    pub token_substitution: Option<f64>,
}

#[derive(Serialize)]
struct TrainSidecar {
    model_kind: String,
    holdout_accuracy: f64,
    mean_loss_per_epoch: Vec<f64>,
    epochs: usize,
    lr: f64,
    seed: u64,
    pad_dropout: f64,
    embedding_decay: f64,
    token_substitution: f64,
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let task: Task = args.model_kind.parse()?;
    let seed = resolve_seed(args.seed)?;
    let dataset = load_dataset_jsonl(&args.dataset)?;
    // defaults carry the configuration validated on the synthetic suite
    let (epochs, lr, dropout, decay, substitution) = match task {
        Task::Text => (10, 0.003, 0.8, 0.005, 0.3),
        Task::Image => (8, 0.005, 0.0, 0.0, 0.0),
    };
    let options = TrainOptions::new(
        args.epochs.unwrap_or(epochs),
        args.lr.unwrap_or(lr),
        seed.wrapping_add(1),
    )
    .with_pad_dropout(args.pad_dropout.unwrap_or(dropout))
    .with_embedding_decay(args.embedding_decay.unwrap_or(decay))
    .with_token_substitution(args.token_substitution.unwrap_or(substitution));

    let mut model: ToyModel<f64> = match task {
        Task::Text => ToyModel::Text(ToyTextModel::new(VOCAB_SIZE, 16, 32, 32, 2, seed)?),
        Task::Image => ToyModel::Image(ToyImageModel::new(24, 24, 4, 2, seed)?),
    };
    let report = train_toy_model_with(&mut model, &dataset, options)?;
    // round onto the checkpoint's f32 grid before measuring accuracy, so
    // the sidecar describes exactly the model being saved
    model.quantize_to_f32();
    let mut correct = 0;
    for &i in &report.holdout_indices {
        if model.predict(&dataset[i])? == dataset[i].label {
            correct += 1;
        }
    }
    let holdout_accuracy = correct as f64 / report.holdout_indices.len() as f64;
    save_checkpoint(&model, &args.out)?;
    let sidecar = TrainSidecar {
        model_kind: task.to_string(),
        holdout_accuracy,
        mean_loss_per_epoch: report.mean_loss_per_epoch,
        epochs: options.epochs,
        lr: options.lr,
        seed,
        pad_dropout: options.pad_dropout,
        embedding_decay: options.embedding_decay,
        token_substitution: options.token_substitution,
    };
    let sidecar_path = args.out.with_extension("json");
    let mut json = serde_json::to_string_pretty(&sidecar)?;
    json.push('\n');
    fs::write(&sidecar_path, json)?;
    println!(
        "trained {} model: holdout accuracy {:.4}; checkpoint {}",
        task,
        sidecar.holdout_accuracy,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct ExplainArgs {
    /// Checkpoint produced by train.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// marc, occlusion, saliency, inxgrad, intgrads, lime, or shapley.
    #[arg(long)]
    pub method: String,
    /// Preset: text-default, image-resnet-like, image-vit-like. Defaults by
    /// model kind.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory for reports and loss traces.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Explain only the first N samples.
    #[arg(long)]
    pub limit: Option<usize>,
    /// norm_l1 or signed_sum, for per-dimension attribution methods.
    #[arg(long, default_value = "norm_l1")]
    pub reduce: String,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub alpha_lambda: Option<f64>,
    #[arg(long)]
    pub alpha_sigma: Option<f64>,
    #[arg(long)]
    pub alpha_nb: Option<f64>,
    #[arg(long)]
    pub w_init: Option<f64>,
    #[arg(long)]
    pub sigma_init: Option<f64>,
    #[arg(long)]
    pub truncation_eps: Option<f64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub flip_to_zero: Option<f64>,
    #[arg(long)]
    pub flip_to_one: Option<f64>,
    /// Drop the complement score term (ablation).
    #[arg(long, default_value_t = false)]
    pub no_complement: bool,
    #[arg(long)]
    pub occlusion_width: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub occlusion_stride: usize,
    #[arg(long, default_value_t = 50)]
    pub ig_steps: usize,
    #[arg(long, default_value_t = 50)]
    pub lime_evals: usize,
    #[arg(long, default_value_t = 25)]
    pub shapley_permutations: usize,
    #[arg(long, default_value_t = 510)]
    pub segment_length: usize,
    #[arg(long, default_value_t = 100)]
    pub segment_overlap: usize,
    #[arg(long, default_value_t = DEFAULT_NW_THRESHOLD)]
    pub nw_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_NW_BANDWIDTH)]
    pub nw_bandwidth: f64,
}

#[derive(Serialize)]
struct ExplainRunConfig<'a> {
    method: &'a str,
    options: &'a ExplainOptions,
    nw_threshold: f64,
    nw_bandwidth: f64,
}

fn build_explain_options(args: &ExplainArgs, model: &ToyModel<f64>) -> Result<ExplainOptions> {
    let method: Method = args.method.parse()?;
    let preset_name = args.preset.clone().unwrap_or_else(|| match model {
        ToyModel::Text(_) => "text-default".to_string(),
        ToyModel::Image(_) => "image-resnet-like".to_string(),
    });
    let preset: Preset = preset(&preset_name)
        .ok_or_else(|| Error::invalid_argument(format!("unknown preset '{preset_name}'")))?;
    let seed = resolve_seed(args.seed)?;
    let mut opts = ExplainOptions::new(method, preset, seed);
    opts.reduce = args.reduce.parse::<ReduceMode>()?;
    if let Some(v) = args.steps {
        opts.preset.optim.steps = v;
    }
    if let Some(v) = args.lr {
        opts.preset.optim.lr = v;
    }
    if let Some(v) = args.alpha_lambda {
        opts.preset.optim.alpha_lambda = v;
    }
    if let Some(v) = args.alpha_sigma {
        opts.preset.optim.alpha_sigma = v;
    }
    if let Some(v) = args.alpha_nb {
        opts.preset.optim.alpha_nb = v;
    }
    if let Some(v) = args.w_init {
        opts.preset.optim.w_init = v;
    }
    if let Some(v) = args.sigma_init {
        opts.preset.optim.sigma_init = v;
    }
    if let Some(v) = args.truncation_eps {
        opts.preset.optim.truncation_eps = v;
    }
    if let Some(v) = args.noise_std {
        opts.preset.perturb.noise_std = v;
    }
    if let Some(v) = args.flip_to_zero {
        opts.preset.perturb.flip_to_zero_frac = v;
    }
    if let Some(v) = args.flip_to_one {
        opts.preset.perturb.flip_to_one_frac = v;
    }
    if args.no_complement {
        opts.preset.optim.include_complement = false;
    }
    opts.occlusion_width = args.occlusion_width;
    opts.occlusion_stride = args.occlusion_stride;
    opts.ig_steps = args.ig_steps;
    opts.lime_evals = args.lime_evals;
    opts.shapley_permutations = args.shapley_permutations;
    opts.segment_length = args.segment_length;
    opts.segment_overlap = args.segment_overlap;
    opts.preset.optim.validate()?;
    opts.preset.perturb.validate()?;
    Ok(opts)
}

pub fn cmd_explain(args: ExplainArgs) -> Result<()> {
    let model: ToyModel<f64> = load_checkpoint(&args.model)?;
    let dataset = load_dataset_jsonl(&args.dataset)?;
    let opts = build_explain_options(&args, &model)?;
    let limit = args.limit.unwrap_or(dataset.len()).min(dataset.len());
    if limit == 0 {
        return Err(Error::invalid_argument("nothing to explain (limit 0)"));
    }
    fs::create_dir_all(&args.out)?;
    let mean = dataset_mean_value(&dataset);
    let fingerprint = fingerprint_json(&ExplainRunConfig {
        method: &args.method,
        options: &opts,
        nw_threshold: args.nw_threshold,
        nw_bandwidth: args.nw_bandwidth,
    })?;

    let mut explanations = Vec::with_capacity(limit);
    for (id, sample) in dataset.iter().take(limit).enumerate() {
        explanations.push(explain_sample(&model, sample, id, &opts, mean)?);
    }

    // binarize across the explained batch, leave-one-out
    let golds: Vec<Vec<bool>> = dataset
        .iter()
        .take(limit)
        .map(|s| s.gold_bools())
        .collect();
    let refs: Vec<(&[f64], &[bool])> = explanations
        .iter()
        .zip(&golds)
        .map(|(e, g)| (e.scores.as_slice(), g.as_slice()))
        .collect();
    let binarizer = NwBinarizer::from_references(&refs, args.nw_threshold, args.nw_bandwidth)?;

    for (id, (explanation, gold)) in explanations.iter().zip(&golds).enumerate() {
        let pred = binarizer.binarize(&explanation.scores, Some(id));
        let gold_rationale = Rationale::from_binary(gold.clone());
        let report = RationaleReport {
            sample_id: id,
            method: args.method.clone(),
            scores: explanation.scores.clone(),
            spans: pred.spans().to_vec(),
            metrics: ReportMetrics {
                token_f1: Some(token_f1(&pred, &gold_rationale)?),
                iou_f1: Some(iou_f1(&pred, &gold_rationale)),
                sufficiency: explanation.faithfulness.sufficiency,
                comprehensiveness: explanation.faithfulness.comprehensiveness,
            },
            sufficiency_trace: explanation.faithfulness.sufficiency_trace.clone(),
            comprehensiveness_trace: explanation.faithfulness.comprehensiveness_trace.clone(),
            config_fingerprint: fingerprint.clone(),
        };
        report.save(args.out.join(format!("report_{}_{id:04}.json", args.method)))?;
        if let Some(trace) = &explanation.trace {
            fs::write(
                args.out.join(format!("trace_{id:04}.csv")),
                trace_to_csv(trace),
            )?;
        }
    }
    println!(
        "explained {limit} samples with {} into {}",
        args.method,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Directory of reports produced by explain.
    #[arg(long)]
    pub reports: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Metrics JSON output path; a faithfulness-trace CSV lands next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct MethodMetrics {
    token_f1: f64,
    map: Option<f64>,
    iou_f1: f64,
    sufficiency: f64,
    comprehensiveness: f64,
    samples: usize,
}

#[derive(Serialize)]
struct MetricsFile {
    methods: BTreeMap<String, MethodMetrics>,
}

fn load_reports(dir: &Path) -> Result<Vec<RationaleReport>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "json")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("report_"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::MalformedData(format!(
            "no reports found in {}",
            dir.display()
        )));
    }
    paths.iter().map(RationaleReport::load).collect()
}

pub fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let dataset = load_dataset_jsonl(&args.dataset)?;
    let reports = load_reports(&args.reports)?;

    let mut by_method: BTreeMap<String, Vec<&RationaleReport>> = BTreeMap::new();
    for report in &reports {
        by_method.entry(report.method.clone()).or_default().push(report);
    }

    let mut methods = BTreeMap::new();
    let mut trace_csv = String::from("method,sample_id,percent,sufficiency,comprehensiveness\n");
    for (method, group) in &by_method {
        let fingerprint = &group[0].config_fingerprint;
        if group.iter().any(|r| &r.config_fingerprint != fingerprint) {
            return Err(Error::MalformedData(format!(
                "reports for method '{method}' were produced with different configs"
            )));
        }
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        let mut pairs = Vec::new();
        let mut ap_samples = Vec::new();
        let mut suff = 0.0;
        let mut comp = 0.0;
        for report in group {
            let sample = dataset.get(report.sample_id).ok_or_else(|| {
                Error::MalformedData(format!(
                    "report references sample {} outside the dataset",
                    report.sample_id
                ))
            })?;
            let n = sample.num_positions();
            if report.scores.len() != n {
                return Err(Error::MalformedData(format!(
                    "report for sample {} carries {} scores for {n} positions",
                    report.sample_id,
                    report.scores.len()
                )));
            }
            let gold = Rationale::from_binary(sample.gold_bools());
            let pred = Rationale::from_spans(n, &report.spans)?;
            let (a, b, c) = token_counts(&pred, &gold)?;
            tp += a;
            fp += b;
            fn_ += c;
            pairs.push((pred, gold));
            ap_samples.push((report.scores.clone(), sample.gold_bools()));
            suff += report.metrics.sufficiency;
            comp += report.metrics.comprehensiveness;
            for (i, (s, m)) in report
                .sufficiency_trace
                .iter()
                .zip(&report.comprehensiveness_trace)
                .enumerate()
            {
                trace_csv.push_str(&format!(
                    "{method},{},{},{s},{m}\n",
                    report.sample_id,
                    (i + 1) * 5
                ));
            }
        }
        methods.insert(
            method.clone(),
            MethodMetrics {
                token_f1: f1_from_counts(tp, fp, fn_),
                map: marc_core::eval::mean_average_precision(&ap_samples)?,
                iou_f1: corpus_iou_f1(pairs.iter().map(|(p, g)| (p, g))),
                sufficiency: suff / group.len() as f64,
                comprehensiveness: comp / group.len() as f64,
                samples: group.len(),
            },
        );
    }

    let mut json = serde_json::to_string_pretty(&MetricsFile { methods })?;
    json.push('\n');
    fs::write(&args.out, json)?;
    let trace_path = args.out.with_extension("traces.csv");
    fs::write(&trace_path, trace_csv)?;
    println!(
        "evaluated {} reports into {}",
        reports.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct RenderArgs {
    /// Directory of reports produced by explain.
    #[arg(long)]
    pub reports: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for HTML / PPM files.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_render(args: RenderArgs) -> Result<()> {
    let dataset = load_dataset_jsonl(&args.dataset)?;
    let reports = load_reports(&args.reports)?;
    fs::create_dir_all(&args.out)?;
    for report in &reports {
        let sample: &Sample = dataset.get(report.sample_id).ok_or_else(|| {
            Error::MalformedData(format!(
                "report references sample {} outside the dataset",
                report.sample_id
            ))
        })?;
        match &sample.features {
            SampleFeatures::Tokens(tokens) => {
                let title = format!("{} rationale for sample {}", report.method, report.sample_id);
                render_text_html(
                    tokens,
                    &report.scores,
                    &title,
                    args.out
                        .join(format!("render_{}_{:04}.html", report.method, report.sample_id)),
                )?;
            }
            SampleFeatures::Grid {
                height,
                width,
                values,
            } => {
                render_heatmap(
                    *height,
                    *width,
                    values,
                    &report.scores,
                    args.out
                        .join(format!("render_{}_{:04}.ppm", report.method, report.sample_id)),
                )?;
            }
        }
    }
    println!("rendered {} reports into {}", reports.len(), args.out.display());
    Ok(())
}
