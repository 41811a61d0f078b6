//! Metric suite: faithfulness (sufficiency / comprehensiveness over the
//! 5%..95% percentile ladder), agreement metrics (token F1, mean average
//! precision, IoU F1), and kernel-regression binarization of soft scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::num::Real;
use crate::tensor::FeatureTensor;

pub const DEFAULT_NW_THRESHOLD: f64 = 0.1;
pub const DEFAULT_NW_BANDWIDTH: f64 = 0.05;

/// Half-open interval of selected positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// A binary rationale with its span decomposition kept in sync.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rationale {
    binary: Vec<bool>,
    spans: Vec<Span>,
}

impl Rationale {
    pub fn from_binary(binary: Vec<bool>) -> Self {
        let mut spans = Vec::new();
        let mut start = None;
        for (i, &b) in binary.iter().enumerate() {
            match (b, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    spans.push(Span::new(s, i));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            spans.push(Span::new(s, binary.len()));
        }
        Self { binary, spans }
    }

    /// Normalizes: sorts, drops empties, merges overlapping or adjacent
    /// spans, and rejects out-of-range intervals.
    pub fn from_spans(n: usize, spans: &[Span]) -> Result<Self> {
        let mut binary = vec![false; n];
        for s in spans {
            if s.end > n || s.is_empty() {
                return Err(Error::invalid_argument(format!(
                    "span [{}, {}) invalid for length {n}",
                    s.start, s.end
                )));
            }
            binary[s.start..s.end].iter_mut().for_each(|b| *b = true);
        }
        Ok(Self::from_binary(binary))
    }

    pub fn binary(&self) -> &[bool] {
        &self.binary
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.binary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.binary.is_empty()
    }

    pub fn selected_count(&self) -> usize {
        self.binary.iter().filter(|&&b| b).count()
    }
}

/// Positions sorted by descending score, ties broken by ascending index.
pub fn rank_positions_desc<T: Real>(scores: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores must be comparable")
            .then(a.cmp(&b))
    });
    idx
}

/// `round(fraction_numerator/100 * n)` with exact round-half-up integer
/// arithmetic; used for the top `(i*5)%` position counts.
fn percent_count(n: usize, percent: usize) -> usize {
    (percent * n + 50) / 100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessResult {
    pub sufficiency: f64,
    pub comprehensiveness: f64,
    /// One entry per retained percentage 5%, 10%, ..., 95%.
    pub sufficiency_trace: Vec<f64>,
    pub comprehensiveness_trace: Vec<f64>,
}

/// Softmax probability of `class_index`.
fn class_probability<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    x: &FeatureTensor<T>,
    class_index: usize,
) -> Result<f64> {
    let logits = model.forward(x)?;
    if class_index >= logits.len() {
        return Err(Error::invalid_argument("class index out of range"));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let denom: T = logits.iter().map(|&l| (l - max).exp()).sum();
    Ok(((logits[class_index] - max).exp() / denom).as_f64())
}

/// Sufficiency and comprehensiveness of a score map against a model.
///
/// For each `i = 1..=19`, the top `round(i*5% * n)` positions by score form
/// the rationale `r_i`; comprehensiveness drops them from the input,
/// sufficiency keeps only them. Both replace positions with each removal
/// background and average over backgrounds, and the scalar results average
/// the 19-entry traces.
pub fn faithfulness<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    x: &FeatureTensor<T>,
    class_index: usize,
    scores: &[T],
    removal_backgrounds: &[FeatureTensor<T>],
) -> Result<FaithfulnessResult> {
    if scores.is_empty() {
        return Err(Error::invalid_argument("empty score map"));
    }
    if scores.len() != x.positions() {
        return Err(Error::shape(
            format!("{} scores", x.positions()),
            format!("{}", scores.len()),
        ));
    }
    if removal_backgrounds.is_empty() {
        return Err(Error::invalid_argument("need at least one removal background"));
    }
    for b in removal_backgrounds {
        if !b.same_shape(x) {
            return Err(Error::shape(x.shape_of(), b.shape_of()));
        }
    }
    let n = x.positions();
    let ranked = rank_positions_desc(scores);
    let full_prob = class_probability(model, x, class_index)?;

    let mut suff_trace = Vec::with_capacity(19);
    let mut comp_trace = Vec::with_capacity(19);
    for i in 1..=19usize {
        let k = percent_count(n, i * 5);
        let top = &ranked[..k.min(n)];
        let mut suff_acc = 0.0;
        let mut comp_acc = 0.0;
        for bg in removal_backgrounds {
            // rationale only: background everywhere except the top positions
            let mut only_rationale = bg.clone();
            for &j in top {
                only_rationale.position_mut(j).copy_from_slice(x.position(j));
            }
            // rationale removed: input with the top positions backgrounded
            let mut without_rationale = x.clone();
            for &j in top {
                without_rationale
                    .position_mut(j)
                    .copy_from_slice(bg.position(j));
            }
            suff_acc += full_prob - class_probability(model, &only_rationale, class_index)?;
            comp_acc += full_prob - class_probability(model, &without_rationale, class_index)?;
        }
        let b = removal_backgrounds.len() as f64;
        suff_trace.push(suff_acc / b);
        comp_trace.push(comp_acc / b);
    }
    Ok(FaithfulnessResult {
        sufficiency: suff_trace.iter().sum::<f64>() / 19.0,
        comprehensiveness: comp_trace.iter().sum::<f64>() / 19.0,
        sufficiency_trace: suff_trace,
        comprehensiveness_trace: comp_trace,
    })
}

/// Per-position true/false positive/negative counts of a predicted
/// rationale against a reference one.
pub fn token_counts(pred: &Rationale, gold: &Rationale) -> Result<(usize, usize, usize)> {
    if pred.len() != gold.len() {
        return Err(Error::shape(
            format!("{} positions", gold.len()),
            format!("{}", pred.len()),
        ));
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for (&p, &g) in pred.binary().iter().zip(gold.binary()) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok((tp, fp, fn_))
}

pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if 2 * tp + fp + fn_ == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// F1 of the positive class over per-position labels; 0 when precision and
/// recall are both undefined.
pub fn token_f1(pred: &Rationale, gold: &Rationale) -> Result<f64> {
    let (tp, fp, fn_) = token_counts(pred, gold)?;
    Ok(f1_from_counts(tp, fp, fn_))
}

/// Average precision of a score ranking against binary relevance; `None`
/// when the sample has no gold positions.
pub fn average_precision<T: Real>(scores: &[T], gold: &[bool]) -> Result<Option<f64>> {
    if scores.len() != gold.len() {
        return Err(Error::shape(
            format!("{} positions", gold.len()),
            format!("{}", scores.len()),
        ));
    }
    let total_gold = gold.iter().filter(|&&g| g).count();
    if total_gold == 0 {
        return Ok(None);
    }
    let ranked = rank_positions_desc(scores);
    let mut hits = 0;
    let mut precision_sum = 0.0;
    for (rank0, &j) in ranked.iter().enumerate() {
        if gold[j] {
            hits += 1;
            precision_sum += hits as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(Some(precision_sum / total_gold as f64))
}

/// Mean average precision over samples that have at least one gold
/// position; documents without gold are skipped.
pub fn mean_average_precision<T: Real>(samples: &[(Vec<T>, Vec<bool>)]) -> Result<Option<f64>> {
    let mut aps = Vec::new();
    for (scores, gold) in samples {
        if let Some(ap) = average_precision(scores, gold)? {
            aps.push(ap);
        }
    }
    if aps.is_empty() {
        return Ok(None);
    }
    Ok(Some(aps.iter().sum::<f64>() / aps.len() as f64))
}

pub fn span_iou(a: Span, b: Span) -> f64 {
    let inter = a.end.min(b.end).saturating_sub(a.start.max(b.start));
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Greedy one-to-one span matching in descending IoU order; a pair counts
/// only with IoU strictly above 0.5. Returns (matched, pred spans, gold
/// spans).
pub fn iou_match_counts(pred: &[Span], gold: &[Span]) -> (usize, usize, usize) {
    let mut candidates = Vec::new();
    for (i, &p) in pred.iter().enumerate() {
        for (j, &g) in gold.iter().enumerate() {
            let iou = span_iou(p, g);
            if iou > 0.5 {
                candidates.push((iou, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_pred = vec![false; pred.len()];
    let mut used_gold = vec![false; gold.len()];
    let mut matched = 0;
    for (_, i, j) in candidates {
        if !used_pred[i] && !used_gold[j] {
            used_pred[i] = true;
            used_gold[j] = true;
            matched += 1;
        }
    }
    (matched, pred.len(), gold.len())
}

/// Span-level F1 for one sample.
pub fn iou_f1(pred: &Rationale, gold: &Rationale) -> f64 {
    let (matched, n_pred, n_gold) = iou_match_counts(pred.spans(), gold.spans());
    f1_from_counts(matched, n_pred - matched, n_gold - matched)
}

/// Corpus-level span F1, micro-averaging span counts over samples.
pub fn corpus_iou_f1<'a>(pairs: impl IntoIterator<Item = (&'a Rationale, &'a Rationale)>) -> f64 {
    let mut matched = 0;
    let mut n_pred = 0;
    let mut n_gold = 0;
    for (pred, gold) in pairs {
        let (m, p, g) = iou_match_counts(pred.spans(), gold.spans());
        matched += m;
        n_pred += p;
        n_gold += g;
    }
    f1_from_counts(matched, n_pred - matched, n_gold - matched)
}

/// Fraction of positions whose score exceeds the threshold; the regressor
/// input.
pub fn fraction_above<T: Real>(scores: &[T], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let t = T::of(threshold);
    scores.iter().filter(|&&s| s > t).count() as f64 / scores.len() as f64
}

/// Nadaraya-Watson regressor from score-threshold fractions to rationale
/// fractions, used to pick how many top positions to binarize.
#[derive(Debug, Clone, PartialEq)]
pub struct NwBinarizer {
    refs: Vec<(f64, f64)>,
    pub threshold: f64,
    pub bandwidth: f64,
}

impl NwBinarizer {
    /// Build from reference pairs of (soft scores, gold rationale).
    pub fn from_references<T: Real>(
        references: &[(&[T], &[bool])],
        threshold: f64,
        bandwidth: f64,
    ) -> Result<Self> {
        let refs = references
            .iter()
            .map(|(scores, gold)| {
                let u = fraction_above(scores, threshold);
                let v = if gold.is_empty() {
                    0.0
                } else {
                    gold.iter().filter(|&&g| g).count() as f64 / gold.len() as f64
                };
                (u, v)
            })
            .collect();
        Self::from_fractions(refs, threshold, bandwidth)
    }

    pub fn from_fractions(refs: Vec<(f64, f64)>, threshold: f64, bandwidth: f64) -> Result<Self> {
        if refs.is_empty() {
            return Err(Error::invalid_argument("empty reference set"));
        }
        if bandwidth <= 0.0 {
            return Err(Error::invalid_argument("bandwidth must be positive"));
        }
        Ok(Self {
            refs,
            threshold,
            bandwidth,
        })
    }

    /// Gaussian-kernel regression estimate of the rationale fraction;
    /// `leave_out` excludes one reference (leave-one-out evaluation).
    /// Falls back to the plain mean target when every kernel weight
    /// underflows.
    pub fn predict_fraction(&self, u: f64, leave_out: Option<usize>) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut target_sum = 0.0;
        let mut count = 0usize;
        for (k, &(uk, vk)) in self.refs.iter().enumerate() {
            if Some(k) == leave_out {
                continue;
            }
            let t = (u - uk) / self.bandwidth;
            let w = (-0.5 * t * t).exp();
            num += w * vk;
            den += w;
            target_sum += vk;
            count += 1;
        }
        if count == 0 {
            // leave-one-out over a single reference: fall back to all refs
            return self.refs.iter().map(|&(_, v)| v).sum::<f64>() / self.refs.len() as f64;
        }
        if den == 0.0 {
            return target_sum / count as f64;
        }
        num / den
    }

    /// Select the top `round(prediction * n)` positions as the rationale.
    pub fn binarize<T: Real>(&self, scores: &[T], leave_out: Option<usize>) -> Rationale {
        let n = scores.len();
        let u = fraction_above(scores, self.threshold);
        let frac = self.predict_fraction(u, leave_out).clamp(0.0, 1.0);
        let k = ((frac * n as f64 + 0.5).floor() as usize).min(n);
        let ranked = rank_positions_desc(scores);
        let mut binary = vec![false; n];
        for &j in &ranked[..k] {
            binary[j] = true;
        }
        Rationale::from_binary(binary)
    }
}
