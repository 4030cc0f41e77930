//! Necessity and sufficiency metrics over saliency rankings.
//!
//! Every metric value is stored as a raw log-sum over response tokens so
//! corpus aggregates can be recomposed without rescoring:
//! `value = exp(log_sum / tokens)`.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::attribution::{Method, Saliency};
use crate::error::{LergError, Result};
use crate::explain::{top_k_count, top_k_segments, PROB_FLOOR};
use crate::models::{score_checked, Generator};
use crate::rng::{split_stream, RANDOM_BASELINE_STREAM};
use crate::text::Example;

mod sweep;

pub use sweep::{sweep, AggregateCurve, CorpusReport, ExampleFailure, ExampleResult, SweepConfig, DEFAULT_RATIOS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Perplexity change after removing the top segments.
    PplcR,
    /// Perplexity with only the top segments kept.
    PplA,
}

impl MetricKind {
    pub const ALL: [MetricKind; 2] = [MetricKind::PplcR, MetricKind::PplA];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::PplcR => "pplc_r",
            MetricKind::PplA => "ppl_a",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = LergError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "pplc_r" => Ok(MetricKind::PplcR),
            "ppl_a" => Ok(MetricKind::PplA),
            _ => Err(LergError::Validation(format!("unknown metric `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Method,
    Random,
}

/// A metric value with the raw sums it was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub log_sum: f64,
    pub tokens: usize,
    /// Token scores raised to the probability floor before the log.
    pub clamped: usize,
}

impl MetricValue {
    pub fn value(&self) -> f64 {
        (self.log_sum / self.tokens as f64).exp()
    }

    fn merge(self, other: MetricValue) -> MetricValue {
        MetricValue {
            log_sum: self.log_sum + other.log_sum,
            tokens: self.tokens + other.tokens,
            clamped: self.clamped + other.clamped,
        }
    }
}

/// Ratio to metric series for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCurve {
    pub metric: MetricKind,
    pub baseline: Baseline,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    pub ratios: Vec<f64>,
    pub points: Vec<MetricValue>,
}

impl MetricCurve {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(MetricValue::value).collect()
    }

    pub fn label(&self) -> String {
        match (self.baseline, self.method) {
            (Baseline::Method, Some(m)) => m.name().to_string(),
            _ => "random".to_string(),
        }
    }
}

/// Ratios must be strictly increasing inside `(0, 1]`.
pub fn validate_ratios(ratios: &[f64]) -> Result<()> {
    if ratios.is_empty() {
        return Err(LergError::Validation("ratio grid is empty".into()));
    }
    for (k, &r) in ratios.iter().enumerate() {
        if !(r > 0.0 && r <= 1.0) {
            return Err(LergError::Validation(format!("ratio {r} is outside (0, 1]")));
        }
        if k > 0 && r <= ratios[k - 1] {
            return Err(LergError::Validation("ratios must be strictly increasing".into()));
        }
    }
    Ok(())
}

fn require_normalized<G: Generator + ?Sized>(model: &G) -> Result<()> {
    let manifest = model.manifest();
    if !manifest.normalized {
        return Err(LergError::Unnormalized(manifest.vocabulary.clone()));
    }
    Ok(())
}

fn clamp_log(lp: f64, clamped: &mut usize) -> f64 {
    let floor = PROB_FLOOR.ln();
    if lp < floor {
        *clamped += 1;
        floor
    } else {
        lp
    }
}

fn select(segments: &[String], indices: &[usize], keep: bool) -> Vec<String> {
    segments
        .iter()
        .enumerate()
        .filter(|(i, _)| indices.contains(i) == keep)
        .map(|(_, s)| s.clone())
        .collect()
}

/// Scores the full context and each variant in one batch, full first.
fn score_variants<G: Generator + ?Sized>(
    model: &G,
    example: &Example,
    variants: Vec<Vec<String>>,
) -> Result<Vec<Vec<f64>>> {
    let mut contexts = Vec::with_capacity(variants.len() + 1);
    contexts.push(example.context.segments().to_vec());
    contexts.extend(variants);
    Ok(score_checked(model, &contexts, example.response.segments())?
        .into_iter()
        .map(|s| s.0)
        .collect())
}

fn removal_value(full: &[f64], removed: &[f64]) -> MetricValue {
    let mut clamped = 0;
    let mut log_sum = 0.0;
    for (&f, &r) in full.iter().zip(removed) {
        log_sum += clamp_log(f, &mut clamped) - clamp_log(r, &mut clamped);
    }
    MetricValue {
        log_sum,
        tokens: full.len(),
        clamped,
    }
}

fn kept_value(kept: &[f64]) -> MetricValue {
    let mut clamped = 0;
    let mut log_sum = 0.0;
    for &k in kept {
        log_sum -= clamp_log(k, &mut clamped);
    }
    MetricValue {
        log_sum,
        tokens: kept.len(),
        clamped,
    }
}

fn check_removal(example: &Example, removed: &[usize]) -> Result<()> {
    if removed.len() >= example.context_len() {
        return Err(LergError::DegenerateInput(format!(
            "removing {} of {} segments empties the context of `{}`",
            removed.len(),
            example.context_len(),
            example.id
        )));
    }
    Ok(())
}

/// `exp(-(1/N) Σ_j log P(y_j | x, y_<j))`.
pub fn full_perplexity<G: Generator + ?Sized>(model: &G, example: &Example) -> Result<MetricValue> {
    require_normalized(model)?;
    let scores = score_variants(model, example, Vec::new())?;
    Ok(kept_value(&scores[0]))
}

/// PPLC_R with an explicit removal set.
pub fn pplc_r_removing<G: Generator + ?Sized>(model: &G, example: &Example, removed: &[usize]) -> Result<MetricValue> {
    require_normalized(model)?;
    check_removal(example, removed)?;
    let scores = score_variants(model, example, vec![select(example.context.segments(), removed, false)])?;
    Ok(removal_value(&scores[0], &scores[1]))
}

/// PPL_A with an explicit keep set.
pub fn ppl_a_keeping<G: Generator + ?Sized>(model: &G, example: &Example, kept: &[usize]) -> Result<MetricValue> {
    require_normalized(model)?;
    let ctx = select(example.context.segments(), kept, true);
    let scores = score_checked(model, &[ctx], example.response.segments())?;
    Ok(kept_value(&scores[0].0))
}

/// Perplexity change after deleting the top `ratio` of segments:
/// `exp((1/N) Σ_j [log P(y_j | x) - log P(y_j | x_R)])`.
pub fn pplc_r<G: Generator + ?Sized>(model: &G, example: &Example, saliency: &Saliency, ratio: f64) -> Result<MetricValue> {
    check_saliency(example, saliency)?;
    pplc_r_removing(model, example, &top_k_segments(saliency, ratio)?)
}

/// Perplexity conditioned only on the top `ratio` of segments, in their
/// original order: `exp(-(1/N) Σ_j log P(y_j | x_A))`.
pub fn ppl_a<G: Generator + ?Sized>(model: &G, example: &Example, saliency: &Saliency, ratio: f64) -> Result<MetricValue> {
    check_saliency(example, saliency)?;
    ppl_a_keeping(model, example, &top_k_segments(saliency, ratio)?)
}

fn check_saliency(example: &Example, saliency: &Saliency) -> Result<()> {
    if saliency.len() != example.context_len() {
        return Err(LergError::Validation(format!(
            "saliency has {} scores but `{}` has {} context segments",
            saliency.len(),
            example.id,
            example.context_len()
        )));
    }
    Ok(())
}

/// Metric curve for one saliency ranking.
pub fn method_curve<G: Generator + ?Sized>(
    model: &G,
    example: &Example,
    saliency: &Saliency,
    method: Method,
    metric: MetricKind,
    ratios: &[f64],
) -> Result<MetricCurve> {
    validate_ratios(ratios)?;
    check_saliency(example, saliency)?;
    require_normalized(model)?;
    let picks: Vec<Vec<usize>> = ratios
        .iter()
        .map(|&r| top_k_segments(saliency, r))
        .collect::<Result<_>>()?;
    let points = metric_points(model, example, metric, &picks)?;
    Ok(MetricCurve {
        metric,
        baseline: Baseline::Method,
        method: Some(method),
        ratios: ratios.to_vec(),
        points,
    })
}

/// One value per index set; removal sets for PPLC_R, keep sets for PPL_A.
fn metric_points<G: Generator + ?Sized>(
    model: &G,
    example: &Example,
    metric: MetricKind,
    picks: &[Vec<usize>],
) -> Result<Vec<MetricValue>> {
    let segments = example.context.segments();
    match metric {
        MetricKind::PplcR => {
            for p in picks {
                check_removal(example, p)?;
            }
            let variants = picks.iter().map(|p| select(segments, p, false)).collect();
            let scores = score_variants(model, example, variants)?;
            Ok(scores[1..].iter().map(|r| removal_value(&scores[0], r)).collect())
        }
        MetricKind::PplA => {
            let variants: Vec<Vec<String>> = picks.iter().map(|p| select(segments, p, true)).collect();
            let scores = score_checked(model, &variants, example.response.segments())?;
            Ok(scores.iter().map(|s| kept_value(&s.0)).collect())
        }
    }
}

/// Random-subset baseline: for each ratio, `trials` uniform subsets with
/// the cardinality top-k would select. The per-ratio value is the
/// geometric mean over trials, i.e. the raw sums of all trials pooled.
pub fn random_baseline_curve<G: Generator + ?Sized>(
    model: &G,
    example: &Example,
    metric: MetricKind,
    ratios: &[f64],
    trials: usize,
    seed: u64,
) -> Result<MetricCurve> {
    validate_ratios(ratios)?;
    require_normalized(model)?;
    if trials == 0 {
        return Err(LergError::Validation("random baseline needs at least one trial".into()));
    }
    let m = example.context_len();
    let mut rng = split_stream(seed, RANDOM_BASELINE_STREAM);
    let mut picks = Vec::with_capacity(ratios.len() * trials);
    for &r in ratios {
        let k = top_k_count(r, m)?;
        for _ in 0..trials {
            let mut p = sample(&mut rng, m, k).into_vec();
            p.sort_unstable();
            picks.push(p);
        }
    }
    let values = metric_points(model, example, metric, &picks)?;
    let points = values
        .chunks(trials)
        .map(|c| c.iter().copied().reduce(MetricValue::merge).expect("trials >= 1"))
        .collect();
    Ok(MetricCurve {
        metric,
        baseline: Baseline::Random,
        method: None,
        ratios: ratios.to_vec(),
        points,
    })
}
