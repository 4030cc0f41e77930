use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{full_perplexity, method_curve, random_baseline_curve, validate_ratios, Baseline, MetricCurve, MetricKind, MetricValue};
use crate::attribution::{Method, Reduction};
use crate::error::{LergError, Result};
use crate::explain::explain;
use crate::models::Generator;
use crate::perturb::PerturbPlan;
use crate::rng::derive_seed;
use crate::text::Example;

pub const DEFAULT_RATIOS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    pub metrics: Vec<MetricKind>,
    pub ratios: Vec<f64>,
    /// Base plan; each example gets its own seed derived from `plan.seed`
    /// and the example id.
    pub plan: PerturbPlan,
    /// Random-removal trials per example and ratio; 0 disables the baseline.
    pub random_trials: usize,
    pub reduction: Reduction,
}

impl SweepConfig {
    pub fn new(methods: Vec<Method>, seed: u64) -> Self {
        Self {
            methods,
            metrics: MetricKind::ALL.to_vec(),
            ratios: DEFAULT_RATIOS.to_vec(),
            plan: PerturbPlan::with_seed(seed),
            random_trials: 10,
            reduction: Reduction::SumOverJ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleResult {
    pub id: String,
    pub context_len: usize,
    pub response_len: usize,
    pub seed: u64,
    /// Full-input perplexity, stored as raw sums.
    pub full: MetricValue,
    pub curves: Vec<MetricCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleFailure {
    pub id: String,
    pub code: String,
    pub message: String,
}

/// Corpus aggregate for one (metric, curve) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub metric: MetricKind,
    pub baseline: Baseline,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    pub ratios: Vec<f64>,
    /// `exp(Σ log_sum / Σ tokens)`; the primary aggregate.
    pub token_mean: Vec<f64>,
    /// Plain mean of per-example values.
    pub example_mean: Vec<f64>,
    pub log_sums: Vec<f64>,
    pub tokens: Vec<usize>,
    pub clamped: Vec<usize>,
    pub examples: usize,
}

impl AggregateCurve {
    pub fn label(&self) -> String {
        match (self.baseline, self.method) {
            (Baseline::Method, Some(m)) => m.name().to_string(),
            _ => "random".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub schema: u32,
    pub seed: u64,
    pub config: SweepConfig,
    /// Sorted by id.
    pub examples: Vec<ExampleResult>,
    pub failures: Vec<ExampleFailure>,
    pub aggregates: Vec<AggregateCurve>,
    /// Token-weighted full-input perplexity over the successful examples.
    pub full_perplexity: f64,
}

/// Ratios a metric is evaluated at. Removing every segment leaves
/// nothing to condition on, so PPLC_R skips a ratio of 1.
fn metric_ratios(metric: MetricKind, ratios: &[f64]) -> Vec<f64> {
    match metric {
        MetricKind::PplcR => ratios.iter().copied().filter(|&r| r < 1.0).collect(),
        MetricKind::PplA => ratios.to_vec(),
    }
}

fn run_example<G: Generator + ?Sized>(model: &G, example: &Example, config: &SweepConfig) -> Result<ExampleResult> {
    let seed = derive_seed(config.plan.seed, &example.id);
    let plan = PerturbPlan {
        seed,
        ..config.plan.clone()
    };
    let full = full_perplexity(model, example)?;
    let mut curves = Vec::new();
    for &method in &config.methods {
        let saliency = explain(method, model, example, &plan)?.saliency(config.reduction);
        for &metric in &config.metrics {
            let ratios = metric_ratios(metric, &config.ratios);
            if !ratios.is_empty() {
                curves.push(method_curve(model, example, &saliency, method, metric, &ratios)?);
            }
        }
    }
    if config.random_trials > 0 {
        for &metric in &config.metrics {
            let ratios = metric_ratios(metric, &config.ratios);
            if !ratios.is_empty() {
                curves.push(random_baseline_curve(model, example, metric, &ratios, config.random_trials, seed)?);
            }
        }
    }
    Ok(ExampleResult {
        id: example.id.clone(),
        context_len: example.context_len(),
        response_len: example.response_len(),
        seed,
        full,
        curves,
    })
}

/// Runs every method and the random baseline over a corpus. Failed
/// examples are logged, recorded in `failures` and left out of the
/// aggregates. Output is independent of corpus order and thread count.
pub fn sweep<G: Generator + ?Sized>(model: &G, corpus: &[Example], config: &SweepConfig) -> Result<CorpusReport> {
    if corpus.is_empty() {
        return Err(LergError::EmptyCorpus);
    }
    validate_ratios(&config.ratios)?;
    config.plan.validate()?;
    if config.methods.is_empty() && config.random_trials == 0 {
        return Err(LergError::Validation("nothing to evaluate: no methods and no random baseline".into()));
    }
    if config.metrics.is_empty() {
        return Err(LergError::Validation("no metrics selected".into()));
    }
    let mut seen = BTreeSet::new();
    for ex in corpus {
        if !seen.insert(ex.id.as_str()) {
            return Err(LergError::Validation(format!("duplicate example id `{}`", ex.id)));
        }
    }
    if !model.manifest().normalized {
        return Err(LergError::Unnormalized(model.manifest().vocabulary.clone()));
    }

    let mut sorted: Vec<&Example> = corpus.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let outcomes: Vec<(String, Result<ExampleResult>)> = sorted
        .par_iter()
        .map(|ex| (ex.id.clone(), run_example(model, ex, config)))
        .collect();

    let mut examples = Vec::new();
    let mut failures = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(r) => examples.push(r),
            Err(e) => {
                log::warn!("example `{id}` failed: {e}");
                failures.push(ExampleFailure {
                    id,
                    code: e.code().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }

    let aggregates = aggregate(&examples);
    let (log_sum, tokens) = examples
        .iter()
        .fold((0.0, 0usize), |(s, t), r| (s + r.full.log_sum, t + r.full.tokens));
    Ok(CorpusReport {
        schema: 1,
        seed: config.plan.seed,
        config: config.clone(),
        examples,
        failures,
        aggregates,
        full_perplexity: if tokens == 0 { f64::NAN } else { (log_sum / tokens as f64).exp() },
    })
}

/// Token-weighted and example-mean aggregates, in the curve order of the
/// first example.
pub fn aggregate(examples: &[ExampleResult]) -> Vec<AggregateCurve> {
    let Some(first) = examples.first() else {
        return Vec::new();
    };
    first
        .curves
        .iter()
        .enumerate()
        .map(|(c, template)| {
            let r = template.ratios.len();
            let mut log_sums = vec![0.0; r];
            let mut tokens = vec![0usize; r];
            let mut clamped = vec![0usize; r];
            let mut value_sums = vec![0.0; r];
            for ex in examples {
                for (k, p) in ex.curves[c].points.iter().enumerate() {
                    log_sums[k] += p.log_sum;
                    tokens[k] += p.tokens;
                    clamped[k] += p.clamped;
                    value_sums[k] += p.value();
                }
            }
            AggregateCurve {
                metric: template.metric,
                baseline: template.baseline,
                method: template.method,
                ratios: template.ratios.clone(),
                token_mean: (0..r).map(|k| (log_sums[k] / tokens[k] as f64).exp()).collect(),
                example_mean: value_sums.iter().map(|v| v / examples.len() as f64).collect(),
                log_sums,
                tokens,
                clamped,
                examples: examples.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{train_ngram, NgramHyperParams, NgramModel};

    fn corpus() -> Vec<Example> {
        vec![
            Example::parse("a", "rain cold today wind", "take an umbrella").unwrap(),
            Example::parse("b", "sun warm today", "wear a hat").unwrap(),
            Example::parse("c", "cold wind tonight rain sun", "take a coat").unwrap(),
            Example::parse("d", "rain wind tonight", "take an umbrella and a coat").unwrap(),
        ]
    }

    fn model() -> NgramModel {
        NgramModel::new(train_ngram(&corpus(), NgramHyperParams::default()).unwrap()).unwrap()
    }

    fn config() -> SweepConfig {
        let mut c = SweepConfig::new(vec![Method::LergS, Method::Lime], 7);
        c.plan.samples = 200;
        c.random_trials = 3;
        c.ratios = vec![0.2, 0.4];
        c
    }

    #[test]
    fn single_example_aggregate_matches_example() {
        let m = model();
        let report = sweep(&m, &corpus()[..1], &config()).unwrap();
        for (agg, curve) in report.aggregates.iter().zip(&report.examples[0].curves) {
            let values = curve.values();
            for k in 0..agg.ratios.len() {
                assert!((agg.token_mean[k] - values[k]).abs() < 1e-12);
                assert!((agg.example_mean[k] - values[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn aggregate_combines_disjoint_parts_by_tokens() {
        let m = model();
        let c = corpus();
        let whole = sweep(&m, &c, &config()).unwrap();
        let left = sweep(&m, &c[..2], &config()).unwrap();
        let right = sweep(&m, &c[2..], &config()).unwrap();
        for (k, agg) in whole.aggregates.iter().enumerate() {
            for r in 0..agg.ratios.len() {
                let (l, rr) = (&left.aggregates[k], &right.aggregates[k]);
                let tl = l.tokens[r] as f64;
                let tr = rr.tokens[r] as f64;
                let combined = ((tl * l.token_mean[r].ln() + tr * rr.token_mean[r].ln()) / (tl + tr)).exp();
                assert!((agg.token_mean[r] - combined).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reordering_the_corpus_is_bitwise_neutral() {
        let m = model();
        let mut c = corpus();
        let a = serde_json::to_string(&sweep(&m, &c, &config()).unwrap()).unwrap();
        c.reverse();
        let b = serde_json::to_string(&sweep(&m, &c, &config()).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failures_are_recorded_not_dropped() {
        let m = model();
        let mut c = corpus();
        c.push(Example::parse("z", "rain", "take").unwrap());
        let report = sweep(&m, &c, &config()).unwrap();
        assert_eq!(report.examples.len(), 4);
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].id, "z");
        assert_eq!(report.failures[0].code, "degenerate_input");
    }

    #[test]
    fn raw_sums_recompose_values() {
        let report = sweep(&model(), &corpus(), &config()).unwrap();
        for ex in &report.examples {
            for curve in &ex.curves {
                for p in &curve.points {
                    assert!((p.value() - (p.log_sum / p.tokens as f64).exp()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn full_ratio_only_applies_to_ppl_a() {
        let mut c = config();
        c.ratios = vec![0.5, 1.0];
        let report = sweep(&model(), &corpus(), &c).unwrap();
        assert!(report.failures.is_empty());
        for agg in &report.aggregates {
            let expected: &[f64] = match agg.metric {
                MetricKind::PplcR => &[0.5],
                MetricKind::PplA => &[0.5, 1.0],
            };
            assert_eq!(agg.ratios, expected);
        }
        let full = report.full_perplexity;
        let lerg = report
            .aggregates
            .iter()
            .find(|a| a.metric == MetricKind::PplA && a.method == Some(Method::LergS))
            .unwrap();
        assert!((lerg.token_mean[1] - full).abs() <= 1e-12);
    }

    #[test]
    fn duplicate_ids_and_empty_corpus_are_rejected() {
        let m = model();
        assert!(matches!(sweep(&m, &[], &config()), Err(LergError::EmptyCorpus)));
        let c = vec![corpus()[0].clone(), corpus()[0].clone()];
        assert!(matches!(sweep(&m, &c, &config()), Err(LergError::Validation(_))));
    }
}
