//! Monte Carlo estimators over sampled coalitions (Shapley, Shapley-w, LERG_S).

use rayon::prelude::*;

use super::eval_cache::MaskScores;
use super::check_floor;
use crate::attribution::{ExplanationMatrix, Matrix, Method};
use crate::error::Result;
use crate::mask::Mask;
use crate::models::Generator;
use crate::perturb::{binomial, sample_shapley_masks, PerturbPlan};
use crate::text::Example;

#[derive(Clone, Copy)]
enum Gain {
    Probability,
    LogProbability,
}

struct Estimate {
    phi: Matrix,
    std_error: Matrix,
}

/// Per-target marginal contributions averaged over coalitions. With
/// `uniform_subsets` the samples are reweighted by `1 / P(x~)` so every
/// subset counts equally.
fn coalition_mean<G: Generator + ?Sized>(
    model: &G,
    example: &Example,
    plan: &PerturbPlan,
    gain: Gain,
    uniform_subsets: bool,
) -> Result<Estimate> {
    plan.validate()?;
    let m = example.context_len();
    let n = example.response_len();

    if m == 1 {
        // The empty coalition is the only one; the estimate is exact.
        let scores = MaskScores::evaluate(model, example, &plan.mode, [Mask::full(1), Mask::empty(1)])?;
        let mut phi = Matrix::zeros(1, n);
        let (with, without) = (scores.get(&Mask::full(1)), scores.get(&Mask::empty(1)));
        for j in 0..n {
            phi.set(0, j, marginal(gain, with[j], without[j], j)?);
        }
        return Ok(Estimate {
            phi,
            std_error: Matrix::zeros(1, n),
        });
    }

    let per_target: Vec<Vec<Mask>> = (0..m)
        .into_par_iter()
        .map(|i| sample_shapley_masks(plan, m, i))
        .collect::<Result<_>>()?;
    let all = per_target
        .iter()
        .enumerate()
        .flat_map(|(i, masks)| masks.iter().flat_map(move |z| [z.clone(), z.with(i, true)]));
    let scores = MaskScores::evaluate(model, example, &plan.mode, all)?;
    log::debug!("{} distinct coalitions scored for `{}`", scores.distinct(), example.id);

    let rows: Vec<(Vec<f64>, Vec<f64>)> = per_target
        .par_iter()
        .enumerate()
        .map(|(i, masks)| {
            let mut diffs = vec![Vec::with_capacity(masks.len()); n];
            let mut weights = Vec::with_capacity(masks.len());
            for z in masks {
                let without = scores.get(z);
                let with = scores.get(&z.with(i, true));
                for j in 0..n {
                    diffs[j].push(marginal(gain, with[j], without[j], j)?);
                }
                weights.push(if uniform_subsets {
                    binomial(m - 1, z.kept_count())
                } else {
                    1.0
                });
            }
            let mut means = Vec::with_capacity(n);
            let mut errors = Vec::with_capacity(n);
            for d in &diffs {
                let (mean, se) = weighted_mean_and_error(d, &weights);
                means.push(mean);
                errors.push(se);
            }
            Ok((means, errors))
        })
        .collect::<Result<_>>()?;

    let mut phi = Matrix::zeros(m, n);
    let mut std_error = Matrix::zeros(m, n);
    for (i, (means, errors)) in rows.iter().enumerate() {
        for j in 0..n {
            phi.set(i, j, means[j]);
            std_error.set(i, j, errors[j]);
        }
    }
    Ok(Estimate { phi, std_error })
}

fn marginal(gain: Gain, with: f64, without: f64, step: usize) -> Result<f64> {
    Ok(match gain {
        Gain::Probability => with.exp() - without.exp(),
        Gain::LogProbability => {
            check_floor(with, step)?;
            check_floor(without, step)?;
            with - without
        }
    })
}

/// Self-normalised weighted mean and its standard error. With equal
/// weights this is the sample mean and `s / sqrt(m)`.
fn weighted_mean_and_error(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
    let k = values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let equal = weights.iter().all(|&w| w == weights[0]);
    let se = if equal {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        let num: f64 = values.iter().zip(weights).map(|(v, w)| (w * (v - mean)).powi(2)).sum();
        num.sqrt() / total
    };
    (mean, se)
}

/// Sampled Shapley value with the probability-difference gain.
///
/// `weighted = true` averages coalitions drawn from the Shapley-family
/// distribution. `weighted = false` is Shapley-w: the same draws
/// reweighted so that every coalition counts equally.
pub fn sampled_shapley<G: Generator + ?Sized>(
    model: &G,
    example: &Example,
    plan: &PerturbPlan,
    weighted: bool,
) -> Result<ExplanationMatrix> {
    let est = coalition_mean(model, example, plan, Gain::Probability, !weighted)?;
    let method = if weighted { Method::Shapley } else { Method::ShapleyW };
    let mut e = ExplanationMatrix::new(est.phi, method, plan.samples, plan.seed)?;
    e.std_error = Some(est.std_error);
    Ok(e)
}

/// LERG_S: the mean log-probability gain of adding `x_i` to a sampled
/// coalition, `(1/m) Σ [log P(y_j | x~ ∪ x_i) - log P(y_j | x~)]`.
pub fn lerg_s<G: Generator + ?Sized>(model: &G, example: &Example, plan: &PerturbPlan) -> Result<ExplanationMatrix> {
    let est = coalition_mean(model, example, plan, Gain::LogProbability, false)?;
    let mut e = ExplanationMatrix::new(est.phi, Method::LergS, plan.samples, plan.seed)?;
    e.std_error = Some(est.std_error);
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::LergError;
    use crate::models::{train_ngram, AdditiveToy, AdditiveToySpec, NgramHyperParams, NgramModel, TableModel};
    use crate::text::{Example, SegmentedText};

    fn words(n: usize, prefix: &str) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn example(m: usize, n: usize) -> Example {
        Example::new(
            "t",
            SegmentedText::from_segments(&words(m, "x")).unwrap(),
            SegmentedText::from_segments(&words(n, "y")).unwrap(),
        )
    }

    #[test]
    fn additive_toy_gives_weights_exactly() {
        let weights = vec![vec![-0.2, -0.7, -0.1], vec![-1.3, -0.05, -0.4], vec![-0.6, -0.3, -0.9], vec![-0.01, -0.2, -0.5]];
        let toy = AdditiveToy::new(AdditiveToySpec {
            context: words(4, "x"),
            base: vec![-0.1, -0.2, -0.3],
            weights: weights.clone(),
        })
        .unwrap();
        let e = lerg_s(&toy, &example(4, 3), &PerturbPlan::with_seed(9).with_samples(200)).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                assert!((e.get(i, j) - weights[i][j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn input_invariant_model_gives_zero() {
        let model = TableModel::from_fn(words(5, "x"), 2, |_| vec![-0.7, -2.1]).unwrap();
        let plan = PerturbPlan::with_seed(3).with_samples(100);
        for e in [
            lerg_s(&model, &example(5, 2), &plan).unwrap(),
            sampled_shapley(&model, &example(5, 2), &plan, true).unwrap(),
            sampled_shapley(&model, &example(5, 2), &plan, false).unwrap(),
        ] {
            assert_eq!(e.phi.max_abs(), 0.0);
        }
    }

    #[test]
    fn duplicate_segments_get_matching_attributions() {
        let corpus = vec![
            Example::parse("a", "rain rain cold", "take an umbrella").unwrap(),
            Example::parse("b", "sun warm", "wear a hat").unwrap(),
            Example::parse("c", "cold wind", "take a coat").unwrap(),
        ];
        let model = NgramModel::new(train_ngram(&corpus, NgramHyperParams::default()).unwrap()).unwrap();
        let ex = Example::parse("q", "rain warm rain wind", "take an umbrella").unwrap();
        let (mut within, mut total) = (0, 0);
        for seed in 0..30 {
            let e = sampled_shapley(&model, &ex, &PerturbPlan::with_seed(seed).with_samples(400), true).unwrap();
            let se = e.std_error.as_ref().unwrap();
            for j in 0..3 {
                let gap = (e.get(0, j) - e.get(2, j)).abs();
                let bound = 2.0 * (se.get(0, j).powi(2) + se.get(2, j).powi(2)).sqrt();
                within += usize::from(gap <= bound);
                total += 1;
            }
        }
        // About 95% of gaps fall inside two standard errors.
        assert!(within * 100 >= total * 85, "{within}/{total} within 2 SE");
    }

    #[test]
    fn log_gain_refuses_tiny_probabilities() {
        let model = TableModel::from_fn(words(3, "x"), 1, |mask| vec![if mask.kept_count() == 0 { -50.0 } else { -1.0 }]).unwrap();
        let err = lerg_s(&model, &example(3, 1), &PerturbPlan::with_seed(1)).unwrap_err();
        assert!(matches!(err, LergError::ReferenceUnderflow { .. }));
    }

    #[test]
    fn single_segment_context_is_exact() {
        let toy = AdditiveToy::new(AdditiveToySpec {
            context: vec!["x0".into()],
            base: vec![-1.0],
            weights: vec![vec![-0.25]],
        })
        .unwrap();
        let e = lerg_s(&toy, &example(1, 1), &PerturbPlan::with_seed(1)).unwrap();
        assert_eq!(e.get(0, 0), -0.25);
    }

    #[test]
    fn rerun_is_bitwise_identical() {
        let model = TableModel::from_fn(words(6, "x"), 2, |mask| {
            let c = mask.code() as f64;
            vec![-0.1 - (c * 0.37).sin().abs(), -0.5 - (c * 0.11).cos().abs()]
        })
        .unwrap();
        let plan = PerturbPlan::with_seed(123);
        let a = lerg_s(&model, &example(6, 2), &plan).unwrap();
        let b = lerg_s(&model, &example(6, 2), &plan).unwrap();
        let bits = |e: &ExplanationMatrix| e.phi.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn weighted_mean_and_error_reduce_to_sample_stats() {
        let (mean, se) = weighted_mean_and_error(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4]);
        assert!((mean - 2.5).abs() < 1e-15);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        let (mean, _) = weighted_mean_and_error(&[1.0, 3.0], &[3.0, 1.0]);
        assert!((mean - 1.5).abs() < 1e-15);
    }
}
