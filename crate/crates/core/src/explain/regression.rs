//! Least-squares surrogates (LIME and LERG_L).
//!
//! For every response step `j` the column `Φ_j` minimises
//! `Σ_k w_k (g_kj - b_j - Φ_jᵀ z_k)²` over the sampled neighbourhood, where
//! `b_j` is an intercept that is fitted but not reported. All steps share one
//! batch of perturbations.

use nalgebra::DMatrix;

use super::eval_cache::MaskScores;
use super::check_floor;
use crate::attribution::{ExplanationMatrix, Matrix, Method};
use crate::error::{LergError, Result};
use crate::mask::Mask;
use crate::models::Generator;
use crate::perturb::{sample_uniform_masks, PerturbPlan};
use crate::text::Example;

/// Damping added to the coefficient diagonal of the normal equations.
pub const RIDGE: f64 = 1e-8;

/// Relative pivot size below which the normal matrix counts as singular.
const PIVOT_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionOptions {
    pub intercept: bool,
    /// LERG_L only: regress the log-ratio instead of the ratio.
    pub log_target: bool,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        Self {
            intercept: true,
            log_target: false,
        }
    }
}

/// Solution of a multi-target weighted ridge least-squares problem.
#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    /// `features x targets`.
    pub coefficients: Matrix,
    /// One per target; zeros when fitted without intercept.
    pub intercepts: Vec<f64>,
    /// Max-norm of the objective gradient at the solution.
    pub gradient_max_norm: f64,
}

/// Solves `min_β Σ_k w_k (y_k - [1, x_k] β)² + ridge |β_coef|²` for every
/// target column at once via Cholesky on the normal equations.
///
/// `features` is `samples x p` (rows of 0/1 or reals), `targets` is
/// `samples x t`.
pub fn solve_least_squares(
    features: &[Vec<f64>],
    targets: &[Vec<f64>],
    weights: &[f64],
    intercept: bool,
    ridge: f64,
) -> Result<LeastSquaresFit> {
    let n = features.len();
    if n == 0 || targets.len() != n || weights.len() != n {
        return Err(LergError::Validation("least squares needs matching, non-empty inputs".into()));
    }
    let p = features[0].len();
    let t = targets[0].len();
    let offset = usize::from(intercept);
    let dim = p + offset;

    let mut normal = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DMatrix::<f64>::zeros(dim, t);
    let mut row = vec![0.0; dim];
    for k in 0..n {
        if intercept {
            row[0] = 1.0;
        }
        row[offset..].copy_from_slice(&features[k]);
        let w = weights[k];
        for a in 0..dim {
            let wa = w * row[a];
            if wa == 0.0 {
                continue;
            }
            for b in a..dim {
                normal[(a, b)] += wa * row[b];
            }
            for j in 0..t {
                rhs[(a, j)] += wa * targets[k][j];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            normal[(a, b)] = normal[(b, a)];
        }
    }
    for a in offset..dim {
        normal[(a, a)] += ridge;
    }

    let chol = normal
        .clone()
        .cholesky()
        .ok_or_else(|| LergError::SingularSystem(format!("{dim}x{dim} normal matrix is not positive definite")))?;
    let scale = (0..dim).map(|a| normal[(a, a)]).fold(0.0f64, f64::max);
    let l = chol.l_dirty();
    if let Some(a) = (0..dim).find(|&a| l[(a, a)] * l[(a, a)] < scale * PIVOT_TOLERANCE) {
        return Err(LergError::SingularSystem(format!("pivot {a} of the {dim}x{dim} normal matrix vanishes")));
    }
    let beta = chol.solve(&rhs);
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(LergError::SingularSystem("solution is not finite".into()));
    }

    let gradient = &normal * &beta - &rhs;
    let gradient_max_norm = gradient.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut coefficients = Matrix::zeros(p, t);
    for a in 0..p {
        for j in 0..t {
            coefficients.set(a, j, beta[(a + offset, j)]);
        }
    }
    let intercepts = (0..t)
        .map(|j| if intercept { beta[(0, j)] } else { 0.0 })
        .collect();
    Ok(LeastSquaresFit {
        coefficients,
        intercepts,
        gradient_max_norm,
    })
}

enum Gain {
    Probability,
    Ratio,
    LogRatio,
}

fn fit_surrogate<G: Generator + ?Sized>(
    model: &G,
    example: &Example,
    plan: &PerturbPlan,
    gain: Gain,
    options: RegressionOptions,
    method: Method,
) -> Result<(ExplanationMatrix, LeastSquaresFit)> {
    let m = example.context_len();
    let masks = sample_uniform_masks(plan, m)?;
    let full = Mask::full(m);
    let scores = MaskScores::evaluate(
        model,
        example,
        &plan.mode,
        std::iter::once(full.clone()).chain(masks.iter().cloned()),
    )?;
    let reference = scores.get(&full).to_vec();
    if !matches!(gain, Gain::Probability) {
        for (j, &lp) in reference.iter().enumerate() {
            check_floor(lp, j)?;
        }
    }

    let features: Vec<Vec<f64>> = masks
        .iter()
        .map(|mask| mask.bits().iter().map(|&b| f64::from(u8::from(b))).collect())
        .collect();
    let targets: Vec<Vec<f64>> = masks
        .iter()
        .map(|mask| {
            scores
                .get(mask)
                .iter()
                .zip(&reference)
                .map(|(&lp, &lp_ref)| match gain {
                    Gain::Probability => lp.exp(),
                    Gain::Ratio => (lp - lp_ref).exp(),
                    Gain::LogRatio => lp - lp_ref,
                })
                .collect()
        })
        .collect();
    let weights: Vec<f64> = masks.iter().map(|mask| plan.kernel_weight(mask)).collect();

    let fit = solve_least_squares(&features, &targets, &weights, options.intercept, RIDGE)?;
    let explanation = ExplanationMatrix::new(fit.coefficients.clone(), method, plan.samples, plan.seed)?;
    Ok((explanation, fit))
}

/// LIME adapted to sequence generation: gain is the perturbed step
/// probability.
pub fn fit_lime<G: Generator + ?Sized>(model: &G, example: &Example, plan: &PerturbPlan) -> Result<ExplanationMatrix> {
    fit_lime_with(model, example, plan, RegressionOptions::default()).map(|(e, _)| e)
}

pub fn fit_lime_with<G: Generator + ?Sized>(
    model: &G,
    example: &Example,
    plan: &PerturbPlan,
    options: RegressionOptions,
) -> Result<(ExplanationMatrix, LeastSquaresFit)> {
    fit_surrogate(model, example, plan, Gain::Probability, options, Method::Lime)
}

/// LERG_L: gain is the perturbed step probability divided by the
/// full-context one. Fails with `ReferenceUnderflow` if any full-context
/// step probability is below [`PROB_FLOOR`](super::PROB_FLOOR).
pub fn fit_lerg_l<G: Generator + ?Sized>(model: &G, example: &Example, plan: &PerturbPlan) -> Result<ExplanationMatrix> {
    fit_lerg_l_with(model, example, plan, RegressionOptions::default()).map(|(e, _)| e)
}

pub fn fit_lerg_l_with<G: Generator + ?Sized>(
    model: &G,
    example: &Example,
    plan: &PerturbPlan,
    options: RegressionOptions,
) -> Result<(ExplanationMatrix, LeastSquaresFit)> {
    let gain = if options.log_target { Gain::LogRatio } else { Gain::Ratio };
    fit_surrogate(model, example, plan, gain, options, Method::LergL)
}
