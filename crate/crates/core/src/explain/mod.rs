//! Attribution estimators.
//!
//! Every estimator fits the same contract: given a generator, an example
//! and a perturbation plan, produce an `M x N` matrix whose column `j`
//! explains the model's certainty about response step `j`. They differ in
//! the gain being explained and in how perturbations are drawn:
//!
//! | method        | gain for step `j`                            | fit                     |
//! |---------------|----------------------------------------------|-------------------------|
//! | LIME          | `P(y_j | x~)`                                | least squares           |
//! | LERG_L        | `P(y_j | x~) / P(y_j | x)`                   | least squares           |
//! | Shapley(-w)   | `P(y_j | x~ ∪ x_i) - P(y_j | x~)`            | Monte Carlo mean        |
//! | LERG_S        | `log P(y_j | x~ ∪ x_i) - log P(y_j | x~)`    | Monte Carlo mean        |
//! | exact         | either difference                            | weighted subset sum     |

mod eval_cache;
mod exact;
mod regression;
mod sampled;
mod topk;

pub use exact::{exact_lerg_s, exact_shapley, Convention};
pub use regression::{
    fit_lerg_l, fit_lerg_l_with, fit_lime, fit_lime_with, solve_least_squares, LeastSquaresFit,
    RegressionOptions, RIDGE,
};
pub use sampled::{lerg_s, sampled_shapley};
pub use topk::{top_k_count, top_k_segments};

use crate::attribution::{ExplanationMatrix, Method};
use crate::error::{LergError, Result};
use crate::models::Generator;
use crate::perturb::PerturbPlan;
use crate::text::Example;

/// Probability floor below which log/ratio gains refuse to proceed.
pub const PROB_FLOOR: f64 = 1e-12;

/// Runs `method` with its default options. `ExactShapley` uses the
/// probability gain with classical weights.
pub fn explain<G: Generator + ?Sized>(
    method: Method,
    model: &G,
    example: &Example,
    plan: &PerturbPlan,
) -> Result<ExplanationMatrix> {
    match method {
        Method::Lime => fit_lime(model, example, plan),
        Method::LergL => fit_lerg_l(model, example, plan),
        Method::Shapley => sampled_shapley(model, example, plan, true),
        Method::ShapleyW => sampled_shapley(model, example, plan, false),
        Method::LergS => lerg_s(model, example, plan),
        Method::ExactShapley => exact_shapley(model, example, false, Convention::Classical),
        Method::ExactLergS => exact_lerg_s(model, example),
    }
}

pub(crate) fn check_floor(logp: f64, step: usize) -> Result<()> {
    if logp < PROB_FLOOR.ln() {
        return Err(LergError::ReferenceUnderflow {
            step,
            prob: logp.exp(),
            floor: PROB_FLOOR,
        });
    }
    Ok(())
}
