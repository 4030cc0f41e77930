//! Exhaustive-enumeration estimators, used as ground truth for small `M`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::check_floor;
use crate::attribution::{ExplanationMatrix, Matrix, Method};
use crate::error::{LergError, Result};
use crate::mask::Mask;
use crate::models::{score_checked, Generator};
use crate::perturb::{footnote_subset_prob, shapley_subset_weight, ENUMERATION_CAP};
use crate::text::Example;

/// Which coalition weights the exact sum uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `1 / ((M-1) C(M-1, s))` for `s <= M-2`, zero for the full remainder.
    FootnoteRange,
    /// `s! (M-s-1)! / M!` for every `s <= M-1`.
    Classical,
}

impl Convention {
    /// Weight of one coalition of size `s` out of `m` players. A single
    /// player only has the empty coalition, which gets weight 1 under
    /// both conventions.
    pub fn weight(self, m: usize, s: usize) -> Result<f64> {
        match self {
            Convention::Classical => shapley_subset_weight(m, s),
            Convention::FootnoteRange if m == 1 => shapley_subset_weight(m, s),
            Convention::FootnoteRange => footnote_subset_prob(m, s),
        }
    }
}

fn exact_sum<G: Generator + ?Sized>(
    model: &G,
    example: &Example,
    log_gain: bool,
    convention: Convention,
    method: Method,
) -> Result<ExplanationMatrix> {
    let m = example.context_len();
    let n = example.response_len();
    if m > ENUMERATION_CAP {
        return Err(LergError::TooLarge {
            size: m,
            cap: ENUMERATION_CAP,
        });
    }
    let count = 1usize << m;
    let contexts: Vec<Vec<String>> = (0..count as u64)
        .map(|code| Mask::from_code(m, code).apply(example.context.segments(), &crate::mask::PerturbMode::Delete))
        .collect();
    let scores = score_checked(model, &contexts, example.response.segments())?;
    if log_gain {
        for s in &scores {
            for (j, &lp) in s.values().iter().enumerate() {
                check_floor(lp, j)?;
            }
        }
    }
    let gain = |code: usize, j: usize| {
        let lp = scores[code].values()[j];
        if log_gain {
            lp
        } else {
            lp.exp()
        }
    };
    let weights: Vec<f64> = (0..m).map(|s| convention.weight(m, s)).collect::<Result<_>>()?;

    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let bit = 1usize << (m - 1 - i);
            let mut row = vec![0.0; n];
            for code in (0..count).filter(|c| c & bit == 0) {
                let w = weights[code.count_ones() as usize];
                if w == 0.0 {
                    continue;
                }
                for (j, acc) in row.iter_mut().enumerate() {
                    *acc += w * (gain(code | bit, j) - gain(code, j));
                }
            }
            row
        })
        .collect();

    ExplanationMatrix::new(Matrix::from_rows(&rows)?, method, count, 0)
}

/// Exact weighted sum of marginal gains over every coalition of
/// `x \ {x_i}`. `log_gain` selects log-probability differences instead of
/// probability differences.
pub fn exact_shapley<G: Generator + ?Sized>(
    model: &G,
    example: &Example,
    log_gain: bool,
    convention: Convention,
) -> Result<ExplanationMatrix> {
    exact_sum(model, example, log_gain, convention, Method::ExactShapley)
}

/// The expectation LERG_S estimates, computed exactly: log-probability
/// gains weighted by the coalition sampler's own distribution.
pub fn exact_lerg_s<G: Generator + ?Sized>(model: &G, example: &Example) -> Result<ExplanationMatrix> {
    exact_sum(model, example, true, Convention::FootnoteRange, Method::ExactLergS)
}
