//! Perturbation distributions over context masks.
//!
//! Two samplers exist. The regression neighbourhood used by LIME and LERG_L
//! removes between 1 and `floor(max_masked_ratio * M)` segments. The
//! Shapley-family sampler draws a coalition `x~` of the segments other
//! than a target `i` with
//!
//! ```text
//! P(x~) = 1 / ((M - 1) * C(M - 1, |x~|)),   |x~| in {0, ..., M - 2}
//! ```
//!
//! i.e. a uniform size followed by a uniform subset of that size. Sizes
//! stop at `M - 2`, so the full remainder `x \ {x_i}` is never drawn.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LergError, Result};
use crate::mask::{Mask, PerturbMode};
use crate::rng::{split_stream, UNIFORM_MASK_STREAM};

/// Largest context that may be enumerated exhaustively.
pub const ENUMERATION_CAP: usize = 20;

pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_MAX_MASKED_RATIO: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbPlan {
    /// Number of perturbations `m` (per target index for Shapley samplers).
    pub samples: usize,
    /// Upper bound on the fraction of segments the regression sampler removes.
    pub max_masked_ratio: f64,
    pub seed: u64,
    /// Width of the optional `exp(-D^2 / sigma^2)` locality kernel; `None`
    /// weights every sample equally.
    #[serde(default)]
    pub kernel_width: Option<f64>,
    #[serde(default)]
    pub mode: PerturbMode,
}

impl Default for PerturbPlan {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            max_masked_ratio: DEFAULT_MAX_MASKED_RATIO,
            seed: 0,
            kernel_width: None,
            mode: PerturbMode::Delete,
        }
    }
}

impl PerturbPlan {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(LergError::Validation("sample count must be positive".into()));
        }
        if !(self.max_masked_ratio > 0.0 && self.max_masked_ratio <= 1.0) {
            return Err(LergError::Validation(format!(
                "max_masked_ratio must lie in (0, 1], got {}",
                self.max_masked_ratio
            )));
        }
        if let Some(w) = self.kernel_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(LergError::Validation(format!("kernel width must be positive, got {w}")));
            }
        }
        Ok(())
    }

    /// Largest number of segments the regression sampler may remove.
    pub fn max_removed(&self, m: usize) -> usize {
        let cap = (self.max_masked_ratio * m as f64 + 1e-9).floor() as usize;
        cap.clamp(1, m.saturating_sub(1).max(1))
    }

    /// Locality weight of `mask`; 1 when the kernel is off.
    pub fn kernel_weight(&self, mask: &Mask) -> f64 {
        match self.kernel_width {
            None => 1.0,
            Some(width) => {
                let d = mask.distance_to_full() as f64;
                (-(d * d) / (width * width)).exp()
            }
        }
    }
}

/// The default kernel width for a context of length `m`.
pub fn default_kernel_width(m: usize) -> f64 {
    m as f64 / 2.0
}

/// Regression neighbourhood: size uniform on `1..=max_removed`, positions
/// uniform without replacement.
pub fn sample_uniform_masks(plan: &PerturbPlan, m: usize) -> Result<Vec<Mask>> {
    plan.validate()?;
    if m < 2 {
        return Err(LergError::DegenerateInput(format!(
            "need at least 2 context segments to perturb, got {m}"
        )));
    }
    let max_removed = plan.max_removed(m);
    let mut rng = split_stream(plan.seed, UNIFORM_MASK_STREAM);
    Ok((0..plan.samples)
        .map(|_| {
            let removed = rng.gen_range(1..=max_removed);
            let picks = index::sample(&mut rng, m, removed).into_vec();
            Mask::from_removed(m, &picks).expect("indices in range")
        })
        .collect())
}

/// `C(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, t| acc * (n - t) as f64 / (t + 1) as f64)
}

/// Classical Shapley weight `s! (M - s - 1)! / M!`.
pub fn shapley_subset_weight(total: usize, subset_size: usize) -> Result<f64> {
    if subset_size >= total {
        return Err(LergError::DomainError(format!(
            "subset size {subset_size} must be below player count {total}"
        )));
    }
    Ok(1.0 / (total as f64 * binomial(total - 1, subset_size)))
}

/// Probability of one specific coalition of size `subset_size` under the
/// Shapley-family sampler. Zero for `subset_size = M - 1`.
pub fn footnote_subset_prob(total: usize, subset_size: usize) -> Result<f64> {
    if total < 2 {
        return Err(LergError::DegenerateInput(format!(
            "coalition sampling needs at least 2 segments, got {total}"
        )));
    }
    if subset_size >= total {
        return Err(LergError::DomainError(format!(
            "subset size {subset_size} must be below player count {total}"
        )));
    }
    if subset_size == total - 1 {
        return Ok(0.0);
    }
    Ok(1.0 / ((total - 1) as f64 * binomial(total - 1, subset_size)))
}

/// Coalitions `x~ ⊆ x \ {x_i}` drawn from the Shapley-family distribution.
/// Bit `target` is always 0. Each target uses its own RNG stream.
pub fn sample_shapley_masks(plan: &PerturbPlan, m: usize, target: usize) -> Result<Vec<Mask>> {
    plan.validate()?;
    if m < 2 {
        return Err(LergError::DegenerateInput(format!(
            "need at least 2 context segments for coalition sampling, got {m}"
        )));
    }
    if target >= m {
        return Err(LergError::DomainError(format!("target {target} out of range for M = {m}")));
    }
    let mut rng = split_stream(plan.seed, target as u64);
    Ok((0..plan.samples)
        .map(|_| {
            let size = rng.gen_range(0..=m - 2);
            let kept: Vec<usize> = index::sample(&mut rng, m - 1, size)
                .into_iter()
                .map(|k| if k >= target { k + 1 } else { k })
                .collect();
            Mask::from_kept(m, &kept).expect("indices in range")
        })
        .collect())
}

/// Every mask over `m` segments in lexicographic order, optionally with
/// `exclude` pinned to 0.
pub fn enumerate_all_masks(m: usize, exclude: Option<usize>) -> Result<Vec<Mask>> {
    if m > ENUMERATION_CAP {
        return Err(LergError::TooLarge {
            size: m,
            cap: ENUMERATION_CAP,
        });
    }
    if let Some(i) = exclude {
        if i >= m {
            return Err(LergError::DomainError(format!("exclude index {i} out of range for M = {m}")));
        }
    }
    Ok((0..1u64 << m)
        .map(|code| Mask::from_code(m, code))
        .filter(|mask| exclude.is_none_or(|i| !mask.get(i)))
        .collect())
}

/// The full and empty masks, for metrics and property checks.
pub fn boundary_masks(m: usize) -> [Mask; 2] {
    [Mask::full(m), Mask::empty(m)]
}
