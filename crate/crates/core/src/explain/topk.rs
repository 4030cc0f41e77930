use crate::attribution::Saliency;
use crate::error::{LergError, Result};

/// Number of segments selected at `ratio`: `ceil(ratio * M)`, at least 1.
/// A small tolerance keeps `0.3 * 10` from rounding up to 4.
pub fn top_k_count(ratio: f64, m: usize) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(LergError::Validation(format!("ratio must lie in (0, 1], got {ratio}")));
    }
    Ok(((ratio * m as f64 - 1e-9).ceil() as usize).clamp(1, m.max(1)))
}

/// Indices of the `ceil(ratio * M)` highest scores. Ties go to the lower
/// index; the result is in positional order.
pub fn top_k_segments(saliency: &Saliency, ratio: f64) -> Result<Vec<usize>> {
    let m = saliency.len();
    let k = top_k_count(ratio, m)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| saliency.scores[b].total_cmp(&saliency.scores[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = order.into_iter().take(k).collect();
    picked.sort_unstable();
    Ok(picked)
}
