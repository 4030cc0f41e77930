//! Lookup-table test double: an arbitrary score vector for every subset of
//! the context. Used to build instances whose premises (dominance,
//! symmetry) are set directly rather than searched for.

use std::collections::HashMap;

use super::{Generator, Manifest, ModelKind};
use crate::attribution::{StepLogProbs, EPS_NORM};
use crate::error::{LergError, Result};
use crate::mask::Mask;

/// Largest context a table can cover.
pub const TABLE_MAX_CONTEXT: usize = 20;

#[derive(Debug, Clone)]
pub struct TableModel {
    context: Vec<String>,
    index: HashMap<String, usize>,
    /// `scores[mask.code()][j]`.
    scores: Vec<Vec<f64>>,
    response_len: usize,
    manifest: Manifest,
}

impl TableModel {
    /// `scores` must hold `2^M` rows of length `N`, indexed by [`Mask::code`].
    pub fn new(context: Vec<String>, scores: Vec<Vec<f64>>) -> Result<Self> {
        let m = context.len();
        if m > TABLE_MAX_CONTEXT {
            return Err(LergError::TooLarge {
                size: m,
                cap: TABLE_MAX_CONTEXT,
            });
        }
        if scores.len() != 1usize << m {
            return Err(LergError::Validation(format!(
                "table needs {} rows, got {}",
                1usize << m,
                scores.len()
            )));
        }
        let response_len = scores[0].len();
        if response_len == 0 || scores.iter().any(|r| r.len() != response_len) {
            return Err(LergError::Validation("table rows must share a length >= 1".into()));
        }
        if scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(LergError::Validation("table scores must be finite".into()));
        }
        let mut index = HashMap::new();
        for (i, seg) in context.iter().enumerate() {
            if index.insert(seg.clone(), i).is_some() {
                return Err(LergError::Validation(format!("segment `{seg}` is not unique")));
            }
        }
        let normalized = scores.iter().flatten().all(|&v| v <= EPS_NORM);
        Ok(Self {
            context,
            index,
            scores,
            response_len,
            manifest: Manifest {
                kind: ModelKind::Table,
                normalized,
                vocabulary: "closed: exact context segments only".into(),
                max_batch: 4096,
            },
        })
    }

    /// Fills the table by evaluating `f` on every mask.
    pub fn from_fn<F>(context: Vec<String>, response_len: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&Mask) -> Vec<f64>,
    {
        let m = context.len();
        if m > TABLE_MAX_CONTEXT {
            return Err(LergError::TooLarge {
                size: m,
                cap: TABLE_MAX_CONTEXT,
            });
        }
        let scores = (0..1u64 << m)
            .map(|code| {
                let row = f(&Mask::from_code(m, code));
                debug_assert_eq!(row.len(), response_len);
                row
            })
            .collect();
        Self::new(context, scores)
    }

    pub fn context(&self) -> &[String] {
        &self.context
    }

    /// Score row for a mask over the table's own context.
    pub fn row(&self, mask: &Mask) -> &[f64] {
        &self.scores[mask.code() as usize]
    }
}

impl Generator for TableModel {
    fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn score(&self, context: &[String], response: &[String]) -> Result<StepLogProbs> {
        if response.len() != self.response_len {
            return Err(LergError::Validation(format!(
                "table scores responses of length {}, got {}",
                self.response_len,
                response.len()
            )));
        }
        let m = self.context.len();
        let mut code = 0u64;
        for seg in context {
            match self.index.get(seg) {
                Some(&i) => code |= 1 << (m - 1 - i),
                None => {
                    return Err(LergError::Validation(format!(
                        "segment `{seg}` is not part of the table context"
                    )))
                }
            }
        }
        Ok(StepLogProbs(self.scores[code as usize].clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::PerturbMode;

    #[test]
    fn looks_up_by_subset() {
        let ctx: Vec<String> = vec!["a".into(), "b".into()];
        let t = TableModel::from_fn(ctx.clone(), 1, |m| vec![-(m.code() as f64) - 1.0]).unwrap();
        let r = vec!["y".to_string()];
        let mask = Mask::from_bits(vec![true, false]);
        assert_eq!(t.score(&mask.apply(&ctx, &PerturbMode::Delete), &r).unwrap().0, vec![-3.0]);
        assert_eq!(t.score(&[], &r).unwrap().0, vec![-1.0]);
        assert!(t.manifest().normalized);
        assert!(t.score(&["zz".to_string()], &r).is_err());
    }
}
