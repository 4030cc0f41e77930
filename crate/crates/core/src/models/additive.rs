//! Log-additive toy model with analytically known attributions.
//!
//! The score for step `j` under mask `z` is exactly `b_j + sum_i z_i W_ij`,
//! so every log-difference estimator must return `W`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Generator, Manifest, ModelKind};
use crate::attribution::{StepLogProbs, EPS_NORM};
use crate::error::{LergError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveToySpec {
    /// Context segments the weight rows refer to; must be distinct.
    pub context: Vec<String>,
    /// Per-step base log-score `b` (length `N`).
    pub base: Vec<f64>,
    /// `M x N` contribution of segment `i` to step `j`.
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct AdditiveToy {
    spec: AdditiveToySpec,
    index: HashMap<String, usize>,
    manifest: Manifest,
}

impl AdditiveToy {
    pub fn new(spec: AdditiveToySpec) -> Result<Self> {
        let m = spec.context.len();
        let n = spec.base.len();
        if n == 0 {
            return Err(LergError::Validation("additive toy needs N >= 1".into()));
        }
        if spec.weights.len() != m || spec.weights.iter().any(|r| r.len() != n) {
            return Err(LergError::Validation(format!(
                "weights must be {m} x {n} to match context and base"
            )));
        }
        if spec
            .base
            .iter()
            .chain(spec.weights.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(LergError::Validation("additive toy values must be finite".into()));
        }
        let mut index = HashMap::with_capacity(m);
        for (i, seg) in spec.context.iter().enumerate() {
            if index.insert(seg.clone(), i).is_some() {
                return Err(LergError::Validation(format!(
                    "additive toy context segment `{seg}` is not unique"
                )));
            }
        }
        let mut normalized = true;
        for j in 0..n {
            let full: f64 = spec.base[j] + spec.weights.iter().map(|r| r[j]).sum::<f64>();
            if full > EPS_NORM {
                return Err(LergError::Validation(format!(
                    "full-input score at step {j} is {full} > 0"
                )));
            }
            let worst = spec.base[j] + spec.weights.iter().map(|r| r[j].max(0.0)).sum::<f64>();
            normalized &= worst <= EPS_NORM;
        }
        Ok(Self {
            spec,
            index,
            manifest: Manifest {
                kind: ModelKind::AdditiveToy,
                normalized,
                vocabulary: "closed: unknown context segments contribute nothing".into(),
                max_batch: 4096,
            },
        })
    }

    pub fn spec(&self) -> &AdditiveToySpec {
        &self.spec
    }

    /// Weight matrix `W` as rows.
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.spec.weights
    }
}

impl Generator for AdditiveToy {
    fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn score(&self, context: &[String], response: &[String]) -> Result<StepLogProbs> {
        if response.len() != self.spec.base.len() {
            return Err(LergError::Validation(format!(
                "additive toy scores responses of length {}, got {}",
                self.spec.base.len(),
                response.len()
            )));
        }
        let mut out = self.spec.base.clone();
        for seg in context {
            if let Some(&i) = self.index.get(seg) {
                for (o, w) in out.iter_mut().zip(&self.spec.weights[i]) {
                    *o += w;
                }
            }
        }
        Ok(StepLogProbs(out))
    }
}
