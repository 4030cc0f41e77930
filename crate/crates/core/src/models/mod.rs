//! The black-box conditional generator being explained.
//!
//! A [`Generator`] only answers one question: given a list of context
//! segments and a response, what is `log P(y_j | context, y_<j)` for every
//! step `j`? Estimators never see model internals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::StepLogProbs;
use crate::error::{LergError, Result};

pub mod additive;
pub mod ngram;
pub mod remote;
pub mod table;
pub mod wire;

pub use additive::{AdditiveToy, AdditiveToySpec};
pub use ngram::{train_ngram, NgramHyperParams, NgramModel, NgramModelSpec};
pub use remote::{RemoteClient, RemoteConfig, Transport};
pub use table::TableModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    AdditiveToy,
    Ngram,
    Remote,
    /// Lookup-table test double with arbitrary per-subset scores.
    Table,
}

/// What a generator declares about itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: ModelKind,
    /// True when every score is a genuine log-probability (`<= 0`).
    pub normalized: bool,
    pub vocabulary: String,
    pub max_batch: usize,
}

/// A stateless scorer: identical queries return identical vectors.
pub trait Generator: Send + Sync {
    fn manifest(&self) -> &Manifest;

    /// `log P(y_j | context, y_<j)` for every response step, in order.
    fn score(&self, context: &[String], response: &[String]) -> Result<StepLogProbs>;

    /// Element `k` equals `score(contexts[k], response)`.
    fn score_batch(&self, contexts: &[Vec<String>], response: &[String]) -> Result<Vec<StepLogProbs>> {
        check_batch_size(self.manifest(), contexts.len())?;
        contexts
            .iter()
            .enumerate()
            .map(|(k, ctx)| self.score(ctx, response).map_err(|e| e.at_index(k)))
            .collect()
    }

    /// Scores any number of contexts by splitting into batches of at most
    /// `max_batch`. Output order matches input order.
    fn score_many(&self, contexts: &[Vec<String>], response: &[String]) -> Result<Vec<StepLogProbs>> {
        let chunk = self.manifest().max_batch.max(1);
        let parts: Vec<Result<Vec<StepLogProbs>>> = contexts
            .par_chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                self.score_batch(part, response).map_err(|e| match e {
                    LergError::BatchElement { index, source } => LergError::BatchElement {
                        index: c * chunk + index,
                        source,
                    },
                    other => other,
                })
            })
            .collect();
        let mut out = Vec::with_capacity(contexts.len());
        for part in parts {
            out.extend(part?);
        }
        Ok(out)
    }
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn manifest(&self) -> &Manifest {
        (**self).manifest()
    }
    fn score(&self, context: &[String], response: &[String]) -> Result<StepLogProbs> {
        (**self).score(context, response)
    }
    fn score_batch(&self, contexts: &[Vec<String>], response: &[String]) -> Result<Vec<StepLogProbs>> {
        (**self).score_batch(contexts, response)
    }
    fn score_many(&self, contexts: &[Vec<String>], response: &[String]) -> Result<Vec<StepLogProbs>> {
        (**self).score_many(contexts, response)
    }
}

pub(crate) fn check_batch_size(manifest: &Manifest, len: usize) -> Result<()> {
    if len > manifest.max_batch {
        return Err(LergError::Validation(format!(
            "batch of {len} exceeds model max_batch {}",
            manifest.max_batch
        )));
    }
    Ok(())
}

/// Scores `contexts` and validates every vector against the manifest.
pub fn score_checked<G: Generator + ?Sized>(
    model: &G,
    contexts: &[Vec<String>],
    response: &[String],
) -> Result<Vec<StepLogProbs>> {
    let scores = model.score_many(contexts, response)?;
    if scores.len() != contexts.len() {
        return Err(LergError::ModelProtocolError(format!(
            "asked for {} score vectors, got {}",
            contexts.len(),
            scores.len()
        )));
    }
    let normalized = model.manifest().normalized;
    for (k, s) in scores.iter().enumerate() {
        s.validate(response.len(), normalized).map_err(|e| e.at_index(k))?;
    }
    Ok(scores)
}
