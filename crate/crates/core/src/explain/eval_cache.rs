use std::collections::HashMap;

use crate::error::Result;
use crate::mask::{Mask, PerturbMode};
use crate::models::{score_checked, Generator};
use crate::text::Example;

/// Scores for a set of distinct masks of one example.
pub(crate) struct MaskScores {
    index: HashMap<Mask, usize>,
    scores: Vec<Vec<f64>>,
}

impl MaskScores {
    /// Deduplicates `masks` (first occurrence wins the slot) and scores
    /// them in one ordered pass.
    pub(crate) fn evaluate<G, I>(model: &G, example: &Example, mode: &PerturbMode, masks: I) -> Result<Self>
    where
        G: Generator + ?Sized,
        I: IntoIterator<Item = Mask>,
    {
        let mut index = HashMap::new();
        let mut order = Vec::new();
        for mask in masks {
            if !index.contains_key(&mask) {
                index.insert(mask.clone(), order.len());
                order.push(mask);
            }
        }
        let contexts: Vec<Vec<String>> = order
            .iter()
            .map(|m| m.apply(example.context.segments(), mode))
            .collect();
        let scores = score_checked(model, &contexts, example.response.segments())?
            .into_iter()
            .map(|s| s.0)
            .collect();
        Ok(Self { index, scores })
    }

    pub(crate) fn get(&self, mask: &Mask) -> &[f64] {
        &self.scores[self.index[mask]]
    }

    pub(crate) fn distinct(&self) -> usize {
        self.scores.len()
    }
}
