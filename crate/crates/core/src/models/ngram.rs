//! Desk-scale conditional language model.
//!
//! Each step interpolates an add-k smoothed response bigram with an add-k
//! smoothed context-association distribution:
//!
//! ```text
//! P(w | C, prev) = lambda * (c(prev, w) + k) / (c(prev) + k V)
//!                + (1 - lambda) * (sum_{c in C} A(c, w) + k) / (sum_{c in C} A(c) + k V)
//! ```
//!
//! where `A(c, w)` counts co-occurrences of context word `c` with response
//! word `w` in the same training dialogue and `V` is the vocabulary size
//! including the out-of-vocabulary bucket. Both components are proper
//! distributions over the vocabulary, so the mixture is one as well.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Generator, Manifest, ModelKind};
use crate::attribution::StepLogProbs;
use crate::error::{LergError, Result};
use crate::text::Example;

pub const BOS: &str = "<s>";
pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NgramHyperParams {
    /// Add-k smoothing constant.
    pub k: f64,
    /// Weight on the bigram component; `1 - lambda` goes to the context.
    pub lambda: f64,
}

impl Default for NgramHyperParams {
    fn default() -> Self {
        Self { k: 0.5, lambda: 0.5 }
    }
}

impl NgramHyperParams {
    fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(LergError::Validation(format!("k must be positive, got {}", self.k)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(LergError::Validation(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Serializable counts; see [`NgramModel`] for the scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramModelSpec {
    pub hyper: NgramHyperParams,
    /// Sorted response vocabulary, excluding the `<unk>` bucket.
    pub vocab: Vec<String>,
    /// `prev -> next -> count`; `prev` may be `<s>`.
    pub bigram: BTreeMap<String, BTreeMap<String, u64>>,
    /// `context word -> response word -> co-occurrence count`.
    pub association: BTreeMap<String, BTreeMap<String, u64>>,
}

impl NgramModelSpec {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.hyper.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn bigram_count(&self, prev: &str, next: &str) -> u64 {
        self.bigram
            .get(prev)
            .and_then(|row| row.get(next))
            .copied()
            .unwrap_or(0)
    }

    pub fn association_count(&self, context_word: &str, response_word: &str) -> u64 {
        self.association
            .get(context_word)
            .and_then(|row| row.get(response_word))
            .copied()
            .unwrap_or(0)
    }
}

/// Counts bigrams and context associations over `corpus`.
pub fn train_ngram<'a, I>(corpus: I, hyper: NgramHyperParams) -> Result<NgramModelSpec>
where
    I: IntoIterator<Item = &'a Example>,
{
    hyper.validate()?;
    let mut vocab = BTreeSet::new();
    let mut bigram: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut association: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut seen = 0usize;
    for ex in corpus {
        seen += 1;
        let response = ex.response.segments();
        let mut prev = BOS;
        for w in response {
            vocab.insert(w.clone());
            *bigram
                .entry(prev.to_string())
                .or_default()
                .entry(w.clone())
                .or_insert(0) += 1;
            prev = w;
        }
        for c in ex.context.segments() {
            let row = association.entry(c.clone()).or_default();
            for w in response {
                *row.entry(w.clone()).or_insert(0) += 1;
            }
        }
    }
    if seen == 0 {
        return Err(LergError::EmptyCorpus);
    }
    Ok(NgramModelSpec {
        hyper,
        vocab: vocab.into_iter().collect(),
        bigram,
        association,
    })
}

#[derive(Debug, Default, Clone)]
struct CountTable {
    rows: HashMap<String, (u64, HashMap<String, u64>)>,
}

impl CountTable {
    fn from_spec(src: &BTreeMap<String, BTreeMap<String, u64>>) -> Self {
        let rows = src
            .iter()
            .map(|(k, row)| {
                let total = row.values().sum();
                let row = row.iter().map(|(w, &c)| (w.clone(), c)).collect();
                (k.clone(), (total, row))
            })
            .collect();
        Self { rows }
    }

    fn total(&self, key: &str) -> u64 {
        self.rows.get(key).map_or(0, |r| r.0)
    }

    fn count(&self, key: &str, w: &str) -> u64 {
        self.rows
            .get(key)
            .and_then(|r| r.1.get(w))
            .copied()
            .unwrap_or(0)
    }
}

/// Scorer built from an [`NgramModelSpec`].
#[derive(Debug, Clone)]
pub struct NgramModel {
    spec: NgramModelSpec,
    vocab: BTreeSet<String>,
    bigram: CountTable,
    association: CountTable,
    manifest: Manifest,
}

impl NgramModel {
    pub fn new(spec: NgramModelSpec) -> Result<Self> {
        spec.hyper.validate()?;
        let vocab: BTreeSet<String> = spec.vocab.iter().cloned().collect();
        if vocab.contains(UNK) {
            return Err(LergError::Validation(format!("vocabulary must not contain {UNK}")));
        }
        Ok(Self {
            bigram: CountTable::from_spec(&spec.bigram),
            association: CountTable::from_spec(&spec.association),
            manifest: Manifest {
                kind: ModelKind::Ngram,
                normalized: true,
                vocabulary: format!("closed, {} types plus {UNK}", vocab.len()),
                max_batch: 1024,
            },
            vocab,
            spec,
        })
    }

    pub fn spec(&self) -> &NgramModelSpec {
        &self.spec
    }

    /// Vocabulary size including the `<unk>` bucket.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len() + 1
    }

    /// Prediction vocabulary in index order; `<unk>` comes last.
    pub fn prediction_vocab(&self) -> Vec<String> {
        let mut v: Vec<String> = self.vocab.iter().cloned().collect();
        v.push(UNK.to_string());
        v
    }

    fn map_token<'a>(&self, w: &'a str) -> &'a str {
        if w == BOS || self.vocab.contains(w) {
            w
        } else {
            UNK
        }
    }

    /// `P(w | context, prev)` with `w` and `prev` mapped into the vocabulary.
    pub fn prob(&self, context: &[String], prev: &str, w: &str) -> f64 {
        let v = self.vocab_size() as f64;
        let k = self.spec.hyper.k;
        let lambda = self.spec.hyper.lambda;
        let w = self.map_token(w);
        let prev = self.map_token(prev);

        let p_bigram = (self.bigram.count(prev, w) as f64 + k) / (self.bigram.total(prev) as f64 + k * v);

        let mut hits = 0u64;
        let mut total = 0u64;
        for c in context {
            hits += self.association.count(c, w);
            total += self.association.total(c);
        }
        let p_assoc = (hits as f64 + k) / (total as f64 + k * v);

        lambda * p_bigram + (1.0 - lambda) * p_assoc
    }

    /// Full next-token distribution in [`NgramModel::prediction_vocab`] order.
    pub fn distribution(&self, context: &[String], prev: &str) -> Vec<f64> {
        self.prediction_vocab()
            .iter()
            .map(|w| self.prob(context, prev, w))
            .collect()
    }
}

impl Generator for NgramModel {
    fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn score(&self, context: &[String], response: &[String]) -> Result<StepLogProbs> {
        let mut prev = BOS;
        let mut out = Vec::with_capacity(response.len());
        for w in response {
            out.push(self.prob(context, prev, w).ln());
            prev = w;
        }
        Ok(StepLogProbs(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(text: &str) -> Vec<String> {
        text.split_whitespace().map(String::from).collect()
    }

    fn three_dialogues() -> Vec<Example> {
        vec![
            Example::parse("d1", "hello there", "hi friend").unwrap(),
            Example::parse("d2", "how are you", "i am fine").unwrap(),
            Example::parse("d3", "hello friend", "hi there friend").unwrap(),
        ]
    }

    #[test]
    fn single_example_bigram_count() {
        let ex = Example::parse("x", "hello there", "hi friend").unwrap();
        let spec = train_ngram([&ex], NgramHyperParams::default()).unwrap();
        assert_eq!(spec.bigram_count("hi", "friend"), 1);
        assert_eq!(spec.bigram_count(BOS, "hi"), 1);
        assert_eq!(spec.bigram_count("friend", "hi"), 0);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let none: Vec<Example> = vec![];
        assert!(matches!(
            train_ngram(&none, NgramHyperParams::default()),
            Err(LergError::EmptyCorpus)
        ));
    }

    #[test]
    fn association_row_matches_hand_count() {
        // "hello" occurs in d1 (response: hi friend) and d3 (hi there friend).
        let spec = train_ngram(&three_dialogues(), NgramHyperParams::default()).unwrap();
        let row = &spec.association["hello"];
        let expected: BTreeMap<String, u64> =
            [("friend", 2), ("hi", 2), ("there", 1)].iter().map(|(w, c)| (w.to_string(), *c)).collect();
        assert_eq!(row, &expected);
        assert_eq!(spec.association["you"].values().sum::<u64>(), 3);
    }

    #[test]
    fn two_token_response_matches_hand_computation() {
        // Vocab {am, fine, friend, hi, i, there} + <unk>: V = 7, k = 0.5, lambda = 0.5.
        // Step 1, "hi" after <s>: bigram (2 + .5) / (3 + 3.5) = 5/13.
        //   Context {hello, there}: A(hello, hi) = 2, A(there, hi) = 1; totals 5 + 2.
        //   assoc = (3 + .5) / (7 + 3.5) = 1/3.
        // Step 2, "friend" after "hi": bigram (1 + .5) / (2 + 3.5) = 3/11.
        //   assoc = (A(hello,friend) 2 + A(there,friend) 1 + .5) / 10.5 = 1/3.
        let model = NgramModel::new(train_ngram(&three_dialogues(), NgramHyperParams::default()).unwrap()).unwrap();
        let got = model.score(&s("hello there"), &s("hi friend")).unwrap();
        let step1 = (0.5f64 * 5.0 / 13.0 + 0.5 / 3.0).ln();
        let step2 = (0.5f64 * 3.0 / 11.0 + 0.5 / 3.0).ln();
        assert!((got.0[0] - step1).abs() < 1e-14, "{} vs {step1}", got.0[0]);
        assert!((got.0[1] - step2).abs() < 1e-14, "{} vs {step2}", got.0[1]);
    }

    #[test]
    fn empty_context_is_uniform_association() {
        let model = NgramModel::new(train_ngram(&three_dialogues(), NgramHyperParams::default()).unwrap()).unwrap();
        let got = model.score(&[], &s("hi")).unwrap();
        let expected = (0.5f64 * 5.0 / 13.0 + 0.5 / 7.0).ln();
        assert!((got.0[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn lambda_one_ignores_the_context() {
        let hyper = NgramHyperParams { k: 0.5, lambda: 1.0 };
        let model = NgramModel::new(train_ngram(&three_dialogues(), hyper).unwrap()).unwrap();
        let a = model.score(&s("hello there"), &s("hi friend")).unwrap();
        let b = model.score(&[], &s("hi friend")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reload_scores_identically() {
        let spec = train_ngram(&three_dialogues(), NgramHyperParams::default()).unwrap();
        let reloaded = NgramModelSpec::from_json(&spec.to_json().unwrap()).unwrap();
        assert_eq!(spec, reloaded);
        let a = NgramModel::new(spec).unwrap();
        let b = NgramModel::new(reloaded).unwrap();
        let words = ["hello", "there", "hi", "friend", "how", "are", "you", "i", "am", "fine", "zzz"];
        for probe in 0..100usize {
            let ctx: Vec<String> = (0..(probe % 4)).map(|t| words[(probe * 7 + t * 3) % words.len()].to_string()).collect();
            let resp: Vec<String> = (0..1 + probe % 3).map(|t| words[(probe * 5 + t) % words.len()].to_string()).collect();
            assert_eq!(a.score(&ctx, &resp).unwrap(), b.score(&ctx, &resp).unwrap());
        }
    }

    #[test]
    fn invalid_hyperparameters() {
        let ex = three_dialogues();
        assert!(train_ngram(&ex, NgramHyperParams { k: 0.0, lambda: 0.5 }).is_err());
        assert!(train_ngram(&ex, NgramHyperParams { k: 1.0, lambda: 1.5 }).is_err());
    }

    proptest! {
        #[test]
        fn every_step_distribution_sums_to_one(
            ctx_idx in proptest::collection::vec(0usize..11, 0..6),
            prev_idx in 0usize..12,
            k in 0.05f64..2.0,
            lambda in 0.0f64..=1.0,
        ) {
            let words = ["hello", "there", "hi", "friend", "how", "are", "you", "i", "am", "fine", "zzz", BOS];
            let model = NgramModel::new(train_ngram(&three_dialogues(), NgramHyperParams { k, lambda }).unwrap()).unwrap();
            let ctx: Vec<String> = ctx_idx.iter().map(|&i| words[i].to_string()).collect();
            let total: f64 = model.distribution(&ctx, words[prev_idx]).iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
        }
    }
}
