//! Seeded instance generators for tests, oracle checks and demos.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::mask::Mask;
use crate::models::{train_ngram, AdditiveToy, AdditiveToySpec, NgramHyperParams, NgramModel, TableModel};
use crate::rng::{seeded_rng, SeededRng};
use crate::text::{Example, SegmentedText};

const TOPICS: usize = 8;
const KEYWORDS: usize = 3;
const CONTEXT_FILLERS: usize = 16;
const RESPONSE_FILLERS: usize = 10;

fn context_keyword(topic: usize, k: usize) -> String {
    format!("cue{topic}{}", (b'a' + k as u8) as char)
}

fn response_keyword(topic: usize, k: usize) -> String {
    format!("ans{topic}{}", (b'a' + k as u8) as char)
}

fn context_filler(k: usize) -> String {
    format!("ctx{k}")
}

fn response_filler(k: usize) -> String {
    format!("say{k}")
}

/// One dialogue turn from the keyword-association generator. Context
/// length is uniform on `m_range`.
fn keyword_example(rng: &mut SeededRng, id: String, m_range: (usize, usize), n_range: (usize, usize)) -> Example {
    let topic = rng.gen_range(0..TOPICS);
    let m = rng.gen_range(m_range.0..=m_range.1);
    let cues = rng.gen_range(1..=2.min(m));
    let mut context: Vec<String> = (0..cues).map(|_| context_keyword(topic, rng.gen_range(0..KEYWORDS))).collect();
    while context.len() < m {
        context.push(context_filler(rng.gen_range(0..CONTEXT_FILLERS)));
    }
    context.shuffle(rng);
    let n = rng.gen_range(n_range.0..=n_range.1);
    let response: Vec<String> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.6) {
                response_keyword(topic, rng.gen_range(0..KEYWORDS))
            } else {
                response_filler(rng.gen_range(0..RESPONSE_FILLERS))
            }
        })
        .collect();
    Example::new(
        id,
        SegmentedText::from_segments(&context).expect("non-empty"),
        SegmentedText::from_segments(&response).expect("non-empty"),
    )
}

/// A corpus in which each response is driven by one or two topic cue
/// words hidden among filler words. Context lengths lie in `4..=10`.
pub fn keyword_corpus(seed: u64, size: usize) -> Vec<Example> {
    let mut rng = seeded_rng(seed);
    (0..size)
        .map(|k| keyword_example(&mut rng, format!("ex{k:04}"), (4, 10), (2, 5)))
        .collect()
}

/// An n-gram model trained on a 600-turn keyword corpus.
pub fn keyword_ngram(seed: u64) -> Result<NgramModel> {
    let train = keyword_corpus(seed ^ 0x5e_ed0f_7a11, 600);
    NgramModel::new(train_ngram(&train, NgramHyperParams::default())?)
}

/// An n-gram model plus one held-out example with `m` context segments
/// and `n` response segments.
pub fn ngram_instance(model_seed: u64, seed: u64, m: usize, n: usize) -> Result<(NgramModel, Example)> {
    let model = keyword_ngram(model_seed)?;
    let mut rng = seeded_rng(seed);
    let ex = keyword_example(&mut rng, format!("inst{seed}"), (m, m), (n, n));
    Ok((model, ex))
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn example_over(context: &[String], n: usize) -> Example {
    Example::new(
        "synthetic",
        SegmentedText::from_segments(context).expect("non-empty"),
        SegmentedText::from_segments(&numbered("y", n)).expect("non-empty"),
    )
}

/// Random normalized additive toy with `W` in `[-2, 0)` and `b` in `[-1, 0)`.
pub fn additive_instance(seed: u64, m: usize, n: usize) -> Result<(AdditiveToy, Example)> {
    let mut rng = seeded_rng(seed);
    let context = numbered("x", m);
    let base = (0..n).map(|_| -rng.gen_range(0.0..1.0) - 1e-3).collect();
    let weights = (0..m)
        .map(|_| (0..n).map(|_| -rng.gen_range(0.0..2.0)).collect())
        .collect();
    let toy = AdditiveToy::new(AdditiveToySpec {
        context: context.clone(),
        base,
        weights,
    })?;
    Ok((toy, example_over(&context, n)))
}

/// Random table with scores in `[-3, -0.05]`.
fn random_table(rng: &mut SeededRng, m: usize, n: usize) -> Vec<Vec<f64>> {
    (0..1usize << m)
        .map(|_| (0..n).map(|_| -rng.gen_range(0.05..3.0)).collect())
        .collect()
}

/// Shifts column `j` down so every entry stays at or below -0.01. Marginal
/// differences within the column are unchanged.
fn keep_normalized(table: &mut [Vec<f64>], j: usize) {
    let top = table.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
    if top > -0.01 {
        for row in table.iter_mut() {
            row[j] -= top + 0.01;
        }
    }
}

/// A table instance whose step `j` gains strictly more than step `j2`
/// from segment `i` in every coalition.
#[derive(Debug, Clone)]
pub struct StepDominance {
    pub model: TableModel,
    pub example: Example,
    pub i: usize,
    pub j: usize,
    pub j2: usize,
}

/// A table instance where segment `i` beats segment `i2` at step `j` in
/// every coalition that contains neither.
#[derive(Debug, Clone)]
pub struct CauseDominance {
    pub model: TableModel,
    pub example: Example,
    pub i: usize,
    pub i2: usize,
    pub j: usize,
}

fn bit(m: usize, i: usize) -> usize {
    1 << (m - 1 - i)
}

pub fn step_dominance_instance(seed: u64) -> Result<StepDominance> {
    let mut rng = seeded_rng(seed);
    let m = rng.gen_range(3..=8);
    let n = rng.gen_range(2..=4);
    let mut table = random_table(&mut rng, m, n);
    let i = rng.gen_range(0..m);
    let j = rng.gen_range(0..n);
    let j2 = (j + rng.gen_range(1..n)) % n;
    let b = bit(m, i);
    for code in (0..1usize << m).filter(|c| c & b == 0) {
        let other_gain = table[code | b][j2] - table[code][j2];
        table[code | b][j] = table[code][j] + other_gain + rng.gen_range(0.05..1.0);
    }
    keep_normalized(&mut table, j);
    let context = numbered("x", m);
    Ok(StepDominance {
        model: TableModel::new(context.clone(), table)?,
        example: example_over(&context, n),
        i,
        j,
        j2,
    })
}

pub fn cause_dominance_instance(seed: u64) -> Result<CauseDominance> {
    let mut rng = seeded_rng(seed);
    let m = rng.gen_range(3..=8);
    let n = rng.gen_range(1..=3);
    let mut table = random_table(&mut rng, m, n);
    let i = rng.gen_range(0..m);
    let i2 = (i + rng.gen_range(1..m)) % m;
    let j = rng.gen_range(0..n);
    let (b, b2) = (bit(m, i), bit(m, i2));
    for code in (0..1usize << m).filter(|c| c & (b | b2) == 0) {
        table[code | b][j] = table[code | b2][j] + rng.gen_range(0.05..1.0);
    }
    keep_normalized(&mut table, j);
    let context = numbered("x", m);
    Ok(CauseDominance {
        model: TableModel::new(context.clone(), table)?,
        example: example_over(&context, n),
        i,
        i2,
        j,
    })
}

impl StepDominance {
    /// Checks the premise over every coalition without `i`.
    pub fn premise_holds(&self) -> bool {
        let m = self.example.context_len();
        (0..1u64 << m)
            .map(|c| Mask::from_code(m, c))
            .filter(|z| !z.get(self.i))
            .all(|z| {
                let (with, without) = (self.model.row(&z.with(self.i, true)), self.model.row(&z));
                with[self.j] - without[self.j] > with[self.j2] - without[self.j2]
            })
    }
}

impl CauseDominance {
    /// Checks the premise over every coalition without `i` and `i2`.
    pub fn premise_holds(&self) -> bool {
        let m = self.example.context_len();
        (0..1u64 << m)
            .map(|c| Mask::from_code(m, c))
            .filter(|z| !z.get(self.i) && !z.get(self.i2))
            .all(|z| self.model.row(&z.with(self.i, true))[self.j] > self.model.row(&z.with(self.i2, true))[self.j])
    }
}
