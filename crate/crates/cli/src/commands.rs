//! Subcommand bodies. Work runs in parallel; every file goes through one
//! [`ArtifactWriter`] thread.

use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread::JoinHandle;

use lerg_core::checks::{run_oracle_checks, OracleReport, SuiteSize};
use lerg_core::eval::{sweep, CorpusReport, MetricKind, SweepConfig};
use lerg_core::explain::explain;
use lerg_core::models::{train_ngram, NgramHyperParams};
use lerg_core::rng::derive_seed;
use lerg_core::{Example, ExplanationMatrix, LergError, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::ingest::{ingest_jsonl, Corpus, LineError};
use crate::model::build_model;
use crate::report::{aggregate_csv, eval_csv, heatmap_svg, line_plot_svg, matrix_csv, Stamp};

/// Owns the output directory. Files are written in the order they are
/// submitted.
pub struct ArtifactWriter {
    tx: Option<mpsc::Sender<(PathBuf, Vec<u8>)>>,
    handle: Option<JoinHandle<std::io::Result<Vec<PathBuf>>>>,
    dir: PathBuf,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let (tx, rx) = mpsc::channel::<(PathBuf, Vec<u8>)>();
        let handle = std::thread::spawn(move || {
            let mut written = Vec::new();
            for (path, bytes) in rx {
                std::fs::write(&path, bytes)?;
                written.push(path);
            }
            Ok(written)
        });
        Ok(Self {
            tx: Some(tx),
            handle: Some(handle),
            dir: dir.to_path_buf(),
        })
    }

    pub fn sender(&self) -> ArtifactSink {
        ArtifactSink {
            tx: self.tx.clone().expect("writer is open"),
            dir: self.dir.clone(),
        }
    }

    /// Waits for pending writes and returns the written paths.
    pub fn finish(mut self) -> Result<Vec<PathBuf>> {
        self.tx.take();
        match self.handle.take().expect("writer joined once").join() {
            Ok(r) => Ok(r?),
            Err(_) => Err(LergError::Io(std::io::Error::other("artifact writer panicked"))),
        }
    }
}

impl Drop for ArtifactWriter {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[derive(Clone)]
pub struct ArtifactSink {
    tx: mpsc::Sender<(PathBuf, Vec<u8>)>,
    dir: PathBuf,
}

impl ArtifactSink {
    pub fn put(&self, name: &str, bytes: impl Into<Vec<u8>>) -> Result<()> {
        self.tx
            .send((self.dir.join(name), bytes.into()))
            .map_err(|_| LergError::Io(std::io::Error::other("artifact writer stopped")))
    }
}

fn json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn load_corpus(config: &RunConfig) -> Result<Corpus> {
    let segmenter = config.segmenter.segmenter();
    ingest_jsonl(&config.input, config.strict, segmenter.as_ref())
}

fn select<'a>(corpus: &'a [Example], ids: &[String]) -> Result<Vec<&'a Example>> {
    if ids.is_empty() {
        return Ok(corpus.iter().collect());
    }
    ids.iter()
        .map(|id| {
            corpus
                .iter()
                .find(|e| &e.id == id)
                .ok_or_else(|| LergError::Validation(format!("no example with id `{id}`")))
        })
        .collect()
}

#[derive(Serialize)]
struct ExplainArtifact<'a> {
    config: &'a RunConfig,
    input_sha256: &'a str,
    example: &'a Example,
    explanation: &'a ExplanationMatrix,
}

/// File stem shared by an example's explanation artifacts.
pub fn artifact_stem(id: &str, method: lerg_core::Method) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    format!("{safe}.{}", method.name())
}

/// Explains each selected example with each method. Writes
/// `<id>.<method>.csv`, `.svg` and `.json` plus `run_config.json`.
pub fn cmd_explain(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let corpus = load_corpus(config)?;
    let selected = select(&corpus.examples, &config.ids)?;
    let model = build_model(&config.model, &corpus.examples)?;
    let stamp = Stamp::new(config)?;
    let writer = ArtifactWriter::new(&config.out)?;
    let sink = writer.sender();
    sink.put("run_config.json", json_line(config)?)?;

    let jobs: Vec<(&Example, lerg_core::Method)> = selected
        .iter()
        .flat_map(|ex| config.methods.iter().map(move |&m| (*ex, m)))
        .collect();
    let results: Vec<Result<()>> = jobs
        .par_iter()
        .map_with(sink.clone(), |sink, &(ex, method)| {
            let plan = lerg_core::perturb::PerturbPlan {
                seed: derive_seed(config.seed, &ex.id),
                ..config.plan()
            };
            let e = explain(method, model.as_ref(), ex, &plan).map_err(|err| {
                log::error!("{} / {method}: {err}", ex.id);
                err
            })?;
            let stem = artifact_stem(&ex.id, method);
            sink.put(&format!("{stem}.csv"), matrix_csv(&stamp, ex, &e)?)?;
            sink.put(&format!("{stem}.svg"), heatmap_svg(&stamp, ex, &e))?;
            let artifact = ExplainArtifact {
                config,
                input_sha256: &stamp.input_sha256,
                example: ex,
                explanation: &e,
            };
            sink.put(&format!("{stem}.json"), json_line(&artifact)?)?;
            Ok(())
        })
        .collect();
    drop(sink);
    let written = writer.finish()?;
    results.into_iter().collect::<Result<Vec<()>>>()?;
    Ok(written)
}

#[derive(Serialize)]
struct EvalArtifact<'a> {
    config: &'a RunConfig,
    input_sha256: &'a str,
    skipped_lines: &'a [LineError],
    report: &'a CorpusReport,
}

/// Sweeps every method and the random baseline over the corpus. Writes
/// `eval.csv`, `aggregate.csv`, `report.json`, one line plot per metric
/// and `run_config.json`.
pub fn cmd_eval(config: &RunConfig) -> Result<CorpusReport> {
    config.validate()?;
    let corpus = load_corpus(config)?;
    let selected: Vec<Example> = select(&corpus.examples, &config.ids)?.into_iter().cloned().collect();
    let model = build_model(&config.model, &corpus.examples)?;
    let stamp = Stamp::new(config)?;

    let mut sweep_config = SweepConfig::new(config.methods.clone(), config.seed);
    sweep_config.ratios = config.ratios.clone();
    sweep_config.plan = config.plan();
    sweep_config.random_trials = config.random_trials;
    sweep_config.reduction = config.reduction;
    let report = sweep(model.as_ref(), &selected, &sweep_config)?;

    let writer = ArtifactWriter::new(&config.out)?;
    let sink = writer.sender();
    sink.put("run_config.json", json_line(config)?)?;
    sink.put("eval.csv", eval_csv(&stamp, &report)?)?;
    sink.put("aggregate.csv", aggregate_csv(&stamp, &report)?)?;
    let artifact = EvalArtifact {
        config,
        input_sha256: &stamp.input_sha256,
        skipped_lines: &corpus.skipped,
        report: &report,
    };
    sink.put("report.json", json_line(&artifact)?)?;
    for metric in MetricKind::ALL {
        let curves: Vec<_> = report.aggregates.iter().filter(|a| a.metric == metric).collect();
        sink.put(&format!("{}.svg", metric.name()), line_plot_svg(&stamp, metric, &curves))?;
    }
    drop(sink);
    writer.finish()?;
    Ok(report)
}

/// Runs the oracle suite. Failed checks are report content, not errors.
pub fn cmd_oracle_check(seed: u64, size: SuiteSize, out: Option<&Path>) -> Result<OracleReport> {
    let report = run_oracle_checks(seed, size)?;
    if let Some(dir) = out {
        let writer = ArtifactWriter::new(dir)?;
        writer.sender().put("oracle_report.json", json_line(&report)?)?;
        writer.finish()?;
    }
    Ok(report)
}

/// Trains n-gram counts on a corpus and saves them as JSON.
pub fn cmd_train_ngram(config: &RunConfig, hyper: NgramHyperParams, dest: &Path) -> Result<()> {
    let corpus = load_corpus(config)?;
    let spec = train_ngram(&corpus.examples, hyper)?;
    spec.save(dest)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    json_line(value)
}
