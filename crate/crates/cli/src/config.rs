//! Run configuration, serialized into every artifact.

use std::path::{Path, PathBuf};

use lerg_core::eval::{validate_ratios, DEFAULT_RATIOS};
use lerg_core::models::NgramHyperParams;
use lerg_core::perturb::{PerturbPlan, DEFAULT_MAX_MASKED_RATIO, DEFAULT_SAMPLES};
use lerg_core::text::{CharSegmenter, Segmenter, WhitespaceSegmenter};
use lerg_core::{LergError, Method, PerturbMode, Reduction, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Additive,
    Ngram,
    Remote,
}

impl std::str::FromStr for ModelChoice {
    type Err = LergError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(ModelChoice::Additive),
            "ngram" => Ok(ModelChoice::Ngram),
            "remote" => Ok(ModelChoice::Remote),
            _ => Err(LergError::Validation(format!("unknown model kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelChoice,
    /// Saved model: an additive-toy spec or n-gram counts (JSON).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server_cmd: Option<String>,
    /// Used when an n-gram model is trained on the input corpus.
    #[serde(default)]
    pub ngram: NgramHyperParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmenterChoice {
    #[default]
    Whitespace,
    Char,
}

impl SegmenterChoice {
    pub fn segmenter(self) -> Box<dyn Segmenter> {
        match self {
            SegmenterChoice::Whitespace => Box::new(WhitespaceSegmenter),
            SegmenterChoice::Char => Box::new(CharSegmenter),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelSpec,
    /// JSONL corpus of `{"id", "context", "response"}` lines.
    pub input: PathBuf,
    /// Example ids to explain; empty selects every example.
    #[serde(default)]
    pub ids: Vec<String>,
    pub methods: Vec<Method>,
    pub samples: usize,
    pub max_mask_ratio: f64,
    pub ratios: Vec<f64>,
    pub seed: u64,
    pub out: PathBuf,
    #[serde(default)]
    pub segmenter: SegmenterChoice,
    pub strict: bool,
    pub random_trials: usize,
    #[serde(default)]
    pub reduction: Reduction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_width: Option<f64>,
    #[serde(default)]
    pub mode: PerturbMode,
}

impl RunConfig {
    pub fn new(model: ModelSpec, input: PathBuf, out: PathBuf) -> Self {
        Self {
            model,
            input,
            ids: Vec::new(),
            methods: vec![Method::LergS],
            samples: DEFAULT_SAMPLES,
            max_mask_ratio: DEFAULT_MAX_MASKED_RATIO,
            ratios: DEFAULT_RATIOS.to_vec(),
            seed: 0,
            out,
            segmenter: SegmenterChoice::Whitespace,
            strict: true,
            random_trials: 10,
            reduction: Reduction::SumOverJ,
            kernel_width: None,
            mode: PerturbMode::Delete,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Single-line form for artifact stamps.
    pub fn to_compact_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn plan(&self) -> PerturbPlan {
        PerturbPlan {
            samples: self.samples,
            max_masked_ratio: self.max_mask_ratio,
            seed: self.seed,
            kernel_width: self.kernel_width,
            mode: self.mode.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.plan().validate()?;
        validate_ratios(&self.ratios)?;
        if self.methods.is_empty() {
            return Err(LergError::Validation("at least one --method is required".into()));
        }
        match self.model.kind {
            ModelChoice::Additive if self.model.path.is_none() => Err(LergError::Validation(
                "--model additive needs --model-path pointing at a toy spec".into(),
            )),
            ModelChoice::Remote if self.model.endpoint.is_some() == self.model.server_cmd.is_some() => Err(
                LergError::Validation("--model remote needs exactly one of --endpoint or --server-cmd".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// sha256 over the corpus and any model file, in that order.
pub fn input_hash(config: &RunConfig) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(std::fs::read(&config.input)?);
    if let Some(path) = &config.model.path {
        hasher.update(std::fs::read(path)?);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
