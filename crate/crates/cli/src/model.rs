use lerg_core::models::{
    train_ngram, AdditiveToy, AdditiveToySpec, Generator, NgramModel, NgramModelSpec, RemoteClient, RemoteConfig,
};
use lerg_core::{Example, LergError, Result};

use crate::config::{ModelChoice, ModelSpec};

/// Builds the generator a run will explain. An n-gram model without a
/// saved path is trained on `corpus`.
pub fn build_model(spec: &ModelSpec, corpus: &[Example]) -> Result<Box<dyn Generator>> {
    Ok(match spec.kind {
        ModelChoice::Additive => {
            let path = spec
                .path
                .as_ref()
                .ok_or_else(|| LergError::Validation("additive model needs a path".into()))?;
            let toy: AdditiveToySpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            Box::new(AdditiveToy::new(toy)?)
        }
        ModelChoice::Ngram => {
            let counts = match &spec.path {
                Some(path) => NgramModelSpec::load(path)?,
                None => {
                    log::info!("training n-gram model on {} examples", corpus.len());
                    train_ngram(corpus, spec.ngram)?
                }
            };
            Box::new(NgramModel::new(counts)?)
        }
        ModelChoice::Remote => {
            let config = match (&spec.endpoint, &spec.server_cmd) {
                (Some(url), None) => RemoteConfig::http(url.clone()),
                (None, Some(cmd)) => RemoteConfig::stdio(cmd.clone()),
                _ => {
                    return Err(LergError::Validation(
                        "remote model needs exactly one of endpoint or server command".into(),
                    ))
                }
            };
            Box::new(RemoteClient::connect(&config)?)
        }
    })
}
