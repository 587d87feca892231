//! The `--config run.json` document. Every leaf is optional; effective
//! values resolve as CLI flag > config file > built-in default.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<DatasetSection>,
    pub sampler: Option<SamplerSection>,
    pub selection: Option<SelectionSection>,
    pub enhancement: Option<EnhancementSection>,
    pub training: Option<TrainingSection>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub fanout: Option<usize>,
    pub top_k: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    pub method: Option<String>,
    pub budget: Option<usize>,
    pub percentile: Option<f64>,
    pub alpha: Option<f64>,
    pub direction: Option<String>,
    pub damping: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_iter: Option<usize>,
    pub kmeans_seed: Option<u64>,
    pub kmeans_max_iter: Option<usize>,
    pub stopwords: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnhancementSection {
    pub p: Option<f64>,
    pub catalog: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub timeout_secs: Option<u64>,
    pub max_inflight: Option<usize>,
    pub max_calls: Option<u64>,
    pub enhance_query_nodes: Option<bool>,
    pub embed_model: Option<String>,
    pub embed_dim: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub num_layers: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub optimizer: Option<String>,
    pub dropout_rate: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let raw = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&raw)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    pub fn sampler(&self) -> SamplerSection {
        self.sampler.clone().unwrap_or_default()
    }

    pub fn selection(&self) -> SelectionSection {
        self.selection.clone().unwrap_or_default()
    }

    pub fn enhancement(&self) -> EnhancementSection {
        self.enhancement.clone().unwrap_or_default()
    }

    pub fn training(&self) -> TrainingSection {
        self.training.clone().unwrap_or_default()
    }

    pub fn dataset_dir(&self) -> Option<PathBuf> {
        self.dataset.as_ref().and_then(|d| d.dir.clone())
    }
}

/// CLI flag > config file > built-in default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Like [`pick`] without a default.
pub fn pick_opt<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}
