//! Application configuration: a JSON file with a strict schema, overridable
//! field by field from CLI flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunk::ChunkingConfig;
use crate::embed::EmbeddingProviderConfig;
use crate::generate::GenProviderConfig;
use crate::hnsw::HnswParams;

/// Default number of retrieved chunks per question.
pub const DEFAULT_K: usize = 4;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub project_name: Option<String>,
    /// Repository locator: local path, file:// path, or git URL.
    pub repo: Option<String>,
    pub revision: Option<String>,
    pub model: Option<String>,
    pub out_dir: PathBuf,
    /// Where remote repositories are materialized.
    pub cache_dir: Option<PathBuf>,
    pub k: usize,
    pub max_context_tokens: usize,
    /// Concurrent in-flight generation requests.
    pub parallelism: usize,
    pub questions_path: Option<PathBuf>,
    pub template_path: Option<PathBuf>,
    pub log_level: Option<String>,
    /// Extra ignore patterns applied on top of the defaults.
    pub ignore: Vec<String>,
    pub chunking: ChunkingConfig,
    pub embedding: EmbeddingProviderConfig,
    pub generation: GenProviderConfig,
    pub hnsw: HnswParams,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            project_name: None,
            repo: None,
            revision: None,
            model: None,
            out_dir: PathBuf::from("out"),
            cache_dir: None,
            k: DEFAULT_K,
            max_context_tokens: crate::prompt::DEFAULT_MAX_CONTEXT_TOKENS,
            parallelism: 2,
            questions_path: None,
            template_path: None,
            log_level: None,
            ignore: Vec::new(),
            chunking: ChunkingConfig::default(),
            embedding: EmbeddingProviderConfig::default(),
            generation: GenProviderConfig::default(),
            hnsw: HnswParams::default(),
        }
    }
}

impl AppConfig {
    /// Load a config file. Unknown keys are rejected with their location.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: AppConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.to_path_buf(),
                source,
            })?;
        cfg.sync_model();
        Ok(cfg)
    }

    /// Keep the top-level model selection and the generation provider in step.
    pub fn sync_model(&mut self) {
        if let Some(model) = &self.model {
            self.generation.model_name = model.clone();
        } else if !self.generation.model_name.is_empty() {
            self.model = Some(self.generation.model_name.clone());
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::Invalid("k must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid(
                "parallelism must be at least 1".into(),
            ));
        }
        self.chunking
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.embedding
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.generation
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.hnsw
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.hnsw.ef_search < self.k {
            return Err(ConfigError::Invalid(format!(
                "ef_search {} must be at least k {}",
                self.hnsw.ef_search, self.k
            )));
        }
        Ok(())
    }

    /// Cache directory for acquired repositories, under out_dir by default.
    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join("cache"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_pipeline_contract() {
        let cfg = AppConfig::default();
        assert_eq!(cfg.chunking.chunk_size, 1000);
        assert_eq!(cfg.embedding.dim, 768);
        assert_eq!(cfg.k, 4);
        assert!((cfg.generation.temperature - 0.2).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_rejected_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, "{\n  \"bogus_key\": 1\n}").unwrap();
        let err = AppConfig::load(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus_key"), "{msg}");
        match err {
            ConfigError::Parse { source, .. } => {
                assert!(source.line() > 0);
                assert!(source.column() > 0);
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn model_syncs_into_generation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, r#"{"model": "gpt-4"}"#).unwrap();
        let cfg = AppConfig::load(&path).unwrap();
        assert_eq!(cfg.generation.model_name, "gpt-4");
    }

    #[test]
    fn validation_catches_bad_k() {
        let cfg = AppConfig {
            k: 0,
            ..AppConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn validation_requires_ef_search_at_least_k() {
        let cfg = AppConfig {
            k: 100,
            ..AppConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
