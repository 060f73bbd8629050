use std::path::{Path, PathBuf};

use imprag::retrieval::RetrievalConfig;
use imprag::simulation::SimulationConfig;
use imprag::transport::EndpointConfig;
use imprag::vecindex::DEFAULT_DIMENSION;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingConfig {
    /// Built-in feature-hashing embedder.
    Fallback {
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
    External {
        url: String,
        dimension: usize,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_retries")]
        retries: u32,
    },
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::Fallback {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum VlmConfig {
    /// Answers replayed from the fixture file.
    #[default]
    Fixture,
    External {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_retries")]
        retries: u32,
    },
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}

fn default_timeout_ms() -> u64 {
    EndpointConfig::new("http://unused").timeout_ms
}

fn default_retries() -> u32 {
    EndpointConfig::new("http://unused").retries
}

fn default_schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_min_accuracy() -> f64 {
    13.0 / 14.0
}

/// Everything a command needs. Relative paths are resolved against the
/// directory of the config file at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub impedance_db: PathBuf,
    pub gripper_db: PathBuf,
    pub decision_tree: PathBuf,
    pub fixtures: PathBuf,
    pub chain_right: PathBuf,
    pub chain_left: PathBuf,
    pub heightfield: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub vlm: VlmConfig,
    /// `eval-retrieval` exits 0 iff accuracy is at least this.
    #[serde(default = "default_min_accuracy")]
    pub min_accuracy: f64,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
}

impl RunConfig {
    pub fn from_json_str(text: &str, origin: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            CliError::Load(format!("parse error at {origin}:{}:{}: {e}", e.line(), e.column()))
        })?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(CliError::Load(format!(
                "{origin}: unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        for p in cfg.paths_mut() {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Load(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json_str(&text, &path.display().to_string(), base)
    }

    fn paths_mut(&mut self) -> [&mut PathBuf; 8] {
        [
            &mut self.impedance_db,
            &mut self.gripper_db,
            &mut self.decision_tree,
            &mut self.fixtures,
            &mut self.chain_right,
            &mut self.chain_left,
            &mut self.heightfield,
            &mut self.output_dir,
        ]
    }

    /// Checks values and that every input file exists.
    pub fn validate(&self) -> Result<(), CliError> {
        self.simulation
            .validate()
            .map_err(|e| CliError::Load(e.to_string()))?;
        if !(self.min_accuracy.is_finite() && (0.0..=1.0).contains(&self.min_accuracy)) {
            return Err(CliError::Load(format!(
                "min_accuracy must lie in [0, 1], got {}",
                self.min_accuracy
            )));
        }
        let inputs = [
            ("impedance_db", &self.impedance_db),
            ("gripper_db", &self.gripper_db),
            ("decision_tree", &self.decision_tree),
            ("fixtures", &self.fixtures),
            ("chain_right", &self.chain_right),
            ("chain_left", &self.chain_left),
            ("heightfield", &self.heightfield),
        ];
        for (name, p) in inputs {
            if !p.is_file() {
                return Err(CliError::Load(format!("{name}: file not found: {}", p.display())));
            }
        }
        if let Some(ep) = self.embedding_endpoint() {
            ep.validate().map_err(|e| CliError::Load(format!("embedding: {e}")))?;
        }
        if let Some(ep) = self.vlm_endpoint() {
            ep.validate().map_err(|e| CliError::Load(format!("vlm: {e}")))?;
        }
        if let EmbeddingConfig::Fallback { dimension: 0 } | EmbeddingConfig::External { dimension: 0, .. } = self.embedding {
            return Err(CliError::Load("embedding dimension must be positive".into()));
        }
        Ok(())
    }

    pub fn embedding_endpoint(&self) -> Option<EndpointConfig> {
        match &self.embedding {
            EmbeddingConfig::Fallback { .. } => None,
            EmbeddingConfig::External {
                url,
                timeout_ms,
                retries,
                ..
            } => Some(EndpointConfig {
                url: url.clone(),
                timeout_ms: *timeout_ms,
                retries: *retries,
            }),
        }
    }

    pub fn vlm_endpoint(&self) -> Option<EndpointConfig> {
        match &self.vlm {
            VlmConfig::Fixture => None,
            VlmConfig::External {
                url,
                timeout_ms,
                retries,
            } => Some(EndpointConfig {
                url: url.clone(),
                timeout_ms: *timeout_ms,
                retries: *retries,
            }),
        }
    }

    /// SHA-256 over the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
