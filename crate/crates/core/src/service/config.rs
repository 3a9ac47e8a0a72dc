use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::BackendSelector;
use crate::engine::EngineConfig;
use crate::knowledge::{FactStore, KnowledgeError};

pub const STORAGE_ROOT_ENV: &str = "LAYERCOT_STORAGE_ROOT";
pub const DEFAULT_STORAGE_ROOT: &str = "layercot-sessions";
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

/// Settings file, TOML:
///
/// ```toml
/// [server]
/// addr = "127.0.0.1:8080"
/// storage_root = "/var/lib/layercot"
///
/// [engine]
/// max_layers = 4
/// max_refinements = 2
/// verification_mode = "hybrid"
///
/// [backend]
/// kind = "http"
/// base_url = "https://api.openai.com/v1"
/// model_name = "gpt-4o-mini"
/// auth_token_env = "OPENAI_API_KEY"
///
/// [knowledge]
/// facts = "facts/domain.facts"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub server: ServerSection,
    pub engine: EngineConfig,
    pub backend: Option<BackendSelector>,
    pub knowledge: KnowledgeSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub addr: Option<SocketAddr>,
    pub storage_root: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeSection {
    /// Fact file used to verify sessions that are not scripted scenarios.
    pub facts: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("fact file: {0}")]
    Facts(#[from] KnowledgeError),
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.engine_config().validate().map_err(ConfigError::Invalid)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// `[engine]` with `[backend]` applied.
    pub fn engine_config(&self) -> EngineConfig {
        let mut engine = self.engine.clone();
        if let Some(backend) = &self.backend {
            engine.backend = backend.clone();
        }
        engine
    }

    /// The configured fact store, empty when none is set.
    pub fn fact_store(&self) -> Result<FactStore, ConfigError> {
        match &self.knowledge.facts {
            Some(path) => Ok(FactStore::load(path)?),
            None => Ok(FactStore::default()),
        }
    }

    /// `flag` (which may come from the environment), then the file, then
    /// the built-in default.
    pub fn storage_root(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.or_else(|| self.server.storage_root.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_STORAGE_ROOT))
    }

    pub fn addr(&self, flag: Option<SocketAddr>) -> SocketAddr {
        flag.or(self.server.addr)
            .unwrap_or_else(|| DEFAULT_ADDR.parse().expect("valid default address"))
    }
}
