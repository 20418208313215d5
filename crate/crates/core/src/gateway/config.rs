use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::adapter::{Endpoint, ProcessBackend, ProcessEmbedder};
use crate::chunk::ChunkParams;
use crate::embed::{Embedder, ReferenceEmbedder, DEFAULT_DIMS};
use crate::index::{Metric, Scheme, DEFAULT_CLIP_QUANTILE, DEFAULT_K};
use crate::ingest::RefineConfig;
use crate::rag::{
    BuildOptions, ChatConfig, LlmBackend, MockBackend, PromptConfig, DEFAULT_HISTORY_WINDOW,
    DEFAULT_PREAMBLE,
};
use crate::select::{builtin_catalog, load_catalog, ModelSpec, DEFAULT_OVERHEAD_FACTOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderConfig {
    Reference {
        #[serde(default = "default_dims")]
        dims: usize,
    },
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
        dims: usize,
    },
    Tcp {
        addr: String,
        dims: usize,
    },
}

fn default_dims() -> usize {
    DEFAULT_DIMS
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Reference { dims: DEFAULT_DIMS }
    }
}

impl EmbedderConfig {
    pub fn dims(&self) -> usize {
        match self {
            EmbedderConfig::Reference { dims }
            | EmbedderConfig::Command { dims, .. }
            | EmbedderConfig::Tcp { dims, .. } => *dims,
        }
    }

    pub fn build(&self) -> Arc<dyn Embedder> {
        match self {
            EmbedderConfig::Reference { dims } => Arc::new(ReferenceEmbedder::new(*dims)),
            EmbedderConfig::Command { program, args, dims } => Arc::new(ProcessEmbedder::new(
                Endpoint::Command {
                    program: program.clone(),
                    args: args.clone(),
                },
                *dims,
            )),
            EmbedderConfig::Tcp { addr, dims } => {
                Arc::new(ProcessEmbedder::new(Endpoint::Tcp { addr: addr.clone() }, *dims))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    #[default]
    Mock,
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
    Tcp {
        addr: String,
    },
}

impl BackendConfig {
    pub fn build(&self) -> Arc<dyn LlmBackend> {
        match self {
            BackendConfig::Mock => Arc::new(MockBackend),
            BackendConfig::Command { program, args } => Arc::new(ProcessBackend::new(Endpoint::Command {
                program: program.clone(),
                args: args.clone(),
            })),
            BackendConfig::Tcp { addr } => Arc::new(ProcessBackend::new(Endpoint::Tcp { addr: addr.clone() })),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    pub scheme: Scheme,
    pub metric: Metric,
    pub clip_quantile: f64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Flat,
            metric: Metric::Cosine,
            clip_quantile: DEFAULT_CLIP_QUANTILE,
        }
    }
}

/// Service settings, read from TOML. Every field has a default, so an empty
/// file is a valid (auth-disabled) configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    pub auth_enabled: bool,
    pub auth_tokens: Vec<String>,
    pub chunk: ChunkParams,
    pub index: IndexConfig,
    pub embedder: EmbedderConfig,
    pub backend: BackendConfig,
    pub backend_timeout_secs: u64,
    /// Absent: the built-in catalog.
    pub catalog_path: Option<PathBuf>,
    pub overhead_factor: f64,
    pub history_window: usize,
    pub k: usize,
    pub preamble: String,
    pub refine: RefineConfig,
    /// Include ingested instruction records as documents on index rebuild.
    pub index_corpus: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("medaide-data"),
            auth_enabled: true,
            auth_tokens: Vec::new(),
            chunk: ChunkParams::default(),
            index: IndexConfig::default(),
            embedder: EmbedderConfig::default(),
            backend: BackendConfig::default(),
            backend_timeout_secs: 120,
            catalog_path: None,
            overhead_factor: DEFAULT_OVERHEAD_FACTOR,
            history_window: DEFAULT_HISTORY_WINDOW,
            k: DEFAULT_K,
            preamble: DEFAULT_PREAMBLE.to_string(),
            refine: RefineConfig::default(),
            index_corpus: true,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, GatewayError> {
        let config: Self = toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml(&text)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        // Relative data dirs resolve against the config file's directory.
        if config.data_dir.is_relative() {
            if let Some(parent) = path.parent() {
                config.data_dir = parent.join(&config.data_dir);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: String| Err(GatewayError::Config(m));
        if self.auth_enabled && self.auth_tokens.iter().all(|t| t.trim().is_empty()) {
            return bad("auth is enabled but no auth_tokens are configured".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.embedder.dims() == 0 {
            return bad("embedder dims must be at least 1".into());
        }
        if self.backend_timeout_secs == 0 {
            return bad("backend_timeout_secs must be at least 1".into());
        }
        if !(self.overhead_factor.is_finite() && self.overhead_factor >= 0.0) {
            return bad(format!("overhead_factor must be non-negative, got {}", self.overhead_factor));
        }
        if !(self.index.clip_quantile > 0.5 && self.index.clip_quantile <= 1.0) {
            return bad(format!("clip_quantile must be in (0.5, 1], got {}", self.index.clip_quantile));
        }
        self.chunk.validate().map_err(|e| GatewayError::Config(e.to_string()))?;
        self.chat_config().prompt.validate().map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn chat_config(&self) -> ChatConfig {
        ChatConfig {
            k: self.k,
            prompt: PromptConfig {
                preamble: self.preamble.clone(),
                history_window: self.history_window,
            },
            timeout: Duration::from_secs(self.backend_timeout_secs),
        }
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            chunk_params: self.chunk,
            scheme: self.index.scheme,
            metric: self.index.metric,
            clip_quantile: self.index.clip_quantile,
        }
    }

    pub fn catalog(&self) -> Result<Vec<ModelSpec>, GatewayError> {
        match &self.catalog_path {
            Some(path) => load_catalog(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display()))),
            None => Ok(builtin_catalog()),
        }
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.data_dir.join("sessions")
    }

    pub fn docs_dir(&self) -> PathBuf {
        self.data_dir.join("docs")
    }

    pub fn index_dir(&self) -> PathBuf {
        self.data_dir.join("index")
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.data_dir.join("corpus").join("records.jsonl")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_needs_tokens_when_auth_on() {
        assert!(matches!(ServiceConfig::from_toml(""), Err(GatewayError::Config(_))));
        let c = ServiceConfig::from_toml("auth_enabled = false").unwrap();
        assert_eq!(c.k, 2);
        assert_eq!(c.chunk, ChunkParams::default());
    }

    #[test]
    fn full_toml() {
        let c = ServiceConfig::from_toml(
            r#"
listen = "127.0.0.1:0"
data_dir = "/tmp/x"
auth_tokens = ["secret"]
k = 3
history_window = 2

[chunk]
size_chars = 200
overlap_chars = 20

[index]
scheme = "q8"

[embedder]
kind = "reference"
dims = 64

[backend]
kind = "command"
program = "runner"
args = ["--model", "m.gguf"]
"#,
        )
        .unwrap();
        assert_eq!(c.index.scheme, Scheme::Q8);
        assert_eq!(c.embedder.dims(), 64);
        assert_eq!(
            c.backend,
            BackendConfig::Command {
                program: "runner".into(),
                args: vec!["--model".into(), "m.gguf".into()]
            }
        );
        assert_eq!(c.chat_config().prompt.history_window, 2);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ServiceConfig::from_toml("auth_enabled = false\nlisten_port = 1").is_err());
        assert!(ServiceConfig::from_toml("auth_enabled = false\nk = 0").is_err());
        assert!(ServiceConfig::from_toml("auth_enabled = false\n[chunk]\nsize_chars = 10\noverlap_chars = 10").is_err());
    }
}
