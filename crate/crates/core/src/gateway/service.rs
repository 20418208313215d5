use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::{BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use arc_swap::ArcSwap;
use axum::http::StatusCode;
use serde::{Deserialize, Serialize};

use super::store::{LoadReport, SessionStore};
use super::{ApiError, ErrorCode, GatewayError, ServiceConfig};
use crate::chunk::ChunkParams;
use crate::embed::{EmbedError, Embedder};
use crate::index::{build_flat, IndexError, Metric, Scheme, VectorIndex};
use crate::ingest::{
    load_records, read_jsonl, refine_with, write_jsonl, ConvertOptions, IdentityTranslator,
    InputFormat, InstructionRecord, RefinementReport,
};
use crate::rag::{chat_turn, Citation, GenerateParams, KnowledgeBase, LlmBackend, RagError, Session};
use crate::select::{rank_candidates, HardwareProfile, Mode, ModelSpec, SelectionResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRequest {
    pub query: String,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub temperature: Option<f32>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub response: String,
    pub citations: Vec<Citation>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectRequest {
    pub profile: HardwareProfile,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub overhead_factor: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RebuildRequest {
    pub chunk_params: Option<ChunkParams>,
    pub scheme: Option<Scheme>,
    pub metric: Option<Metric>,
    pub clip_quantile: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RebuildResponse {
    pub count: usize,
    pub dims: usize,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub index_loaded: bool,
    pub backend: String,
}

#[derive(Debug, Clone)]
pub struct IngestRequest {
    pub bytes: Vec<u8>,
    pub format: InputFormat,
    pub options: ConvertOptions,
}

/// Shared service state. Request handlers only ever read `kb` through a
/// cloned snapshot.
pub struct AppState {
    config: ServiceConfig,
    kb: ArcSwap<KnowledgeBase>,
    embedder: Arc<dyn Embedder>,
    backend: Arc<dyn LlmBackend>,
    catalog: Vec<ModelSpec>,
    sessions: SessionStore,
    corpus_writer: Mutex<()>,
    rebuild: Mutex<()>,
}

fn empty_kb(dims: usize, metric: Metric) -> KnowledgeBase {
    let flat = build_flat(dims, Vec::new(), &[] as &[Vec<f32>], metric).expect("empty index is valid");
    KnowledgeBase::new(VectorIndex::Flat(flat), Vec::new())
}

impl AppState {
    /// Validate `config`, prepare the data directory, reload sessions and the
    /// last built index. A missing or unreadable index starts empty.
    pub fn open(config: ServiceConfig) -> Result<(Self, LoadReport), GatewayError> {
        config.validate()?;
        std::fs::create_dir_all(&config.data_dir)?;
        let probe = config.data_dir.join(".write-probe");
        std::fs::write(&probe, b"")
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|e| GatewayError::Config(format!("data_dir {} is not writable: {e}", config.data_dir.display())))?;

        let (sessions, report) = SessionStore::open(&config.sessions_dir())?;
        let embedder = config.embedder.build();
        let backend = config.backend.build();
        let catalog = config.catalog()?;

        let mut kb = empty_kb(embedder.dims(), config.index.metric);
        let index_dir = config.index_dir();
        if index_dir.join(crate::rag::INDEX_FILE).exists() {
            match KnowledgeBase::load_dir(&index_dir) {
                Ok(loaded) if loaded.index().dims() == embedder.dims() => kb = loaded,
                Ok(loaded) => tracing::warn!(
                    index_dims = loaded.index().dims(),
                    embedder_dims = embedder.dims(),
                    "stored index does not match the embedder; starting empty"
                ),
                Err(e) => tracing::warn!(error = %e, "stored index unreadable; starting empty"),
            }
        }

        Ok((
            Self {
                config,
                kb: ArcSwap::from_pointee(kb),
                embedder,
                backend,
                catalog,
                sessions,
                corpus_writer: Mutex::new(()),
                rebuild: Mutex::new(()),
            },
            report,
        ))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn catalog(&self) -> &[ModelSpec] {
        &self.catalog
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.sessions
    }

    pub fn knowledge(&self) -> Arc<KnowledgeBase> {
        self.kb.load_full()
    }

    /// Constant-time comparison against every configured token.
    pub fn token_ok(&self, presented: &str) -> bool {
        let mut ok = false;
        for token in &self.config.auth_tokens {
            if token.is_empty() {
                continue;
            }
            ok |= ct_eq(token.as_bytes(), presented.as_bytes());
        }
        ok
    }

    pub fn health(&self) -> HealthResponse {
        HealthResponse {
            status: "ok".into(),
            index_loaded: !self.kb.load().index().is_empty(),
            backend: self.backend.info().name,
        }
    }

    pub fn create_session(&self) -> Result<Session, ApiError> {
        Ok(self.sessions.create()?)
    }

    pub fn get_session(&self, id: &str) -> Result<Session, ApiError> {
        let handle = self
            .sessions
            .get(id)
            .ok_or_else(|| ApiError::not_found(format!("no session `{id}`")))?;
        let session = handle.lock().unwrap_or_else(|p| p.into_inner()).clone();
        Ok(session)
    }

    /// One grounded turn. Blocks on the backend; run off the async executor.
    pub fn chat(&self, id: &str, request: &ChatRequest) -> Result<ChatResponse, ApiError> {
        if request.query.trim().is_empty() {
            return Err(ApiError::bad_request("query must not be empty"));
        }
        let handle = self
            .sessions
            .get(id)
            .ok_or_else(|| ApiError::not_found(format!("no session `{id}`")))?;
        let defaults = GenerateParams::default();
        let params = GenerateParams {
            max_tokens: request.max_tokens.unwrap_or(defaults.max_tokens),
            temperature: request.temperature.unwrap_or(defaults.temperature),
            seed: request.seed.unwrap_or(defaults.seed),
        };
        if !(params.temperature.is_finite() && params.temperature >= 0.0) {
            return Err(ApiError::bad_request("temperature must be a non-negative number"));
        }
        if params.max_tokens == 0 {
            return Err(ApiError::bad_request("max_tokens must be at least 1"));
        }

        let kb = self.knowledge();
        let mut session = handle.lock().unwrap_or_else(|p| p.into_inner());
        let started = Instant::now();
        let turn = chat_turn(
            &mut session,
            &request.query,
            &kb,
            self.embedder.as_ref(),
            self.backend.clone(),
            &params,
            &self.config.chat_config(),
        )
        .map_err(rag_error)?;
        let latency_ms = started.elapsed().as_millis() as u64;
        if let Err(e) = self.sessions.append_turn(id, &turn) {
            session.turns.pop();
            return Err(ApiError::internal(format!("could not persist turn: {e}")));
        }
        Ok(ChatResponse {
            response: turn.response,
            citations: turn.citations,
            latency_ms,
        })
    }

    pub fn select(&self, request: &SelectRequest) -> Result<SelectionResult, ApiError> {
        let overhead = request.overhead_factor.unwrap_or(self.config.overhead_factor);
        rank_candidates(&request.profile, &self.catalog, request.mode, overhead)
            .map_err(|e| ApiError::bad_request(e.to_string()))
    }

    /// Convert, refine and append records to the corpus file.
    pub fn ingest(&self, request: &IngestRequest) -> Result<RefinementReport, ApiError> {
        let records = load_records(&request.bytes, request.format, &request.options, &IdentityTranslator)
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        let (kept, report) = refine_with(records, &self.config.refine);
        let _guard = self.corpus_writer.lock().unwrap_or_else(|p| p.into_inner());
        append_records(&self.config.corpus_path(), &kept)
            .map_err(|e| ApiError::internal(format!("could not store records: {e}")))?;
        Ok(report)
    }

    /// Rebuild from `data_dir/docs` (plus the ingested corpus when enabled),
    /// persist, then publish the new snapshot in one swap.
    pub fn rebuild(&self, request: &RebuildRequest) -> Result<RebuildResponse, ApiError> {
        let mut options = self.config.build_options();
        if let Some(p) = request.chunk_params {
            p.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
            options.chunk_params = p;
        }
        if let Some(s) = request.scheme {
            options.scheme = s;
        }
        if let Some(m) = request.metric {
            options.metric = m;
        }
        if let Some(q) = request.clip_quantile {
            options.clip_quantile = q;
        }

        let _guard = self.rebuild.lock().unwrap_or_else(|p| p.into_inner());
        let docs = self.collect_documents()?;
        let kb = KnowledgeBase::build(&docs, self.embedder.as_ref(), &options).map_err(rag_error)?;
        let index_dir = self.config.index_dir();
        std::fs::create_dir_all(&index_dir).map_err(|e| ApiError::internal(e.to_string()))?;
        kb.save_dir(&index_dir).map_err(rag_error)?;
        let response = RebuildResponse {
            count: kb.index().len(),
            dims: kb.index().dims(),
            scheme: kb.index().scheme(),
        };
        self.kb.store(Arc::new(kb));
        Ok(response)
    }

    fn collect_documents(&self) -> Result<Vec<(String, String)>, ApiError> {
        let mut docs = Vec::new();
        let docs_dir = self.config.docs_dir();
        if docs_dir.is_dir() {
            docs = KnowledgeBase::read_documents(&docs_dir).map_err(rag_error)?;
        }
        if self.config.index_corpus {
            let path = self.config.corpus_path();
            if path.exists() {
                let _guard = self.corpus_writer.lock().unwrap_or_else(|p| p.into_inner());
                let file = std::fs::File::open(&path).map_err(|e| ApiError::internal(e.to_string()))?;
                let records = read_jsonl(BufReader::new(file)).map_err(|e| ApiError::internal(e.to_string()))?;
                let mut seen = HashSet::new();
                for r in records.into_iter().filter(|r| seen.insert(r.id.clone())) {
                    docs.push((corpus_doc_id(&r), corpus_doc_text(&r)));
                }
            }
        }
        Ok(docs)
    }
}

fn corpus_doc_id(r: &InstructionRecord) -> String {
    format!("corpus/{}/{}", r.source_tag, &r.id[..16])
}

fn corpus_doc_text(r: &InstructionRecord) -> String {
    if r.input.is_empty() {
        format!("{}\n{}", r.instruction, r.output)
    } else {
        format!("{}\n{}\n{}", r.instruction, r.input, r.output)
    }
}

fn append_records(path: &Path, records: &[InstructionRecord]) -> std::io::Result<()> {
    if records.is_empty() {
        return Ok(());
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut buf = Vec::new();
    write_jsonl(records, &mut buf).map_err(std::io::Error::other)?;
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&buf)?;
    f.sync_data()
}

fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

pub(super) fn rag_error(e: RagError) -> ApiError {
    match e {
        RagError::BackendTimeout(_) => ApiError::new(StatusCode::GATEWAY_TIMEOUT, ErrorCode::BackendFailure, e.to_string()),
        RagError::BackendFailure(_) | RagError::Embed(EmbedError::EmbedderFailure(_)) => {
            ApiError::new(StatusCode::BAD_GATEWAY, ErrorCode::BackendFailure, e.to_string())
        }
        RagError::Chunk(_)
        | RagError::InvalidConfig(_)
        | RagError::Index(IndexError::InvalidK | IndexError::InvalidQuantile(_)) => {
            ApiError::bad_request(e.to_string())
        }
        other => ApiError::internal(other.to_string()),
    }
}
