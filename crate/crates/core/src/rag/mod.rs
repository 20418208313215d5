//! Retrieval-grounded chat: embed the query, pull the nearest chunks, render
//! them into the prompt, generate, and record the turn with its citations.

mod backend;
mod knowledge;
mod prompt;
mod session;

use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use thiserror::Error;

pub use backend::{mock_generate, BackendInfo, GenerateParams, LlmBackend, MockBackend};
pub use knowledge::{
    chunks_path_for, read_chunks, write_chunks, BuildOptions, KnowledgeBase, CHUNKS_FILE, INDEX_FILE,
};
pub use prompt::{
    assemble_prompt, parse_prompt, ContextBlock, HistoryEntry, ParsedPrompt, PromptBundle,
    PromptConfig, CONTEXT_HEADER, DEFAULT_HISTORY_WINDOW, DEFAULT_PREAMBLE, HISTORY_HEADER,
    INSTRUCTION_HEADER, RESPONSE_HEADER,
};
pub use session::{ChatTurn, Citation, Session};

use crate::chunk::{Chunk, ChunkError};
use crate::embed::{EmbedError, Embedder};
use crate::index::{IndexError, DEFAULT_K};

pub const DEFAULT_BACKEND_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Error)]
pub enum RagError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error("index returned chunk id `{0}` missing from the chunk store")]
    UnknownChunkId(String),
    #[error("malformed prompt: {0}")]
    MalformedPrompt(String),
    #[error("backend failure: {0}")]
    BackendFailure(String),
    #[error("backend did not answer within {0:?}")]
    BackendTimeout(Duration),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Embed `query`, search, and resolve hits to chunks in rank order.
pub fn retrieve_context(
    query: &str,
    kb: &KnowledgeBase,
    embedder: &dyn Embedder,
    k: usize,
) -> Result<Vec<(Chunk, f64)>, RagError> {
    let index = kb.index();
    if index.is_empty() {
        return Ok(Vec::new());
    }
    if embedder.dims() != index.dims() {
        return Err(IndexError::DimMismatch {
            expected: index.dims(),
            actual: embedder.dims(),
        }
        .into());
    }
    let q = embedder.embed(query)?;
    index
        .search(&q.values, k)?
        .into_iter()
        .map(|hit| {
            kb.chunk(&hit.id)
                .cloned()
                .map(|c| (c, hit.score))
                .ok_or(RagError::UnknownChunkId(hit.id))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatConfig {
    pub k: usize,
    pub prompt: PromptConfig,
    pub timeout: Duration,
}

impl Default for ChatConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            prompt: PromptConfig::default(),
            timeout: DEFAULT_BACKEND_TIMEOUT,
        }
    }
}

/// Run `generate` on a worker thread and give up after `timeout`. A timed
/// out worker is left to finish on its own; its answer is discarded.
pub fn generate_with_timeout(
    backend: Arc<dyn LlmBackend>,
    prompt: String,
    params: GenerateParams,
    timeout: Duration,
) -> Result<String, RagError> {
    let (tx, rx) = mpsc::sync_channel(1);
    std::thread::Builder::new()
        .name("llm-generate".into())
        .spawn(move || {
            let _ = tx.send(backend.generate(&prompt, &params));
        })?;
    match rx.recv_timeout(timeout) {
        Ok(result) => result,
        Err(mpsc::RecvTimeoutError::Timeout) => Err(RagError::BackendTimeout(timeout)),
        Err(mpsc::RecvTimeoutError::Disconnected) => {
            Err(RagError::BackendFailure("backend worker panicked".into()))
        }
    }
}

/// One grounded exchange. On success the turn is appended to `session` and
/// returned; on any error the session is left untouched.
pub fn chat_turn(
    session: &mut Session,
    query: &str,
    kb: &KnowledgeBase,
    embedder: &dyn Embedder,
    backend: Arc<dyn LlmBackend>,
    params: &GenerateParams,
    config: &ChatConfig,
) -> Result<ChatTurn, RagError> {
    let contexts = retrieve_context(query, kb, embedder, config.k)?;
    let chunks: Vec<Chunk> = contexts.iter().map(|(c, _)| c.clone()).collect();
    let prompt = assemble_prompt(session, query, &chunks, &config.prompt).render();

    let response = generate_with_timeout(backend, prompt, *params, config.timeout)?;
    if response.trim().is_empty() {
        return Err(RagError::BackendFailure("backend returned an empty response".into()));
    }

    let turn = ChatTurn {
        user_query: query.to_string(),
        response,
        citations: contexts
            .iter()
            .map(|(c, score)| Citation {
                chunk_id: c.id(),
                doc_id: c.doc_id.clone(),
                score: *score,
            })
            .collect(),
        timestamp: Utc::now(),
    };
    session.push(turn.clone());
    Ok(turn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::ReferenceEmbedder;
    use std::sync::Mutex;

    fn kb(docs: &[(&str, &str)]) -> KnowledgeBase {
        let docs: Vec<(String, String)> = docs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        KnowledgeBase::build(&docs, &ReferenceEmbedder::default(), &BuildOptions::default()).unwrap()
    }

    #[derive(Default)]
    struct Recording(Mutex<Vec<String>>);
    impl LlmBackend for Recording {
        fn generate(&self, prompt: &str, params: &GenerateParams) -> Result<String, RagError> {
            self.0.lock().unwrap().push(prompt.to_string());
            mock_generate(prompt, params)
        }
        fn info(&self) -> BackendInfo {
            BackendInfo {
                name: "recording".into(),
                deterministic: true,
            }
        }
    }

    struct Slow;
    impl LlmBackend for Slow {
        fn generate(&self, _: &str, _: &GenerateParams) -> Result<String, RagError> {
            std::thread::sleep(Duration::from_millis(500));
            Ok("late".into())
        }
        fn info(&self) -> BackendInfo {
            BackendInfo {
                name: "slow".into(),
                deterministic: true,
            }
        }
    }

    struct Failing;
    impl LlmBackend for Failing {
        fn generate(&self, _: &str, _: &GenerateParams) -> Result<String, RagError> {
            Err(RagError::BackendFailure("boom".into()))
        }
        fn info(&self) -> BackendInfo {
            BackendInfo {
                name: "failing".into(),
                deterministic: true,
            }
        }
    }

    #[test]
    fn empty_index_retrieves_nothing() {
        let kb = kb(&[]);
        assert!(retrieve_context("q", &kb, &ReferenceEmbedder::default(), 2).unwrap().is_empty());
    }

    #[test]
    fn verbatim_chunk_ranks_first() {
        let kb = kb(&[
            ("a", "fracture of the left wrist after a fall"),
            ("b", "persistent dry cough and mild fever"),
            ("c", "migraine with visual aura"),
        ]);
        let hits = retrieve_context("persistent dry cough and mild fever", &kb, &ReferenceEmbedder::default(), 2).unwrap();
        assert_eq!(hits[0].0.id(), "b#0");
        assert!((hits[0].1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn k_exceeds_corpus() {
        let kb = kb(&[("only", "single document")]);
        assert_eq!(retrieve_context("document", &kb, &ReferenceEmbedder::default(), 2).unwrap().len(), 1);
    }

    #[test]
    fn embedder_dims_must_match() {
        let kb = kb(&[("a", "text")]);
        assert!(matches!(
            retrieve_context("q", &kb, &ReferenceEmbedder::new(8), 2),
            Err(RagError::Index(IndexError::DimMismatch { .. }))
        ));
    }

    #[test]
    fn turn_cites_retrieved_chunks_and_history_grows() {
        let kb = kb(&[
            ("a", "aspirin reduces fever and pain"),
            ("b", "insulin regulates blood glucose"),
            ("c", "aspirin dosage for adults"),
        ]);
        let embedder = ReferenceEmbedder::default();
        let backend = Arc::new(Recording::default());
        let mut session = Session::new();
        let config = ChatConfig::default();

        let t1 = chat_turn(&mut session, "aspirin dosage", &kb, &embedder, backend.clone(), &GenerateParams::default(), &config).unwrap();
        let ids: Vec<_> = t1.citations.iter().map(|c| c.chunk_id.clone()).collect();
        assert_eq!(ids.len(), 2);
        assert_eq!(t1.response, format!("CTX[{}] Q[aspirin dosage]", ids.join(",")));

        chat_turn(&mut session, "and for children?", &kb, &embedder, backend.clone(), &GenerateParams::default(), &config).unwrap();
        assert_eq!(session.turns.len(), 2);
        let prompts = backend.0.lock().unwrap();
        let parsed = parse_prompt(&prompts[1]).unwrap();
        assert_eq!(parsed.history.len(), 1);
        assert_eq!(parsed.history[0].user, "aspirin dosage");
        assert_eq!(parsed.history[0].assistant, t1.response);
    }

    #[test]
    fn timeout_leaves_session_unchanged() {
        let kb = kb(&[("a", "text")]);
        let mut session = Session::new();
        let config = ChatConfig {
            timeout: Duration::from_millis(50),
            ..Default::default()
        };
        let err = chat_turn(&mut session, "q", &kb, &ReferenceEmbedder::default(), Arc::new(Slow), &GenerateParams::default(), &config).unwrap_err();
        assert!(matches!(err, RagError::BackendTimeout(_)));
        assert!(session.turns.is_empty());

        let err = chat_turn(&mut session, "q", &kb, &ReferenceEmbedder::default(), Arc::new(Failing), &GenerateParams::default(), &config).unwrap_err();
        assert!(matches!(err, RagError::BackendFailure(_)));
        assert!(session.turns.is_empty());
    }
}
