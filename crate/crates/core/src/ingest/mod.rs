//! Corpus ingestion: raw CSV/forum exports into refined instruction records.
//!
//! The pipeline is `parse_csv` → `csv_to_instruction` → (optional translation)
//! → `refine` → `write_jsonl`. Each stage is a pure function over owned data
//! so independent files can be processed in parallel.

mod convert;
mod csv_input;
mod jsonl;
mod pipeline;
mod refine;
mod stats;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use convert::{csv_to_instruction, translate_records, IdentityTranslator, Translate, QUESTION_TEMPLATE};
pub use csv_input::parse_csv;
pub use jsonl::{read_jsonl, write_jsonl};
pub use pipeline::{load_records, ConvertOptions, InputFormat};
pub use refine::{refine, refine_with, RefineConfig, RefinementReport, DEFAULT_DELETED_MARKERS, REDACTED};
pub use stats::{corpus_stats, CorpusStats, RegistryEntry, SourceCount, SourceRegistry};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed CSV at row {row}: {reason}")]
    MalformedCsv { row: usize, reason: String },
    #[error("malformed JSONL at line {line}: {reason}")]
    MalformedJsonl { line: usize, reason: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("duplicate source tag `{0}` in registry")]
    DuplicateSource(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One data row of a source export, columns kept in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub source_tag: String,
    pub fields: Vec<(String, String)>,
    pub row_number: usize,
}

impl RawRecord {
    pub fn new(
        source_tag: &str,
        fields: Vec<(String, String)>,
        row_number: usize,
    ) -> Result<Self, IngestError> {
        if source_tag.is_empty() {
            return Err(IngestError::InvalidRecord("empty source tag".into()));
        }
        if fields.is_empty() {
            return Err(IngestError::InvalidRecord("record has no fields".into()));
        }
        if row_number == 0 {
            return Err(IngestError::InvalidRecord("row numbers start at 1".into()));
        }
        Ok(Self {
            source_tag: source_tag.to_string(),
            fields,
            row_number,
        })
    }

    pub fn get(&self, column: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(name, _)| name == column)
            .map(|(_, v)| v.as_str())
    }
}

/// An instruction/input/output triple with provenance.
///
/// `input` carries the prompt type and any previous discussion; it is empty
/// for single-turn CSV conversions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub source_tag: String,
    pub id: String,
}

impl InstructionRecord {
    pub fn new(instruction: String, input: String, output: String, source_tag: String) -> Self {
        let id = content_id(&instruction, &output);
        Self {
            instruction,
            input,
            output,
            source_tag,
            id,
        }
    }

    /// Recompute `id` after the text has been edited.
    pub fn rehash(&mut self) {
        self.id = content_id(&self.instruction, &self.output);
    }
}

/// SHA-256 hex digest of the lowercased, whitespace-collapsed
/// `instruction ‖ NUL ‖ output`.
pub fn content_id(instruction: &str, output: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(normalize_for_id(instruction).as_bytes());
    hasher.update([0u8]);
    hasher.update(normalize_for_id(output).as_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn normalize_for_id(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}
