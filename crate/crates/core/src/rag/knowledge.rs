//! Chunk store paired with its vector index.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RagError;
use crate::chunk::{split_into_chunks, Chunk, ChunkParams};
use crate::embed::{embed_batch, Embedder};
use crate::index::{build_flat, load_index, quantize_index, save_index, Metric, Scheme, VectorIndex};

pub const INDEX_FILE: &str = "index.maix";
pub const CHUNKS_FILE: &str = "chunks.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildOptions {
    pub chunk_params: ChunkParams,
    pub scheme: Scheme,
    pub metric: Metric,
    pub clip_quantile: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            chunk_params: ChunkParams::default(),
            scheme: Scheme::Flat,
            metric: Metric::Cosine,
            clip_quantile: crate::index::DEFAULT_CLIP_QUANTILE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    index: VectorIndex,
    chunks: HashMap<String, Chunk>,
    /// Chunks left out of the index because they embed to the zero vector.
    skipped: Vec<String>,
}

impl KnowledgeBase {
    pub fn new(index: VectorIndex, chunks: Vec<Chunk>) -> Self {
        Self {
            index,
            chunks: chunks.into_iter().map(|c| (c.id(), c)).collect(),
            skipped: Vec::new(),
        }
    }

    /// Chunk, embed and index `(doc_id, text)` pairs.
    pub fn build(
        docs: &[(String, String)],
        embedder: &dyn Embedder,
        options: &BuildOptions,
    ) -> Result<Self, RagError> {
        let mut chunks = Vec::new();
        for (doc_id, text) in docs {
            chunks.extend(split_into_chunks(doc_id, text, options.chunk_params)?);
        }
        let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        let vectors = embed_batch(&texts, embedder)?;

        let mut ids = Vec::with_capacity(chunks.len());
        let mut rows = Vec::with_capacity(chunks.len());
        let mut skipped = Vec::new();
        for (chunk, v) in chunks.iter().zip(vectors) {
            if options.metric == Metric::Cosine && !v.normalized {
                skipped.push(chunk.id());
                continue;
            }
            ids.push(chunk.id());
            rows.push(v.values);
        }
        let flat = build_flat(embedder.dims(), ids, &rows, options.metric)?;
        let index = match options.scheme {
            Scheme::Flat => VectorIndex::Flat(flat),
            _ if flat.is_empty() => VectorIndex::Flat(flat),
            scheme => VectorIndex::Quantized(quantize_index(&flat, scheme, options.clip_quantile)?),
        };
        let mut kb = Self::new(index, chunks);
        kb.skipped = skipped;
        Ok(kb)
    }

    /// Read every `*.txt` / `*.md` file directly under `dir`, sorted by name.
    pub fn read_documents(dir: &Path) -> Result<Vec<(String, String)>, RagError> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && matches!(p.extension().and_then(|e| e.to_str()), Some("txt" | "md"))
            })
            .collect();
        paths.sort();
        paths
            .into_iter()
            .map(|p| {
                let name = p
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok((name, std::fs::read_to_string(&p)?))
            })
            .collect()
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn chunk(&self, id: &str) -> Option<&Chunk> {
        self.chunks.get(id)
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn skipped(&self) -> &[String] {
        &self.skipped
    }

    /// Chunks in (doc_id, seq) order.
    pub fn sorted_chunks(&self) -> Vec<&Chunk> {
        let mut all: Vec<&Chunk> = self.chunks.values().collect();
        all.sort_by(|a, b| a.doc_id.cmp(&b.doc_id).then(a.seq.cmp(&b.seq)));
        all
    }

    /// Write `index_path` plus the chunk dump at `chunks_path`.
    pub fn save_to(&self, index_path: &Path, chunks_path: &Path) -> Result<(), RagError> {
        save_index(&self.index, index_path)?;
        write_chunks(&self.sorted_chunks(), chunks_path)
    }

    pub fn load_from(index_path: &Path, chunks_path: &Path) -> Result<Self, RagError> {
        let index = load_index(index_path)?;
        let chunks = read_chunks(chunks_path)?;
        let kb = Self::new(index, chunks);
        if let Some(missing) = kb.index.ids().iter().find(|id| !kb.chunks.contains_key(*id)) {
            return Err(RagError::UnknownChunkId(missing.clone()));
        }
        Ok(kb)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), RagError> {
        self.save_to(&dir.join(INDEX_FILE), &dir.join(CHUNKS_FILE))
    }

    pub fn load_dir(dir: &Path) -> Result<Self, RagError> {
        Self::load_from(&dir.join(INDEX_FILE), &dir.join(CHUNKS_FILE))
    }
}

/// Sidecar path for an index file: `foo.maix` → `foo.chunks.jsonl`.
pub fn chunks_path_for(index_path: &Path) -> PathBuf {
    index_path.with_extension("chunks.jsonl")
}

/// One chunk per line with keys doc_id, seq, char_start, char_end, text.
pub fn write_chunks(chunks: &[&Chunk], path: &Path) -> Result<(), RagError> {
    let tmp = path.with_extension("tmp");
    {
        let mut out = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        for c in chunks {
            serde_json::to_writer(&mut out, c).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
    }
    std::fs::rename(tmp, path)?;
    Ok(())
}

pub fn read_chunks(path: &Path) -> Result<Vec<Chunk>, RagError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let chunk: Chunk = serde_json::from_str(&line)
            .map_err(|e| RagError::InvalidConfig(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(chunk);
    }
    Ok(out)
}
