//! Fixed-size overlapping character windows.
//!
//! Offsets count Unicode scalar values, not bytes, so a window never splits a
//! code point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChunkError {
    #[error("chunk size must be at least 1")]
    ZeroSize,
    #[error("overlap {overlap} must be smaller than chunk size {size}")]
    OverlapTooLarge { size: usize, overlap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkParams {
    pub size_chars: usize,
    pub overlap_chars: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        Self {
            size_chars: 1000,
            overlap_chars: 50,
        }
    }
}

impl ChunkParams {
    pub fn new(size_chars: usize, overlap_chars: usize) -> Result<Self, ChunkError> {
        let p = Self {
            size_chars,
            overlap_chars,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ChunkError> {
        if self.size_chars == 0 {
            return Err(ChunkError::ZeroSize);
        }
        if self.overlap_chars >= self.size_chars {
            return Err(ChunkError::OverlapTooLarge {
                size: self.size_chars,
                overlap: self.overlap_chars,
            });
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.size_chars - self.overlap_chars
    }

    /// Number of chunks `split_into_chunks` produces for a text of `len` chars.
    pub fn chunk_count(&self, len: usize) -> usize {
        match len {
            0 => 0,
            n if n <= self.size_chars => 1,
            n => 1 + (n - self.size_chars).div_ceil(self.stride()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub seq: usize,
    pub char_start: usize,
    pub char_end: usize,
    pub text: String,
}

impl Chunk {
    /// Stable identifier used by the vector index: `{doc_id}#{seq}`.
    pub fn id(&self) -> String {
        format!("{}#{}", self.doc_id, self.seq)
    }

    pub fn len_chars(&self) -> usize {
        self.char_end - self.char_start
    }
}

/// Split `text` into windows of `size_chars` advancing by
/// `size_chars - overlap_chars`. The tail window may be short and is never
/// padded; a window that would lie entirely inside its predecessor is not
/// emitted.
pub fn split_into_chunks(
    doc_id: &str,
    text: &str,
    params: ChunkParams,
) -> Result<Vec<Chunk>, ChunkError> {
    params.validate()?;
    // Byte offset of every char boundary, plus the end of the string.
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .collect();
    let len = bounds.len() - 1;

    let mut chunks = Vec::with_capacity(params.chunk_count(len));
    let mut start = 0;
    while start < len {
        let end = (start + params.size_chars).min(len);
        chunks.push(Chunk {
            doc_id: doc_id.to_string(),
            seq: chunks.len(),
            char_start: start,
            char_end: end,
            text: text[bounds[start]..bounds[end]].to_string(),
        });
        if end == len {
            break;
        }
        start += params.stride();
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spans(chunks: &[Chunk]) -> Vec<(usize, usize)> {
        chunks.iter().map(|c| (c.char_start, c.char_end)).collect()
    }

    #[test]
    fn exactly_one_window() {
        let text = "x".repeat(1000);
        let chunks = split_into_chunks("d", &text, ChunkParams::default()).unwrap();
        assert_eq!(spans(&chunks), vec![(0, 1000)]);
    }

    #[test]
    fn len_1950_two_windows() {
        let text = "y".repeat(1950);
        let chunks = split_into_chunks("d", &text, ChunkParams::default()).unwrap();
        assert_eq!(spans(&chunks), vec![(0, 1000), (950, 1950)]);
        assert_eq!(chunks[1].seq, 1);
        assert_eq!(chunks[1].id(), "d#1");
    }

    #[test]
    fn empty_text() {
        assert!(split_into_chunks("d", "", ChunkParams::default()).unwrap().is_empty());
    }

    #[test]
    fn multibyte_never_split() {
        let text = "é".repeat(25) + "漢字";
        let chunks = split_into_chunks("d", &text, ChunkParams::new(10, 3).unwrap()).unwrap();
        for c in &chunks {
            assert_eq!(c.text.chars().count(), c.len_chars());
        }
        assert_eq!(chunks.last().unwrap().char_end, 27);
    }

    #[test]
    fn invalid_params() {
        assert_eq!(ChunkParams::new(0, 0), Err(ChunkError::ZeroSize));
        assert!(matches!(ChunkParams::new(5, 5), Err(ChunkError::OverlapTooLarge { .. })));
        let bad = ChunkParams {
            size_chars: 4,
            overlap_chars: 9,
        };
        assert!(split_into_chunks("d", "abc", bad).is_err());
    }

    proptest! {
        #[test]
        fn coverage_overlap_and_count(len in 0usize..3000, size in 1usize..400, overlap_frac in 0.0f64..1.0) {
            let overlap = ((size as f64) * overlap_frac) as usize % size;
            let params = ChunkParams::new(size, overlap).unwrap();
            let text: String = (0..len).map(|i| char::from(b'a' + (i % 26) as u8)).collect();
            let chunks = split_into_chunks("doc", &text, params).unwrap();
            prop_assert_eq!(chunks.len(), params.chunk_count(len));
            if len == 0 {
                prop_assert!(chunks.is_empty());
                return Ok(());
            }
            prop_assert_eq!(chunks[0].char_start, 0);
            prop_assert_eq!(chunks.last().unwrap().char_end, len);
            for (i, c) in chunks.iter().enumerate() {
                prop_assert_eq!(c.seq, i);
                prop_assert!(c.len_chars() <= size);
                prop_assert_eq!(&c.text, &text[c.char_start..c.char_end]);
            }
            for pair in chunks.windows(2) {
                prop_assert_eq!(pair[1].char_start, pair[0].char_start + params.stride());
                // Only the tail may be short, so every pair shares exactly `overlap`.
                prop_assert_eq!(pair[0].len_chars(), size);
                prop_assert_eq!(pair[0].char_end - pair[1].char_start, overlap);
            }
        }
    }
}
