//! Split a document into overlapping character windows and score each chunk
//! against a query with the reference embedder.

use std::error::Error;

use medaide::chunk::{split_into_chunks, ChunkParams};
use medaide::embed::{cosine, Embedder, ReferenceEmbedder, DEFAULT_DIMS};

fn main() -> Result<(), Box<dyn Error>> {
    let query = std::env::args().nth(1).unwrap_or_else(|| "aspirin dose for adults".into());
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/docs/aspirin.txt"))?;

    // Small windows so the short sample document yields several chunks.
    let params = ChunkParams::new(400, 50)?;
    let chunks = split_into_chunks("aspirin.txt", &text, params)?;
    println!(
        "{} chars -> {} chunks (size {}, overlap {})",
        text.chars().count(),
        chunks.len(),
        params.size_chars,
        params.overlap_chars
    );

    let embedder = ReferenceEmbedder::new(DEFAULT_DIMS);
    let q = embedder.embed(&query)?;
    for c in &chunks {
        let v = embedder.embed(&c.text)?;
        println!(
            "{:<16} [{:>4}, {:>4})  cos = {:.4}",
            c.id(),
            c.char_start,
            c.char_end,
            cosine(&q.values, &v.values)
        );
    }
    Ok(())
}
