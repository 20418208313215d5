//! Two grounded chat turns over the sample documents with the mock backend,
//! which echoes the cited chunk ids and the query.

use std::error::Error;
use std::path::Path;
use std::sync::Arc;

use medaide::embed::{ReferenceEmbedder, DEFAULT_DIMS};
use medaide::rag::{chat_turn, BuildOptions, ChatConfig, GenerateParams, KnowledgeBase, MockBackend, Session};

fn main() -> Result<(), Box<dyn Error>> {
    let docs = KnowledgeBase::read_documents(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/docs")))?;
    let embedder = ReferenceEmbedder::new(DEFAULT_DIMS);
    let kb = KnowledgeBase::build(&docs, &embedder, &BuildOptions::default())?;
    println!("{} documents, {} chunks indexed", docs.len(), kb.chunk_count());

    let mut session = Session::new();
    let config = ChatConfig::default();
    for query in ["what dose of aspirin is safe for adults", "and for an asthma attack?"] {
        let turn = chat_turn(
            &mut session,
            query,
            &kb,
            &embedder,
            Arc::new(MockBackend),
            &GenerateParams::default(),
            &config,
        )?;
        println!("\n> {query}\n{}", turn.response);
        for c in &turn.citations {
            println!("  cites {} (score {:.4})", c.chunk_id, c.score);
        }
    }
    println!("\nsession {} has {} turns", session.session_id, session.turns.len());
    Ok(())
}
