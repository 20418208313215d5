//! Query latency percentiles and storage for flat, Q8 and Q4 indices built
//! from the sample documents.

use std::error::Error;
use std::path::Path;

use medaide::bench::run_bench;
use medaide::embed::{Embedder, ReferenceEmbedder, DEFAULT_DIMS};
use medaide::index::Scheme;
use medaide::rag::{BuildOptions, KnowledgeBase};

fn main() -> Result<(), Box<dyn Error>> {
    let docs = KnowledgeBase::read_documents(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/docs")))?;
    let embedder = ReferenceEmbedder::new(DEFAULT_DIMS);
    let queries = ["aspirin dosage", "asthma inhaler", "blood sugar", "broken bone", "migraine aura"]
        .iter()
        .map(|q| embedder.embed(q).map(|v| v.values))
        .collect::<Result<Vec<_>, _>>()?;

    for scheme in [Scheme::Flat, Scheme::Q8, Scheme::Q4] {
        let options = BuildOptions { scheme, ..BuildOptions::default() };
        let kb = KnowledgeBase::build(&docs, &embedder, &options)?;
        let report = run_bench(kb.index(), &queries, 200, 2)?;
        println!("{}", report.to_table());
    }
    Ok(())
}
