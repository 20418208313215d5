//! Convert a disease CSV into instruction records, refine them, and print the
//! surviving records as JSON lines along with the refinement report.

use std::error::Error;
use std::path::Path;

use medaide::ingest::{
    corpus_stats, load_records, refine, write_jsonl, ConvertOptions, IdentityTranslator, InputFormat,
    SourceRegistry,
};

fn main() -> Result<(), Box<dyn Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/diseases_sample.csv").into());
    let bytes = std::fs::read(&path)?;

    let mut options = ConvertOptions::new("kaggle_disease");
    options.disease_column = Some("Disease".into());
    let records = load_records(&bytes, InputFormat::from_path(Path::new(&path)), &options, &IdentityTranslator)?;
    let (kept, report) = refine(records);

    eprintln!(
        "kept {} | incomplete {} | deleted {} | duplicate {} | pii scrubbed {}",
        report.kept, report.dropped_incomplete, report.dropped_deleted, report.dropped_duplicate, report.dropped_pii_scrubbed
    );
    let stats = corpus_stats(&kept, &SourceRegistry::medical_sources());
    eprintln!("{}", serde_json::to_string(&stats)?);

    write_jsonl(&kept, std::io::stdout().lock())?;
    Ok(())
}
