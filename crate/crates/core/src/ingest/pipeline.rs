use std::path::Path;

use super::{csv_to_instruction, parse_csv, read_jsonl, translate_records, IngestError, InstructionRecord, Translate};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl InputFormat {
    /// `.jsonl` / `.ndjson` are instruction records, everything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("jsonl" | "ndjson") => InputFormat::Jsonl,
            _ => InputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvertOptions {
    pub source_tag: String,
    /// Column holding the disease name; the first column when absent.
    pub disease_column: Option<String>,
    pub has_header: bool,
}

impl ConvertOptions {
    pub fn new(source_tag: &str) -> Self {
        Self {
            source_tag: source_tag.to_string(),
            disease_column: None,
            has_header: true,
        }
    }
}

/// Decode one input file into (unrefined) instruction records.
pub fn load_records(
    bytes: &[u8],
    format: InputFormat,
    options: &ConvertOptions,
    hook: &dyn Translate,
) -> Result<Vec<InstructionRecord>, IngestError> {
    let records = match format {
        InputFormat::Jsonl => read_jsonl(bytes)?,
        InputFormat::Csv => {
            let rows = parse_csv(bytes, options.has_header, &options.source_tag)?;
            rows.iter()
                .map(|row| {
                    let column = match &options.disease_column {
                        Some(c) => c.as_str(),
                        None => row.fields[0].0.as_str(),
                    };
                    csv_to_instruction(row, column)
                })
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    Ok(translate_records(records, hook))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::IdentityTranslator;

    #[test]
    fn csv_defaults_to_first_column() {
        let csv = b"Disease,Symptom\nFlu,fever\n";
        let out = load_records(csv, InputFormat::Csv, &ConvertOptions::new("k"), &IdentityTranslator).unwrap();
        assert!(out[0].instruction.ends_with("for Flu?"));
        assert_eq!(out[0].output, "Symptom: fever");
    }

    #[test]
    fn named_column_must_exist() {
        let mut opts = ConvertOptions::new("k");
        opts.disease_column = Some("Illness".into());
        assert!(matches!(
            load_records(b"Disease\nFlu\n", InputFormat::Csv, &opts, &IdentityTranslator),
            Err(IngestError::MissingColumn(_))
        ));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(InputFormat::from_path(Path::new("a/b.JSONL")), InputFormat::Jsonl);
        assert_eq!(InputFormat::from_path(Path::new("a/b.csv")), InputFormat::Csv);
    }
}
