use super::{IngestError, InstructionRecord, RawRecord};

/// Question template applied to every disease row; `{disease}` is the only
/// placeholder.
pub const QUESTION_TEMPLATE: &str =
    "What are the symptoms, reasons, tests and procedures, and common medications for {disease}?";

/// Turn one disease-table row into an instruction record.
///
/// The answer lists the remaining non-empty columns as `Column: value` lines
/// in source order. A row carrying only the disease yields an empty output,
/// which `refine` later drops as incomplete.
pub fn csv_to_instruction(
    record: &RawRecord,
    disease_column: &str,
) -> Result<InstructionRecord, IngestError> {
    let disease = record
        .get(disease_column)
        .ok_or_else(|| IngestError::MissingColumn(disease_column.to_string()))?
        .trim();
    let instruction = QUESTION_TEMPLATE.replace("{disease}", disease);
    let output = record
        .fields
        .iter()
        .filter(|(name, value)| name != disease_column && !value.trim().is_empty())
        .map(|(name, value)| format!("{}: {}", name.trim(), value.trim()))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(InstructionRecord::new(
        instruction,
        String::new(),
        output,
        record.source_tag.clone(),
    ))
}

/// Text-to-text hook for sources that arrive in another language.
pub trait Translate: Send + Sync {
    fn translate(&self, text: &str) -> String;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityTranslator;

impl Translate for IdentityTranslator {
    fn translate(&self, text: &str) -> String {
        text.to_string()
    }
}

impl<F> Translate for F
where
    F: Fn(&str) -> String + Send + Sync,
{
    fn translate(&self, text: &str) -> String {
        self(text)
    }
}

/// Apply `hook` to instruction, input and output, recomputing ids.
pub fn translate_records(
    records: Vec<InstructionRecord>,
    hook: &dyn Translate,
) -> Vec<InstructionRecord> {
    records
        .into_iter()
        .map(|r| {
            InstructionRecord::new(
                hook.translate(&r.instruction),
                hook.translate(&r.input),
                hook.translate(&r.output),
                r.source_tag,
            )
        })
        .collect()
}
