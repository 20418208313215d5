use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::InstructionRecord;

pub const REDACTED: &str = "[REDACTED]";

pub const DEFAULT_DELETED_MARKERS: [&str; 3] = ["[deleted]", "[removed]", "deleted"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Compared case-insensitively against the trimmed instruction and output.
    pub deleted_markers: Vec<String>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            deleted_markers: DEFAULT_DELETED_MARKERS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Counts from one refinement pass.
///
/// `dropped_pii_scrubbed` counts records whose text was redacted; those
/// records are kept, so it is not part of the conservation sum
/// `kept + dropped_incomplete + dropped_deleted + dropped_duplicate`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub kept: usize,
    pub dropped_incomplete: usize,
    pub dropped_deleted: usize,
    pub dropped_pii_scrubbed: usize,
    pub dropped_duplicate: usize,
}

impl RefinementReport {
    pub fn input_count(&self) -> usize {
        self.kept + self.dropped_incomplete + self.dropped_deleted + self.dropped_duplicate
    }

    pub fn merge(&mut self, other: &RefinementReport) {
        self.kept += other.kept;
        self.dropped_incomplete += other.dropped_incomplete;
        self.dropped_deleted += other.dropped_deleted;
        self.dropped_pii_scrubbed += other.dropped_pii_scrubbed;
        self.dropped_duplicate += other.dropped_duplicate;
    }
}

fn email_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}").unwrap())
}

fn phone_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?:\+\d{1,3}[\s.-]?)?(?:\(\d{3}\)\s?|\b\d{3}[\s.-]?)\d{3}[\s.-]?\d{4}\b").unwrap()
    })
}

/// Replace email addresses and phone numbers with [`REDACTED`].
/// Returns `None` when nothing matched.
pub(crate) fn scrub_pii(text: &str) -> Option<String> {
    let after_email = email_re().replace_all(text, REDACTED);
    let after_phone = phone_re().replace_all(&after_email, REDACTED);
    (after_phone != text).then(|| after_phone.into_owned())
}

/// Refine with the default marker set.
pub fn refine(records: Vec<InstructionRecord>) -> (Vec<InstructionRecord>, RefinementReport) {
    refine_with(records, &RefineConfig::default())
}

/// Drop incomplete, deleted and duplicate records and redact PII, keeping
/// input order. Duplicates are detected on the post-redaction id; the first
/// occurrence wins.
pub fn refine_with(
    records: Vec<InstructionRecord>,
    config: &RefineConfig,
) -> (Vec<InstructionRecord>, RefinementReport) {
    let markers: Vec<String> = config
        .deleted_markers
        .iter()
        .map(|m| m.trim().to_lowercase())
        .collect();
    let is_deleted = |text: &str| {
        let t = text.trim().to_lowercase();
        markers.contains(&t)
    };
    // Table rows render as `Column: value` lines; a row whose every cell is
    // a marker was deleted at the source.
    let is_deleted_output = |text: &str| {
        is_deleted(text)
            || text.lines().filter(|l| !l.trim().is_empty()).all(|line| {
                line.split_once(": ").is_some_and(|(_, value)| is_deleted(value))
            })
    };

    let mut report = RefinementReport::default();
    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(records.len());

    for mut rec in records {
        if rec.instruction.trim().is_empty() || rec.output.trim().is_empty() {
            report.dropped_incomplete += 1;
            continue;
        }
        if is_deleted(&rec.instruction) || is_deleted_output(&rec.output) {
            report.dropped_deleted += 1;
            continue;
        }

        let mut scrubbed = false;
        for text in [&mut rec.instruction, &mut rec.input, &mut rec.output] {
            if let Some(clean) = scrub_pii(text) {
                *text = clean;
                scrubbed = true;
            }
        }
        if scrubbed {
            rec.rehash();
            report.dropped_pii_scrubbed += 1;
        }

        if !seen.insert(rec.id.clone()) {
            report.dropped_duplicate += 1;
            continue;
        }
        report.kept += 1;
        kept.push(rec);
    }
    (kept, report)
}
