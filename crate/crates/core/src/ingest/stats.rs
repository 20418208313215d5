use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IngestError, InstructionRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub source_tag: String,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_samples: Option<usize>,
}

/// Known corpus sources, loaded from `{"entries": [...]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRegistry {
    pub entries: Vec<RegistryEntry>,
}

impl SourceRegistry {
    pub fn new(entries: Vec<RegistryEntry>) -> Result<Self, IngestError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.source_tag.as_str()) {
                return Err(IngestError::DuplicateSource(e.source_tag.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let raw: SourceRegistry = serde_json::from_str(text).map_err(|e| IngestError::MalformedJsonl {
            line: e.line(),
            reason: e.to_string(),
        })?;
        Self::new(raw.entries)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The dataset sources with their published sample counts.
    pub fn medical_sources() -> Self {
        let rows: [(&str, &str, usize); 12] = [
            ("healthcaremagic", "HealthcareMagic", 112_641),
            ("webmd", "WebMD", 88_207),
            ("askdocs", "AskDocs", 24_256),
            ("icliniq", "iCliniq", 4_651),
            ("healthtap", "HealthTap", 3_647),
            ("ehealth", "ehealth", 1_710),
            ("huatuo26m", "Huato-26M", 85_000),
            ("medquad", "MedQuAD", 47_457),
            ("medmcqa", "MedMCQa", 25_679),
            ("medqsum", "MedQSum", 1_000),
            ("medical_cases", "Medical Cases", 4_363),
            ("kaggle_disease", "Kaggle disease tables", 0),
        ];
        let entries = rows
            .iter()
            .map(|(tag, name, n)| RegistryEntry {
                source_tag: tag.to_string(),
                display_name: name.to_string(),
                expected_samples: (*n > 0).then_some(*n),
            })
            .collect();
        Self { entries }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCount {
    pub source_tag: String,
    pub display_name: Option<String>,
    pub count: usize,
    pub expected: Option<usize>,
    pub mismatch: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub sources: Vec<SourceCount>,
}

impl CorpusStats {
    pub fn count(&self, tag: &str) -> usize {
        self.sources
            .iter()
            .find(|s| s.source_tag == tag)
            .map_or(0, |s| s.count)
    }
}

/// Per-source counts. Registry entries come first in registry order, then
/// unregistered tags in lexical order.
pub fn corpus_stats(records: &[InstructionRecord], registry: &SourceRegistry) -> CorpusStats {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(r.source_tag.as_str()).or_default() += 1;
    }

    let mut sources: Vec<SourceCount> = registry
        .entries
        .iter()
        .map(|e| {
            let count = counts.remove(e.source_tag.as_str()).unwrap_or(0);
            SourceCount {
                source_tag: e.source_tag.clone(),
                display_name: Some(e.display_name.clone()),
                count,
                expected: e.expected_samples,
                mismatch: e.expected_samples.is_some_and(|n| n != count),
            }
        })
        .collect();
    sources.extend(counts.into_iter().map(|(tag, count)| SourceCount {
        source_tag: tag.to_string(),
        display_name: None,
        count,
        expected: None,
        mismatch: false,
    }));

    CorpusStats {
        total: records.len(),
        sources,
    }
}
