//! Hardware-aware model selection.
//!
//! A candidate is feasible on a device when its quantization format is
//! supported there and its estimated footprint fits the device's usable
//! memory. Feasible candidates are then ordered for the requested mode:
//! bytes of weights streamed per token for real-time use, benchmark score
//! for accuracy.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_OVERHEAD_FACTOR: f64 = 0.2;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("model catalog is empty")]
    EmptyCatalog,
    #[error("invalid model spec `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("invalid hardware profile `{name}`: {reason}")]
    InvalidProfile { name: String, reason: String },
    #[error("overhead factor must be finite and non-negative, got {0}")]
    InvalidOverhead(f64),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceClass {
    Jetson,
    ConsumerGpu,
    CpuOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quant {
    F16,
    Q8,
    Q4,
}

impl Quant {
    pub fn bits_per_weight(self) -> u64 {
        match self {
            Quant::F16 => 16,
            Quant::Q8 => 8,
            Quant::Q4 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Realtime,
    #[default]
    Accuracy,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "realtime" => Ok(Mode::Realtime),
            "accuracy" => Ok(Mode::Accuracy),
            other => Err(format!("unknown mode `{other}` (expected realtime or accuracy)")),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawProfile {
    name: String,
    device_class: DeviceClass,
    #[serde(default)]
    vram_bytes: u64,
    #[serde(default)]
    ram_bytes: u64,
    #[serde(default)]
    supports_q4: Option<bool>,
}

/// Device capabilities. `supports_q4` is always false on Jetson boards and
/// defaults to true elsewhere; other devices may opt out explicitly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct HardwareProfile {
    pub name: String,
    pub device_class: DeviceClass,
    pub vram_bytes: u64,
    pub ram_bytes: u64,
    pub supports_q4: bool,
}

impl TryFrom<RawProfile> for HardwareProfile {
    type Error = SelectError;

    fn try_from(raw: RawProfile) -> Result<Self, Self::Error> {
        let supports_q4 = match (raw.device_class, raw.supports_q4) {
            (DeviceClass::Jetson, Some(true)) => {
                return Err(SelectError::InvalidProfile {
                    name: raw.name,
                    reason: "jetson boards cannot run Q4 models".into(),
                })
            }
            (DeviceClass::Jetson, _) => false,
            (_, explicit) => explicit.unwrap_or(true),
        };
        Ok(Self {
            name: raw.name,
            device_class: raw.device_class,
            vram_bytes: raw.vram_bytes,
            ram_bytes: raw.ram_bytes,
            supports_q4,
        })
    }
}

impl HardwareProfile {
    pub fn new(name: &str, device_class: DeviceClass, vram_bytes: u64, ram_bytes: u64) -> Self {
        Self {
            name: name.to_string(),
            device_class,
            vram_bytes,
            ram_bytes,
            supports_q4: device_class != DeviceClass::Jetson,
        }
    }

    /// Memory the model must fit in: VRAM on GPU-class devices, RAM otherwise.
    pub fn available_bytes(&self) -> u64 {
        match self.device_class {
            DeviceClass::Jetson | DeviceClass::ConsumerGpu => self.vram_bytes,
            DeviceClass::CpuOnly => self.ram_bytes,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SelectError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, SelectError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub params_count: u64,
    pub quant: Quant,
    pub accuracy_score: f64,
    #[serde(default)]
    pub notes: String,
}

impl ModelSpec {
    pub fn new(name: &str, params_count: u64, quant: Quant, accuracy_score: f64) -> Self {
        Self {
            name: name.to_string(),
            params_count,
            quant,
            accuracy_score,
            notes: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SelectError> {
        let invalid = |reason: &str| SelectError::InvalidSpec {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.params_count == 0 {
            return Err(invalid("params_count must be positive"));
        }
        if !(0.0..=100.0).contains(&self.accuracy_score) {
            return Err(invalid("accuracy_score must lie in [0, 100]"));
        }
        Ok(())
    }

    /// `name-QUANT`, e.g. `LLaMa2-7B-Q8`.
    pub fn label(&self) -> String {
        format!("{}-{:?}", self.name, self.quant)
    }

    /// Weight bits streamed per generated token.
    pub fn latency_proxy(&self) -> u64 {
        self.params_count * self.quant.bits_per_weight()
    }
}

/// Parse a JSON array of model specs, validating each.
pub fn parse_catalog(text: &str) -> Result<Vec<ModelSpec>, SelectError> {
    let catalog: Vec<ModelSpec> = serde_json::from_str(text)?;
    for spec in &catalog {
        spec.validate()?;
    }
    Ok(catalog)
}

pub fn load_catalog(path: &Path) -> Result<Vec<ModelSpec>, SelectError> {
    parse_catalog(&std::fs::read_to_string(path)?)
}

const OPT_125M: (&str, u64, f64) = ("OPT-125M", 125_000_000, 27.6);
const BLOOM_560M: (&str, u64, f64) = ("Bloom-560M", 560_000_000, 29.5);
const LLAMA2_7B: (&str, u64, f64) = ("LLaMa2-7B", 7_000_000_000, 51.9);

/// OPT-125M, Bloom-560M and LLaMa2-7B at Q8 with their medical QA scores.
pub fn q8_catalog() -> Vec<ModelSpec> {
    [OPT_125M, BLOOM_560M, LLAMA2_7B]
        .iter()
        .map(|(name, params, score)| ModelSpec::new(name, *params, Quant::Q8, *score))
        .collect()
}

/// The same three models in every quantization format. Scores are the
/// unquantized benchmark figures; quantized variants inherit them.
pub fn builtin_catalog() -> Vec<ModelSpec> {
    let mut out = Vec::new();
    for (name, params, score) in [OPT_125M, BLOOM_560M, LLAMA2_7B] {
        for quant in [Quant::F16, Quant::Q8, Quant::Q4] {
            out.push(ModelSpec::new(name, params, quant, score));
        }
    }
    out
}

/// `params × bits / 8 × (1 + overhead_factor)`, rounded to whole bytes.
pub fn estimate_memory(spec: &ModelSpec, overhead_factor: f64) -> u64 {
    let weights = spec.params_count as f64 * spec.quant.bits_per_weight() as f64 / 8.0;
    (weights * (1.0 + overhead_factor)).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Violation {
    Q4Unsupported,
    InsufficientMemory,
}

impl Violation {
    pub fn code(self) -> &'static str {
        match self {
            Violation::Q4Unsupported => "Q4_UNSUPPORTED",
            Violation::InsufficientMemory => "INSUFFICIENT_MEMORY",
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

pub fn check_compatibility(
    profile: &HardwareProfile,
    spec: &ModelSpec,
    overhead_factor: f64,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    if spec.quant == Quant::Q4 && !profile.supports_q4 {
        violations.push(Violation::Q4Unsupported);
    }
    if estimate_memory(spec, overhead_factor) > profile.available_bytes() {
        violations.push(Violation::InsufficientMemory);
    }
    violations
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub spec: ModelSpec,
    pub est_bytes: u64,
    pub latency_proxy: u64,
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen: Option<ModelSpec>,
    pub ranked: Vec<RankedCandidate>,
}

fn mode_order(mode: Mode, a: &RankedCandidate, b: &RankedCandidate) -> Ordering {
    match mode {
        Mode::Realtime => a.latency_proxy.cmp(&b.latency_proxy),
        Mode::Accuracy => b.spec.accuracy_score.total_cmp(&a.spec.accuracy_score),
    }
}

/// Score every catalog entry against `profile` and order them: feasible
/// entries first by `mode`, then infeasible ones; ties go to the smaller
/// footprint, then the name, then the lower-precision format.
pub fn rank_candidates(
    profile: &HardwareProfile,
    catalog: &[ModelSpec],
    mode: Mode,
    overhead_factor: f64,
) -> Result<SelectionResult, SelectError> {
    if catalog.is_empty() {
        return Err(SelectError::EmptyCatalog);
    }
    if !(overhead_factor.is_finite() && overhead_factor >= 0.0) {
        return Err(SelectError::InvalidOverhead(overhead_factor));
    }
    let mut ranked: Vec<RankedCandidate> = catalog
        .iter()
        .map(|spec| {
            let violations = check_compatibility(profile, spec, overhead_factor);
            RankedCandidate {
                spec: spec.clone(),
                est_bytes: estimate_memory(spec, overhead_factor),
                latency_proxy: spec.latency_proxy(),
                feasible: violations.is_empty(),
                violations,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.feasible
            .cmp(&a.feasible)
            .then_with(|| mode_order(mode, a, b))
            .then_with(|| a.est_bytes.cmp(&b.est_bytes))
            .then_with(|| a.spec.name.cmp(&b.spec.name))
            .then_with(|| b.spec.quant.cmp(&a.spec.quant))
    });
    let chosen = ranked.first().filter(|c| c.feasible).map(|c| c.spec.clone());
    Ok(SelectionResult { chosen, ranked })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GB: u64 = 1_000_000_000;

    #[test]
    fn memory_estimates() {
        let llama = |q| ModelSpec::new("LLaMa2-7B", 7_000_000_000, q, 51.9);
        assert_eq!(estimate_memory(&llama(Quant::F16), 0.0), 14 * GB);
        assert_eq!(estimate_memory(&llama(Quant::Q4), 0.0), 3_500_000_000);
        let bloom = ModelSpec::new("Bloom-560M", 560_000_000, Quant::Q8, 29.5);
        assert_eq!(estimate_memory(&bloom, 0.2), 672_000_000);
    }

    #[test]
    fn jetson_rejects_q4() {
        let jetson = HardwareProfile::new("jetson-8gb", DeviceClass::Jetson, 8 * GB, 8 * GB);
        let spec = ModelSpec::new("LLaMa2-7B", 7_000_000_000, Quant::Q4, 51.9);
        assert_eq!(check_compatibility(&jetson, &spec, 0.2), vec![Violation::Q4Unsupported]);
    }

    #[test]
    fn memory_limits() {
        let gpu8 = HardwareProfile::new("gpu8", DeviceClass::ConsumerGpu, 8 * GB, 32 * GB);
        let f16 = ModelSpec::new("LLaMa2-7B", 7_000_000_000, Quant::F16, 51.9);
        assert_eq!(check_compatibility(&gpu8, &f16, 0.0), vec![Violation::InsufficientMemory]);
        let gpu16 = HardwareProfile::new("gpu16", DeviceClass::ConsumerGpu, 16 * GB, 32 * GB);
        let q8 = ModelSpec::new("LLaMa2-7B", 7_000_000_000, Quant::Q8, 51.9);
        assert_eq!(estimate_memory(&q8, 0.2), 8_400_000_000);
        assert!(check_compatibility(&gpu16, &q8, 0.2).is_empty());
        // cpu_only checks RAM, not VRAM
        let cpu = HardwareProfile::new("cpu", DeviceClass::CpuOnly, 0, 16 * GB);
        assert!(check_compatibility(&cpu, &q8, 0.2).is_empty());
    }

    #[test]
    fn q8_selection_by_mode() {
        let gpu16 = HardwareProfile::new("gpu16", DeviceClass::ConsumerGpu, 16 * GB, 32 * GB);
        let acc = rank_candidates(&gpu16, &q8_catalog(), Mode::Accuracy, 0.2).unwrap();
        assert_eq!(acc.chosen.unwrap().name, "LLaMa2-7B");
        let rt = rank_candidates(&gpu16, &q8_catalog(), Mode::Realtime, 0.2).unwrap();
        assert_eq!(rt.chosen.unwrap().name, "OPT-125M");
        let order: Vec<_> = rt.ranked.iter().map(|c| c.spec.name.as_str()).collect();
        assert_eq!(order, ["OPT-125M", "Bloom-560M", "LLaMa2-7B"]);
    }

    #[test]
    fn nothing_feasible() {
        let tiny = HardwareProfile::new("tiny", DeviceClass::Jetson, 1_000_000, 1_000_000);
        let res = rank_candidates(&tiny, &builtin_catalog(), Mode::Accuracy, 0.2).unwrap();
        assert!(res.chosen.is_none());
        assert!(res.ranked.iter().all(|c| !c.violations.is_empty() && !c.feasible));
        assert_eq!(res.ranked.len(), 9);
    }

    #[test]
    fn empty_catalog() {
        let p = HardwareProfile::new("p", DeviceClass::CpuOnly, 0, GB);
        assert!(matches!(
            rank_candidates(&p, &[], Mode::Realtime, 0.2),
            Err(SelectError::EmptyCatalog)
        ));
    }

    #[test]
    fn profile_json_derives_q4_support() {
        let j = HardwareProfile::from_json(r#"{"name":"orin","device_class":"jetson","vram_bytes":8000000000}"#).unwrap();
        assert!(!j.supports_q4);
        let g = HardwareProfile::from_json(r#"{"name":"rtx","device_class":"consumer_gpu","vram_bytes":1}"#).unwrap();
        assert!(g.supports_q4);
        let off = HardwareProfile::from_json(
            r#"{"name":"rtx","device_class":"consumer_gpu","vram_bytes":1,"supports_q4":false}"#,
        )
        .unwrap();
        assert!(!off.supports_q4);
        assert!(HardwareProfile::from_json(
            r#"{"name":"orin","device_class":"jetson","supports_q4":true}"#
        )
        .is_err());
    }

    #[test]
    fn catalog_validation() {
        assert!(parse_catalog(r#"[{"name":"x","params_count":0,"quant":"Q8","accuracy_score":1}]"#).is_err());
        assert!(parse_catalog(r#"[{"name":"x","params_count":5,"quant":"Q8","accuracy_score":101}]"#).is_err());
        let c = parse_catalog(r#"[{"name":"x","params_count":5,"quant":"F16","accuracy_score":10}]"#).unwrap();
        assert_eq!(c[0].quant, Quant::F16);
    }

    #[test]
    fn violation_codes_serialize() {
        assert_eq!(serde_json::to_string(&Violation::Q4Unsupported).unwrap(), "\"Q4_UNSUPPORTED\"");
        assert_eq!(Violation::InsufficientMemory.to_string(), "INSUFFICIENT_MEMORY");
    }
}
