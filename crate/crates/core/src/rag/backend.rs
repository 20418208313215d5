use serde::{Deserialize, Serialize};

use super::prompt::parse_prompt;
use super::RagError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateParams {
    pub max_tokens: u32,
    pub temperature: f32,
    pub seed: u64,
}

impl Default for GenerateParams {
    fn default() -> Self {
        Self {
            max_tokens: 512,
            temperature: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub name: String,
    pub deterministic: bool,
}

/// Text generation behind the chat chain: the in-process mock, or an
/// external model runner reached through [`crate::adapter`].
pub trait LlmBackend: Send + Sync {
    fn generate(&self, prompt: &str, params: &GenerateParams) -> Result<String, RagError>;
    fn info(&self) -> BackendInfo;
}

/// `CTX[<chunk ids, comma-joined>] Q[<query>]` for a rendered prompt.
pub fn mock_generate(prompt: &str, _params: &GenerateParams) -> Result<String, RagError> {
    let parsed = parse_prompt(prompt)?;
    let ids: Vec<&str> = parsed
        .context_blocks
        .iter()
        .map(|b| b.chunk_id.as_str())
        .collect();
    Ok(format!("CTX[{}] Q[{}]", ids.join(","), parsed.query))
}

/// Deterministic echo backend for tests and demos.
#[derive(Debug, Default, Clone, Copy)]
pub struct MockBackend;

impl LlmBackend for MockBackend {
    fn generate(&self, prompt: &str, params: &GenerateParams) -> Result<String, RagError> {
        mock_generate(prompt, params)
    }

    fn info(&self) -> BackendInfo {
        BackendInfo {
            name: "mock".into(),
            deterministic: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echoes_context_ids_and_query() {
        let prompt = "P\n\n### Context:\n\
[1] {\"chunk\":\"c1\",\"doc\":\"d\",\"chars\":1}\nx\n\
[2] {\"chunk\":\"c7\",\"doc\":\"d\",\"chars\":1}\ny\n\n\
### Instruction:\nq\n\n### Response:\n";
        let out = mock_generate(prompt, &GenerateParams::default()).unwrap();
        assert_eq!(out, "CTX[c1,c7] Q[q]");
    }

    #[test]
    fn no_context() {
        let out = MockBackend
            .generate("### Instruction:\nq\n\n### Response:\n", &GenerateParams::default())
            .unwrap();
        assert_eq!(out, "CTX[] Q[q]");
    }

    #[test]
    fn missing_instruction_is_malformed() {
        assert!(matches!(
            mock_generate("P\n\n### Response:\n", &GenerateParams::default()),
            Err(RagError::MalformedPrompt(_))
        ));
    }

    #[test]
    fn deterministic_under_seed() {
        let p = "### Instruction:\nsame\n\n### Response:\n";
        let params = GenerateParams {
            seed: 9,
            ..Default::default()
        };
        assert_eq!(mock_generate(p, &params).unwrap(), mock_generate(p, &params).unwrap());
        assert!(MockBackend.info().deterministic);
    }
}
