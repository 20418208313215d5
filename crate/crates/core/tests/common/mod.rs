#![allow(dead_code)]

use std::path::{Path, PathBuf};

use medaide::chunk::{split_into_chunks, ChunkParams};
use medaide::gateway::{BackendConfig, ServiceConfig};

pub const TOKEN: &str = "test-token";

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_medaide")
}

/// FNV-1a 64, written out independently of the library.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 14695981039346656037;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(1099511628211);
    }
    h
}

/// Signed hashed bag of words, L2-normalized, in f64.
pub fn oracle_embed(text: &str, dims: usize) -> Vec<f64> {
    let mut v = vec![0.0f64; dims];
    let lower = text.to_lowercase();
    let mut token = String::new();
    let flush = |token: &mut String, v: &mut Vec<f64>| {
        if !token.is_empty() {
            let h = fnv1a(token.as_bytes());
            let sign = if h & (1 << 63) != 0 { -1.0 } else { 1.0 };
            v[(h % dims as u64) as usize] += sign;
            token.clear();
        }
    };
    for c in lower.chars() {
        if c.is_alphanumeric() {
            token.push(c);
        } else {
            flush(&mut token, &mut v);
        }
    }
    flush(&mut token, &mut v);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sample_docs() -> Vec<(String, String)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(data_dir().join("docs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read_to_string(p).unwrap(),
            )
        })
        .collect()
}

/// Chunk ids nearest to `query` by exhaustive cosine, ties by id.
pub fn oracle_nearest_chunks(query: &str, k: usize, dims: usize) -> Vec<String> {
    let q = oracle_embed(query, dims);
    let mut scored: Vec<(f64, String)> = Vec::new();
    for (doc, text) in sample_docs() {
        for c in split_into_chunks(&doc, &text, ChunkParams::default()).unwrap() {
            scored.push((dot(&q, &oracle_embed(&c.text, dims)), c.id()));
        }
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, id)| id).collect()
}

pub fn copy_docs(to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(data_dir().join("docs")).unwrap() {
        let p = entry.unwrap().path();
        std::fs::copy(&p, to.join(p.file_name().unwrap())).unwrap();
    }
}

/// Auth-enabled config on an ephemeral port with the sample docs in place.
pub fn service_config(data: &Path, backend: BackendConfig) -> ServiceConfig {
    copy_docs(&data.join("docs"));
    ServiceConfig {
        listen: "127.0.0.1:0".parse().unwrap(),
        data_dir: data.to_path_buf(),
        auth_enabled: true,
        auth_tokens: vec![TOKEN.to_string()],
        backend,
        ..ServiceConfig::default()
    }
}

/// The bundled mock runner as an external process, logging prompts.
pub fn mock_process(log: &Path, delay_ms: u64) -> BackendConfig {
    BackendConfig::Command {
        program: bin().to_string(),
        args: vec![
            "mock-backend".into(),
            "--log-prompts".into(),
            log.display().to_string(),
            "--delay-ms".into(),
            delay_ms.to_string(),
        ],
    }
}

pub fn read_prompt_log(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap_or_default()
        .lines()
        .map(|l| serde_json::from_str::<String>(l).unwrap())
        .collect()
}
