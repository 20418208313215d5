//! Search latency and storage report for a built index.
//!
//! Latencies are wall-clock per `search` call on this machine; only their
//! ordering (p50 ≤ p95 ≤ p99) is meaningful across hosts.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{IndexError, Metric, Scheme, VectorIndex};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("repetitions must be at least 1")]
    ZeroRepetitions,
    #[error("at least one query is required")]
    NoQueries,
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scheme: Scheme,
    pub metric: Metric,
    pub dims: usize,
    pub count: usize,
    pub k: usize,
    pub queries: usize,
    pub repetitions: usize,
    pub samples: usize,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub mean_us: f64,
    pub resident_bytes: usize,
    /// Stored rows only: f32 matrix or packed codes.
    pub vector_bytes: usize,
    pub flat_equivalent_bytes: usize,
    /// Per-dimension calibration tables (quantized indices only).
    pub metadata_bytes: usize,
    /// `vector_bytes / flat_equivalent_bytes`; 1.0 for flat, 0.25 Q8, 0.125 Q4.
    pub storage_ratio: f64,
}

/// Nearest-rank percentile of an ascending slice: element `ceil(p/100·n)`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Run every query `repetitions` times and summarize.
pub fn run_bench(
    index: &VectorIndex,
    queries: &[Vec<f32>],
    repetitions: usize,
    k: usize,
) -> Result<BenchReport, BenchError> {
    if repetitions == 0 {
        return Err(BenchError::ZeroRepetitions);
    }
    if queries.is_empty() {
        return Err(BenchError::NoQueries);
    }
    let mut samples = Vec::with_capacity(queries.len() * repetitions);
    for _ in 0..repetitions {
        for q in queries {
            let t = Instant::now();
            let hits = index.search(q, k)?;
            samples.push(t.elapsed().as_secs_f64() * 1e6);
            std::hint::black_box(hits);
        }
    }
    samples.sort_by(f64::total_cmp);
    let mean_us = samples.iter().sum::<f64>() / samples.len() as f64;

    let flat_equivalent_bytes = index.flat_equivalent_bytes();
    let vector_bytes = index.vector_bytes();
    Ok(BenchReport {
        scheme: index.scheme(),
        metric: index.metric(),
        dims: index.dims(),
        count: index.len(),
        k,
        queries: queries.len(),
        repetitions,
        samples: samples.len(),
        p50_us: nearest_rank(&samples, 50.0),
        p95_us: nearest_rank(&samples, 95.0),
        p99_us: nearest_rank(&samples, 99.0),
        mean_us,
        resident_bytes: index.resident_bytes(),
        vector_bytes,
        flat_equivalent_bytes,
        metadata_bytes: match index {
            VectorIndex::Flat(_) => 0,
            VectorIndex::Quantized(q) => q.metadata_bytes(),
        },
        storage_ratio: if flat_equivalent_bytes == 0 {
            0.0
        } else {
            vector_bytes as f64 / flat_equivalent_bytes as f64
        },
    })
}

impl BenchReport {
    /// Two-column text table.
    pub fn to_table(&self) -> String {
        let rows = [
            ("scheme", self.scheme.to_string()),
            ("vectors", format!("{} x {}", self.count, self.dims)),
            ("k", self.k.to_string()),
            ("samples", format!("{} ({} queries x {})", self.samples, self.queries, self.repetitions)),
            ("p50", format!("{:.1} us", self.p50_us)),
            ("p95", format!("{:.1} us", self.p95_us)),
            ("p99", format!("{:.1} us", self.p99_us)),
            ("mean", format!("{:.1} us", self.mean_us)),
            ("vector bytes", self.vector_bytes.to_string()),
            ("flat f32 bytes", self.flat_equivalent_bytes.to_string()),
            ("metadata bytes", self.metadata_bytes.to_string()),
            ("resident bytes", self.resident_bytes.to_string()),
            ("storage ratio", format!("{:.4}", self.storage_ratio)),
        ];
        let mut out = String::new();
        for (name, value) in rows {
            out.push_str(&format!("{name:<16}{value}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{build_flat, quantize_index};

    fn index(n: usize, dims: usize) -> crate::index::FlatIndex {
        let rows: Vec<Vec<f32>> = (0..n)
            .map(|i| (0..dims).map(|d| ((i * 31 + d * 7) % 17) as f32 - 8.0).collect())
            .collect();
        let ids = (0..n).map(|i| format!("v{i}")).collect();
        build_flat(dims, ids, &rows, Metric::L2).unwrap()
    }

    #[test]
    fn nearest_rank_definition() {
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank(&s, 50.0), 5.0);
        assert_eq!(nearest_rank(&s, 95.0), 10.0);
        assert_eq!(nearest_rank(&[7.0], 99.0), 7.0);
    }

    #[test]
    fn zero_repetitions_rejected() {
        let idx = VectorIndex::Flat(index(4, 4));
        assert!(matches!(run_bench(&idx, &[vec![0.0; 4]], 0, 2), Err(BenchError::ZeroRepetitions)));
        assert!(matches!(run_bench(&idx, &[], 1, 2), Err(BenchError::NoQueries)));
    }

    #[test]
    fn storage_ratios_and_ordering() {
        let flat = index(50, 16);
        let q = vec![vec![0.5; 16]; 3];
        for (scheme, ratio) in [(Scheme::Q8, 0.25), (Scheme::Q4, 0.125)] {
            let idx = VectorIndex::Quantized(quantize_index(&flat, scheme, 1.0).unwrap());
            let r = run_bench(&idx, &q, 5, 2).unwrap();
            assert_eq!(r.storage_ratio, ratio);
            assert_eq!(r.metadata_bytes, 16 * 8);
            assert!(r.p50_us <= r.p95_us && r.p95_us <= r.p99_us);
            assert_eq!(r.samples, 15);
        }
        let r = run_bench(&VectorIndex::Flat(flat), &q, 1, 2).unwrap();
        assert_eq!(r.storage_ratio, 1.0);
    }
}
