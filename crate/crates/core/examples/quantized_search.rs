//! Compare exact search with 8-bit and 4-bit scalar-quantized search on
//! synthetic Gaussian vectors: recall against the exact top-k and storage.

use std::collections::HashSet;
use std::error::Error;

use medaide::index::{build_flat, quantize_index, Metric, Scheme, VectorIndex, DEFAULT_CLIP_QUANTILE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> Result<(), Box<dyn Error>> {
    let (n, dims, queries, k) = (5000, 128, 200, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let gaussian = |rng: &mut ChaCha8Rng| -> Vec<f32> {
        (0..dims).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()
    };
    let rows: Vec<Vec<f32>> = (0..n).map(|_| gaussian(&mut rng)).collect();
    let qs: Vec<Vec<f32>> = (0..queries).map(|_| gaussian(&mut rng)).collect();
    let ids: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();

    let flat = build_flat(dims, ids, &rows, Metric::L2)?;
    let truth: Vec<HashSet<String>> = qs
        .iter()
        .map(|q| Ok(flat.search(q, k)?.into_iter().map(|h| h.id).collect()))
        .collect::<Result<_, medaide::index::IndexError>>()?;

    println!("{n} vectors x {dims} dims, {queries} queries, k = {k}");
    for scheme in [Scheme::Flat, Scheme::Q8, Scheme::Q4] {
        let index = match scheme {
            Scheme::Flat => VectorIndex::Flat(flat.clone()),
            s => VectorIndex::Quantized(quantize_index(&flat, s, DEFAULT_CLIP_QUANTILE)?),
        };
        let mut found = 0;
        for (q, t) in qs.iter().zip(&truth) {
            found += index.search(q, k)?.iter().filter(|h| t.contains(&h.id)).count();
        }
        println!(
            "{:<5} recall@{k} = {:.3}  vectors {:>8} B  ratio {:.3}",
            scheme.to_string(),
            found as f64 / (queries * k) as f64,
            index.vector_bytes(),
            index.vector_bytes() as f64 / index.flat_equivalent_bytes() as f64
        );
    }
    Ok(())
}
