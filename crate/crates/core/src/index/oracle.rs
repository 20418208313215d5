use super::{IndexError, Metric, SearchHit};

/// Exhaustive reference search: score every row in f64, sort everything,
/// truncate to `k`. Shares no code with the index search path.
pub fn brute_force_oracle<V: AsRef<[f32]>>(
    ids: &[String],
    vectors: &[V],
    query: &[f32],
    metric: Metric,
    k: usize,
) -> Result<Vec<SearchHit>, IndexError> {
    if k == 0 {
        return Err(IndexError::InvalidK);
    }
    let query_norm = query
        .iter()
        .fold(0f64, |acc, &q| acc + f64::from(q) * f64::from(q))
        .sqrt();

    let mut scored: Vec<(f64, &String)> = Vec::with_capacity(ids.len());
    for (id, v) in ids.iter().zip(vectors) {
        let v = v.as_ref();
        if v.len() != query.len() {
            return Err(IndexError::DimMismatch {
                expected: v.len(),
                actual: query.len(),
            });
        }
        let score = match metric {
            Metric::L2 => v.iter().zip(query).fold(0f64, |acc, (&a, &b)| {
                let d = f64::from(b) - f64::from(a);
                acc + d * d
            }),
            Metric::Cosine => {
                let dot = v
                    .iter()
                    .zip(query)
                    .fold(0f64, |acc, (&a, &b)| acc + f64::from(b) * f64::from(a));
                if query_norm == 0.0 {
                    0.0
                } else {
                    dot / query_norm
                }
            }
        };
        scored.push((score, id));
    }

    scored.sort_by(|(sa, ia), (sb, ib)| {
        let by_score = match metric {
            Metric::L2 => sa.total_cmp(sb),
            Metric::Cosine => sb.total_cmp(sa),
        };
        by_score.then_with(|| ia.cmp(ib))
    });

    Ok(scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (score, id))| SearchHit {
            id: id.clone(),
            score,
            rank: i + 1,
        })
        .collect())
}
