use std::collections::HashSet;

use super::{check_query, norm_f64, IndexError, Metric, SearchHit, TopK};

/// Tolerance on ‖row‖₂ − 1 accepted for cosine rows.
const UNIT_NORM_TOLERANCE: f64 = 1e-4;

/// Exhaustive exact index over f32 rows stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    dims: usize,
    metric: Metric,
    ids: Vec<String>,
    vectors: Vec<f32>,
}

/// Build a flat index, preserving insertion order.
pub fn build_flat<V: AsRef<[f32]>>(
    dims: usize,
    ids: Vec<String>,
    vectors: &[V],
    metric: Metric,
) -> Result<FlatIndex, IndexError> {
    if ids.len() != vectors.len() {
        return Err(IndexError::CountMismatch {
            ids: ids.len(),
            rows: vectors.len(),
        });
    }
    let mut data = Vec::with_capacity(dims * vectors.len());
    for (id, v) in ids.iter().zip(vectors) {
        data.extend_from_slice(v.as_ref());
        validate_row(dims, metric, id, v.as_ref())?;
    }
    FlatIndex::from_parts(dims, metric, ids, data)
}

fn validate_row(dims: usize, metric: Metric, id: &str, row: &[f32]) -> Result<(), IndexError> {
    if row.len() != dims {
        return Err(IndexError::DimMismatch {
            expected: dims,
            actual: row.len(),
        });
    }
    if row.iter().any(|x| !x.is_finite()) {
        return Err(IndexError::NonFinite(id.to_string()));
    }
    if metric == Metric::Cosine && (norm_f64(row) - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(IndexError::UnnormalizedForCosine(id.to_string()));
    }
    Ok(())
}

pub(crate) fn check_unique(ids: &[String]) -> Result<(), IndexError> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(IndexError::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

impl FlatIndex {
    pub(crate) fn from_parts(
        dims: usize,
        metric: Metric,
        ids: Vec<String>,
        vectors: Vec<f32>,
    ) -> Result<Self, IndexError> {
        if vectors.len() != ids.len() * dims {
            return Err(IndexError::CountMismatch {
                ids: ids.len(),
                rows: vectors.len().checked_div(dims).unwrap_or(0),
            });
        }
        check_unique(&ids)?;
        Ok(Self {
            dims,
            metric,
            ids,
            vectors,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dims..(i + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        // chunks_exact panics on zero width
        self.vectors.chunks_exact(self.dims.max(1)).take(self.ids.len())
    }

    pub(crate) fn raw_vectors(&self) -> &[f32] {
        &self.vectors
    }

    /// Top-`k` rows for `query`, best first.
    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit>, IndexError> {
        check_query(self.dims, query, k)?;
        let mut top = TopK::new(k, self.metric);
        match self.metric {
            Metric::L2 => {
                for (id, row) in self.ids.iter().zip(self.rows()) {
                    top.offer(id, squared_l2(query, row));
                }
            }
            Metric::Cosine => {
                let qn = norm_f64(query);
                for (id, row) in self.ids.iter().zip(self.rows()) {
                    let sim = if qn == 0.0 { 0.0 } else { dot(query, row) / qn };
                    top.offer(id, sim);
                }
            }
        }
        Ok(top.into_hits())
    }
}

pub(crate) fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0f64;
    for (x, y) in a.iter().zip(b) {
        let d = f64::from(*x) - f64::from(*y);
        acc += d * d;
    }
    acc
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0f64;
    for (x, y) in a.iter().zip(b) {
        acc += f64::from(*x) * f64::from(*y);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    #[test]
    fn empty_index_is_valid() {
        let empty: Vec<Vec<f32>> = Vec::new();
        let idx = build_flat(4, vec![], &empty, Metric::L2).unwrap();
        assert!(idx.is_empty());
        assert!(idx.search(&[0.0; 4], 2).unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_rejected() {
        let rows = vec![vec![0.0; 2], vec![1.0; 2]];
        let err = build_flat(2, vec!["a".into(), "a".into()], &rows, Metric::L2).unwrap_err();
        assert!(matches!(err, IndexError::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn shape_checks() {
        let rows = vec![vec![0.0; 4]; 3];
        let idx = build_flat(4, ids(3), &rows, Metric::L2).unwrap();
        assert_eq!((idx.len(), idx.dims()), (3, 4));
        assert!(matches!(
            build_flat(3, ids(3), &rows, Metric::L2),
            Err(IndexError::DimMismatch { expected: 3, actual: 4 })
        ));
        assert!(matches!(
            idx.search(&[0.0; 5], 1),
            Err(IndexError::DimMismatch { .. })
        ));
        assert!(matches!(idx.search(&[0.0; 4], 0), Err(IndexError::InvalidK)));
    }

    #[test]
    fn cosine_requires_unit_rows() {
        let rows = vec![vec![3.0, 4.0]];
        assert!(matches!(
            build_flat(2, ids(1), &rows, Metric::Cosine),
            Err(IndexError::UnnormalizedForCosine(_))
        ));
        let rows = vec![vec![0.6, 0.8]];
        assert!(build_flat(2, ids(1), &rows, Metric::Cosine).is_ok());
    }

    #[test]
    fn exact_match_scores_zero() {
        let rows = vec![vec![1.0, 2.0], vec![5.0, 5.0], vec![-1.0, 0.0]];
        let idx = build_flat(2, ids(3), &rows, Metric::L2).unwrap();
        let hits = idx.search(&[5.0, 5.0], 2).unwrap();
        assert_eq!(hits[0].id, "v1");
        assert_eq!(hits[0].score, 0.0);
        assert_eq!(hits.len(), 2);
        assert_eq!(idx.search(&[5.0, 5.0], 10).unwrap().len(), 3);
    }
}
