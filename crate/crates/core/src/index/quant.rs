//! Per-dimension affine scalar quantization with quantile clipping.
//!
//! A coordinate `x` in dimension `d` is stored as
//! `round(clamp((x - offset[d]) / scale[d], 0, levels))` and read back as
//! `offset[d] + code * scale[d]`. Calibration picks `offset`/`scale` from
//! the `[1 - q, q]` quantiles of each column so a few outliers do not
//! stretch the grid for everyone else.

use super::flat::{check_unique, FlatIndex};
use super::{check_query, norm_f64, IndexError, Metric, Scheme, SearchHit, TopK};

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub scheme: Scheme,
    pub lower: Vec<f32>,
    pub upper: Vec<f32>,
    pub offset: Vec<f32>,
    pub scale: Vec<f32>,
    /// Columns whose clip range collapsed to a point; every code there is 0.
    pub degenerate: Vec<bool>,
}

/// Linear-interpolated quantile of an ascending slice.
fn quantile(sorted: &[f32], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    f64::from(sorted[lo]) + (f64::from(sorted[hi]) - f64::from(sorted[lo])) * frac
}

/// Fit per-dimension clip bounds and grid parameters for `scheme`.
pub fn calibrate<V: AsRef<[f32]>>(
    vectors: &[V],
    clip_quantile: f64,
    scheme: Scheme,
) -> Result<Calibration, IndexError> {
    if !(clip_quantile > 0.5 && clip_quantile <= 1.0) {
        return Err(IndexError::InvalidQuantile(clip_quantile));
    }
    let first = vectors.first().ok_or(IndexError::EmptyInput)?;
    let dims = first.as_ref().len();
    let levels = f64::from(match scheme {
        Scheme::Flat => Scheme::Q8.levels(),
        s => s.levels(),
    });

    let mut cal = Calibration {
        scheme,
        lower: Vec::with_capacity(dims),
        upper: Vec::with_capacity(dims),
        offset: Vec::with_capacity(dims),
        scale: Vec::with_capacity(dims),
        degenerate: Vec::with_capacity(dims),
    };
    let mut column = Vec::with_capacity(vectors.len());
    for d in 0..dims {
        column.clear();
        for v in vectors {
            let v = v.as_ref();
            if v.len() != dims {
                return Err(IndexError::DimMismatch {
                    expected: dims,
                    actual: v.len(),
                });
            }
            column.push(v[d]);
        }
        column.sort_by(f32::total_cmp);
        let lower = quantile(&column, 1.0 - clip_quantile) as f32;
        let upper = quantile(&column, clip_quantile) as f32;
        let degenerate = upper <= lower;
        let scale = if degenerate {
            1.0
        } else {
            ((f64::from(upper) - f64::from(lower)) / levels) as f32
        };
        // An f32 underflow on a tiny but nonzero range is treated as constant.
        let (scale, degenerate) = if scale > 0.0 { (scale, degenerate) } else { (1.0, true) };
        cal.lower.push(lower);
        cal.upper.push(upper);
        cal.offset.push(lower);
        cal.scale.push(scale);
        cal.degenerate.push(degenerate);
    }
    Ok(cal)
}

impl Calibration {
    pub fn dims(&self) -> usize {
        self.offset.len()
    }

    pub fn encode_coord(&self, d: usize, x: f32) -> u8 {
        if self.degenerate[d] {
            return 0;
        }
        let levels = f64::from(self.scheme.levels());
        let t = (f64::from(x) - f64::from(self.offset[d])) / f64::from(self.scale[d]);
        t.clamp(0.0, levels).round() as u8
    }
}

/// Packed-code index searched asymmetrically: the query stays f32, rows are
/// decoded on the fly.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedIndex {
    scheme: Scheme,
    metric: Metric,
    dims: usize,
    ids: Vec<String>,
    offset: Vec<f32>,
    scale: Vec<f32>,
    codes: Vec<u8>,
}

/// Calibrate on the flat index's rows and encode them with `scheme`.
pub fn quantize_index(
    flat: &FlatIndex,
    scheme: Scheme,
    clip_quantile: f64,
) -> Result<QuantizedIndex, IndexError> {
    if scheme == Scheme::Flat {
        return Err(IndexError::NotQuantized(scheme));
    }
    if flat.is_empty() {
        return Err(IndexError::EmptyInput);
    }
    let rows: Vec<&[f32]> = flat.rows().collect();
    let cal = calibrate(&rows, clip_quantile, scheme)?;
    let dims = flat.dims();
    let row_bytes = scheme.row_bytes(dims);
    let mut codes = vec![0u8; row_bytes * rows.len()];
    for (r, row) in rows.iter().enumerate() {
        let out = &mut codes[r * row_bytes..(r + 1) * row_bytes];
        for (d, &x) in row.iter().enumerate() {
            let code = cal.encode_coord(d, x);
            match scheme {
                Scheme::Q8 => out[d] = code,
                Scheme::Q4 => {
                    if d % 2 == 0 {
                        out[d / 2] |= code & 0x0f;
                    } else {
                        out[d / 2] |= (code & 0x0f) << 4;
                    }
                }
                Scheme::Flat => unreachable!(),
            }
        }
    }
    Ok(QuantizedIndex {
        scheme,
        metric: flat.metric(),
        dims,
        ids: flat.ids().to_vec(),
        offset: cal.offset,
        scale: cal.scale,
        codes,
    })
}

impl QuantizedIndex {
    pub(crate) fn from_parts(
        scheme: Scheme,
        metric: Metric,
        dims: usize,
        ids: Vec<String>,
        offset: Vec<f32>,
        scale: Vec<f32>,
        codes: Vec<u8>,
    ) -> Result<Self, IndexError> {
        let corrupt = |m: &str| IndexError::CorruptPayload(m.to_string());
        if scheme == Scheme::Flat {
            return Err(corrupt("flat is not a quantized scheme"));
        }
        if offset.len() != dims || scale.len() != dims {
            return Err(corrupt("calibration table length"));
        }
        if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) || offset.iter().any(|o| !o.is_finite()) {
            return Err(corrupt("scale must be positive and finite"));
        }
        if codes.len() != ids.len() * scheme.row_bytes(dims) {
            return Err(corrupt("code table length"));
        }
        if scheme == Scheme::Q4 && dims % 2 == 1 {
            let row_bytes = scheme.row_bytes(dims);
            if codes.chunks(row_bytes).any(|row| row[row_bytes - 1] >> 4 != 0) {
                return Err(corrupt("padding nibble set"));
            }
        }
        check_unique(&ids).map_err(|e| IndexError::CorruptPayload(e.to_string()))?;
        Ok(Self {
            scheme,
            metric,
            dims,
            ids,
            offset,
            scale,
            codes,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn dims(&self) -> usize {
        self.dims
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

    pub fn offset(&self) -> &[f32] {
        &self.offset
    }

    pub fn scale(&self) -> &[f32] {
        &self.scale
    }

    /// Packed codes, `row_bytes(dims)` per row.
    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn code_bytes(&self) -> usize {
        self.codes.len()
    }

    /// Calibration tables: an f32 offset and an f32 scale per dimension.
    pub fn metadata_bytes(&self) -> usize {
        self.dims * 8
    }

    pub fn code(&self, row: usize, d: usize) -> u8 {
        let row_bytes = self.scheme.row_bytes(self.dims);
        match self.scheme {
            Scheme::Q8 => self.codes[row * row_bytes + d],
            Scheme::Q4 => {
                let byte = self.codes[row * row_bytes + d / 2];
                if d.is_multiple_of(2) {
                    byte & 0x0f
                } else {
                    byte >> 4
                }
            }
            Scheme::Flat => unreachable!(),
        }
    }

    /// Reconstructed coordinate in f64.
    pub fn decode_coord(&self, row: usize, d: usize) -> f64 {
        f64::from(self.offset[d]) + f64::from(self.code(row, d)) * f64::from(self.scale[d])
    }

    pub fn decode_row(&self, row: usize) -> Vec<f32> {
        (0..self.dims).map(|d| self.decode_coord(row, d) as f32).collect()
    }

    fn decode_row_into(&self, row: usize, out: &mut [f64]) {
        for (d, slot) in out.iter_mut().enumerate() {
            *slot = self.decode_coord(row, d);
        }
    }
}

/// Top-`k` over decoded rows. Cosine scores use the decoded row's own norm
/// since quantization does not preserve unit length.
pub fn search_quantized(
    index: &QuantizedIndex,
    query: &[f32],
    k: usize,
) -> Result<Vec<SearchHit>, IndexError> {
    check_query(index.dims, query, k)?;
    let mut top = TopK::new(k, index.metric);
    let mut decoded = vec![0f64; index.dims];
    let qn = norm_f64(query);
    for (r, id) in index.ids.iter().enumerate() {
        index.decode_row_into(r, &mut decoded);
        let score = match index.metric {
            Metric::L2 => query
                .iter()
                .zip(&decoded)
                .map(|(&q, &v)| (f64::from(q) - v).powi(2))
                .sum(),
            Metric::Cosine => {
                let dot: f64 = query.iter().zip(&decoded).map(|(&q, &v)| f64::from(q) * v).sum();
                let vn = decoded.iter().map(|v| v * v).sum::<f64>().sqrt();
                if qn == 0.0 || vn == 0.0 {
                    0.0
                } else {
                    dot / (qn * vn)
                }
            }
        };
        top.offer(id, score);
    }
    Ok(top.into_hits())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::build_flat;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("r{i:03}")).collect()
    }

    #[test]
    fn no_clip_gives_min_max() {
        let rows = vec![vec![1.0f32, -2.0], vec![3.0, 5.0], vec![2.0, 0.0]];
        let cal = calibrate(&rows, 1.0, Scheme::Q8).unwrap();
        assert_eq!(cal.lower, vec![1.0, -2.0]);
        assert_eq!(cal.upper, vec![3.0, 5.0]);
        assert_eq!(cal.offset, cal.lower);
        assert_eq!(cal.scale[0], (2.0f64 / 255.0) as f32);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let rows = vec![vec![4.5f32, 0.0], vec![4.5, 1.0]];
        let cal = calibrate(&rows, 0.999, Scheme::Q4).unwrap();
        assert_eq!(cal.scale[0], 1.0);
        assert_eq!(cal.offset[0], 4.5);
        assert!(cal.degenerate[0]);
        assert_eq!(cal.encode_coord(0, 4.5), 0);
        assert_eq!(cal.encode_coord(0, 100.0), 0);
    }

    #[test]
    fn quantile_bounds_from_sorted_column() {
        // 0..=10 shuffled; 10th and 90th percentiles by position q*(n-1).
        let col = [7.0f32, 3.0, 10.0, 0.0, 5.0, 1.0, 9.0, 2.0, 8.0, 4.0, 6.0];
        let rows: Vec<Vec<f32>> = col.iter().map(|&x| vec![x]).collect();
        let cal = calibrate(&rows, 0.9, Scheme::Q8).unwrap();
        assert_eq!(cal.lower[0], 1.0);
        assert_eq!(cal.upper[0], 9.0);
        // Outside the clip range saturates.
        assert_eq!(cal.encode_coord(0, 0.0), 0);
        assert_eq!(cal.encode_coord(0, 10.0), 255);
    }

    #[test]
    fn calibrate_errors() {
        let empty: Vec<Vec<f32>> = vec![];
        assert!(matches!(calibrate(&empty, 1.0, Scheme::Q8), Err(IndexError::EmptyInput)));
        let rows = vec![vec![1.0f32]];
        assert!(matches!(calibrate(&rows, 0.5, Scheme::Q8), Err(IndexError::InvalidQuantile(_))));
        assert!(matches!(calibrate(&rows, 1.01, Scheme::Q8), Err(IndexError::InvalidQuantile(_))));
    }

    #[test]
    fn lattice_inputs_round_trip_exactly() {
        // Each column spans 0..=255 in unit steps, so scale is 1.
        let rows: Vec<Vec<f32>> = (0..256)
            .map(|i| vec![i as f32, (255 - i) as f32, ((i * 7) % 256) as f32])
            .collect();
        let flat = build_flat(3, ids(256), &rows, Metric::L2).unwrap();
        let q = quantize_index(&flat, Scheme::Q8, 1.0).unwrap();
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(&q.decode_row(r), row);
        }
    }

    #[test]
    fn q4_packing_layout() {
        let rows = vec![vec![0.0f32, 15.0, 15.0], vec![15.0, 0.0, 0.0]];
        let flat = build_flat(3, ids(2), &rows, Metric::L2).unwrap();
        let q = quantize_index(&flat, Scheme::Q4, 1.0).unwrap();
        assert_eq!(q.code_bytes(), 2 * 2);
        // Low nibble holds the even dimension.
        assert_eq!(q.codes(), &[0xf0, 0x0f, 0x0f, 0x00]);
        assert_eq!(q.code(0, 2), 15);
        assert_eq!(q.decode_row(1), vec![15.0, 0.0, 0.0]);
    }

    #[test]
    fn exact_stored_query_ranks_first() {
        let rows: Vec<Vec<f32>> = (0..20).map(|i| vec![i as f32, (i * i % 17) as f32]).collect();
        let flat = build_flat(2, ids(20), &rows, Metric::L2).unwrap();
        let q = quantize_index(&flat, Scheme::Q8, 1.0).unwrap();
        for r in [0usize, 7, 19] {
            let decoded = q.decode_row(r);
            let hits = search_quantized(&q, &decoded, 2).unwrap();
            assert_eq!(hits[0].id, format!("r{r:03}"));
        }
    }

    #[test]
    fn empty_flat_cannot_be_quantized() {
        let empty: Vec<Vec<f32>> = vec![];
        let flat = build_flat(4, vec![], &empty, Metric::L2).unwrap();
        assert!(matches!(quantize_index(&flat, Scheme::Q8, 1.0), Err(IndexError::EmptyInput)));
    }
}
