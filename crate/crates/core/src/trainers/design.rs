use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Per-column centering and scaling fitted on training rows. The intercept
/// column, and any column with (near) zero spread, keeps scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    pub fn identity(p: usize) -> Self {
        Self { means: vec![0.0; p], scales: vec![1.0; p] }
    }

    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, p: usize, intercept: usize) -> Self {
        let mut n = 0usize;
        let mut means = vec![0.0; p];
        for r in rows.clone() {
            n += 1;
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        if n == 0 {
            return Self::identity(p);
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; p];
        for r in rows {
            for j in 0..p {
                var[j] += (r[j] - means[j]).powi(2);
            }
        }
        let mut scales: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
        for (j, s) in scales.iter_mut().enumerate() {
            if j == intercept || !(*s > 1e-12 * (1.0 + means[j].abs())) {
                *s = 1.0;
            }
        }
        means[intercept] = 0.0;
        Self { means, scales }
    }

    pub fn apply(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            out[j] = (row[j] - self.means[j]) / self.scales[j];
        }
    }

    /// Coefficients on standardized columns to coefficients on raw columns.
    pub fn fold_back(&self, standardized: &[f64], intercept: usize) -> Vec<f64> {
        let mut raw: Vec<f64> = standardized.iter().zip(&self.scales).map(|(b, s)| b / s).collect();
        let shift: f64 = (0..raw.len()).filter(|&j| j != intercept).map(|j| raw[j] * self.means[j]).sum();
        raw[intercept] = standardized[intercept] - shift;
        raw
    }

    /// Inverse of [`fold_back`](Self::fold_back).
    pub fn fold_forward(&self, raw: &[f64], intercept: usize) -> Vec<f64> {
        let mut std: Vec<f64> = raw.iter().zip(&self.scales).map(|(b, s)| b * s).collect();
        let shift: f64 = (0..raw.len()).filter(|&j| j != intercept).map(|j| raw[j] * self.means[j]).sum();
        std[intercept] = raw[intercept] + shift;
        std
    }
}

/// Dense row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn standardized(&self, st: &Standardization) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        data.par_chunks_mut(self.cols.max(1))
            .zip(self.data.par_chunks(self.cols.max(1)))
            .for_each(|(out, row)| st.apply(row, out));
        Matrix { rows: self.rows, cols: self.cols, data }
    }
}

/// Rows per reduction chunk. Chunk partial sums are added in chunk order, so
/// results do not depend on the thread count.
pub(crate) const CHUNK_ROWS: usize = 2048;

/// Sum per-row contributions `(value, gradient)` over fixed chunks.
pub(crate) fn chunked_sum<F>(rows: usize, dim: usize, per_chunk: F) -> crate::Result<(f64, Vec<f64>)>
where
    F: Fn(std::ops::Range<usize>, &mut [f64]) -> crate::Result<f64> + Sync,
{
    let n_chunks = rows.div_ceil(CHUNK_ROWS);
    let parts: Vec<crate::Result<(f64, Vec<f64>)>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let range = c * CHUNK_ROWS..((c + 1) * CHUNK_ROWS).min(rows);
            let mut g = vec![0.0; dim];
            let v = per_chunk(range, &mut g)?;
            Ok((v, g))
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; dim];
    for part in parts {
        let (v, g) = part?;
        total += v;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_back_preserves_linear_predictor() {
        let rows = [vec![1.0, 2.0, -3.0], vec![1.0, 5.0, 0.5], vec![1.0, -1.0, 2.0]];
        let st = Standardization::fit(rows.iter().map(|r| r.as_slice()), 3, 0);
        let b_std = [0.3, -1.2, 0.7];
        let raw = st.fold_back(&b_std, 0);
        for r in &rows {
            let mut z = [0.0; 3];
            st.apply(r, &mut z);
            let lhs: f64 = z.iter().zip(&b_std).map(|(a, b)| a * b).sum();
            let rhs: f64 = r.iter().zip(&raw).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
        let back = st.fold_forward(&raw, 0);
        for (a, b) in back.iter().zip(&b_std) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_columns_keep_unit_scale() {
        let rows = [vec![1.0, 4.0], vec![1.0, 4.0]];
        let st = Standardization::fit(rows.iter().map(|r| r.as_slice()), 2, 0);
        assert_eq!(st.scales, vec![1.0, 1.0]);
        assert_eq!(st.means, vec![0.0, 4.0]);
    }
}
