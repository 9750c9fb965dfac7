//! Cosine-similarity attention within and across scans.
//!
//! Every softmax accepts a temperature `T`: logits are `s_ij / T`. `T = 1`
//! is the plain softmax of cosine similarities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::FeatureMatrix;
use crate::{Error, Result};

/// Which cloud indexes the rows of an [`AttentionMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSemantics {
    /// Rows and columns both index the same scan.
    SelfCloud,
    /// Rows index the previous scan, columns the current one.
    PreviousFrame,
}

/// Row-major `rows × cols` nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    weights: Vec<f64>,
    rows: usize,
    cols: usize,
    row_semantics: RowSemantics,
    normalized: bool,
}

impl AttentionMatrix {
    /// Validates nonnegativity and, when `normalized`, unit row sums.
    pub fn new(
        weights: Vec<f64>,
        rows: usize,
        cols: usize,
        row_semantics: RowSemantics,
        normalized: bool,
    ) -> Result<Self> {
        crate::error::ensure_same_len("attention buffer/shape", weights.len(), rows * cols)?;
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter("attention weights must be finite and >= 0".into()));
        }
        let m = Self {
            weights,
            rows,
            cols,
            row_semantics,
            normalized,
        };
        if normalized {
            if let Some(i) = (0..rows).find(|&i| (m.row(i).iter().sum::<f64>() - 1.0).abs() > 1e-12) {
                return Err(Error::DegenerateRow(i));
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row_semantics(&self) -> RowSemantics {
        self.row_semantics
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.cols + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

fn check_temperature(temperature: f64) -> Result<()> {
    if temperature > 0.0 && temperature.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "attention temperature must be > 0, got {temperature}"
        )))
    }
}

fn unit_rows(f: &FeatureMatrix) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(f.len() * f.dim());
    for (i, row) in f.rows().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroFeatureRow(i));
        }
        out.extend(row.iter().map(|v| v / norm));
    }
    Ok(out)
}

/// Row-wise softmax of cosine similarities between the rows of `a` and `b`.
fn softmax_cosine(a: &FeatureMatrix, b: &FeatureMatrix, temperature: f64) -> Result<Vec<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    check_temperature(temperature)?;
    let dim = a.dim();
    let ua = unit_rows(a)?;
    let ub = unit_rows(b)?;
    let cols = b.len();
    let mut out = vec![0.0; a.len() * cols];
    if cols == 0 {
        return Ok(out);
    }
    out.par_chunks_mut(cols)
        .zip(ua.par_chunks(dim))
        .for_each(|(dst, ra)| {
            for (d, rb) in dst.iter_mut().zip(ub.chunks_exact(dim)) {
                let cos: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
                *d = cos.clamp(-1.0, 1.0) / temperature;
            }
            softmax_in_place(dst);
        });
    Ok(out)
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for v in row.iter_mut() {
        *v = (*v - max).exp();
    }
    let sum: f64 = row.iter().sum();
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Intra-scan attention at unit temperature.
pub fn self_attention(features: &FeatureMatrix) -> Result<AttentionMatrix> {
    self_attention_with_temperature(features, 1.0)
}

pub fn self_attention_with_temperature(features: &FeatureMatrix, temperature: f64) -> Result<AttentionMatrix> {
    let w = softmax_cosine(features, features, temperature)?;
    Ok(AttentionMatrix {
        weights: w,
        rows: features.len(),
        cols: features.len(),
        row_semantics: RowSemantics::SelfCloud,
        normalized: true,
    })
}

/// Residual aggregation `F + A·F`.
///
/// A row that cancels to exactly zero is replaced by the uniform row
/// `1/sqrt(D)` so downstream cosine similarities stay defined.
pub fn contextualize(features: &FeatureMatrix, attention: &AttentionMatrix) -> Result<FeatureMatrix> {
    let n = features.len();
    if attention.rows != n || attention.cols != n {
        return Err(Error::ShapeMismatch {
            what: "attention/features",
            left: attention.rows.max(attention.cols),
            right: n,
        });
    }
    let dim = features.dim();
    let src = features.data();
    let mut out = vec![0.0; n * dim];
    out.par_chunks_mut(dim).enumerate().for_each(|(i, dst)| {
        dst.copy_from_slice(features.row(i));
        for (a, row) in attention.row(i).iter().zip(src.chunks_exact(dim)) {
            for (d, v) in dst.iter_mut().zip(row) {
                *d += a * v;
            }
        }
        if dst.iter().all(|&v| v == 0.0) {
            dst.fill(1.0 / (dim as f64).sqrt());
        }
    });
    FeatureMatrix::new(out, dim, features.level())
}

/// Attention from the previous scan's rows onto the current scan's rows, at
/// unit temperature.
pub fn cross_attention(feat_prev: &FeatureMatrix, feat_cur: &FeatureMatrix) -> Result<AttentionMatrix> {
    cross_attention_with_temperature(feat_prev, feat_cur, 1.0)
}

pub fn cross_attention_with_temperature(
    feat_prev: &FeatureMatrix,
    feat_cur: &FeatureMatrix,
    temperature: f64,
) -> Result<AttentionMatrix> {
    let w = softmax_cosine(feat_prev, feat_cur, temperature)?;
    Ok(AttentionMatrix {
        weights: w,
        rows: feat_prev.len(),
        cols: feat_cur.len(),
        row_semantics: RowSemantics::PreviousFrame,
        normalized: true,
    })
}

/// Element-wise product of per-level attention matrices. The result is not
/// row-stochastic.
pub fn global_attention(levels: &[AttentionMatrix]) -> Result<AttentionMatrix> {
    let (first, rest) = levels.split_first().ok_or(Error::EmptyLevelList)?;
    let mut weights = first.weights.clone();
    for m in rest {
        if m.rows != first.rows || m.cols != first.cols {
            return Err(Error::ShapeMismatch {
                what: "attention levels",
                left: first.rows * first.cols,
                right: m.rows * m.cols,
            });
        }
        for (w, v) in weights.iter_mut().zip(&m.weights) {
            *w *= v;
        }
    }
    Ok(AttentionMatrix {
        weights,
        rows: first.rows,
        cols: first.cols,
        row_semantics: first.row_semantics,
        normalized: levels.len() == 1 && first.normalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fm(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), 0).unwrap()
    }

    #[test]
    fn identical_rows_give_uniform_attention() {
        let a = self_attention(&fm(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]])).unwrap();
        assert!(a.weights().iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
        assert!(a.is_normalized());
    }

    #[test]
    fn two_orthogonal_rows() {
        let a = self_attention(&fm(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(a.get(0, 0), e / (e + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(a.get(0, 1), 1.0 / (e + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(a.get(0, 0), 0.7311, epsilon = 1e-4);
    }

    #[test]
    fn temperature_sharpens() {
        let f = fm(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let a = self_attention_with_temperature(&f, 0.01).unwrap();
        assert!(a.get(0, 0) > 1.0 - 1e-15);
        assert!(self_attention_with_temperature(&f, 0.0).is_err());
    }

    #[test]
    fn contextualize_one_hot_doubles() {
        let f = fm(&[&[1.0, 2.0], &[3.0, -1.0]]);
        let eye = AttentionMatrix::new(vec![1.0, 0.0, 0.0, 1.0], 2, 2, RowSemantics::SelfCloud, true).unwrap();
        let out = contextualize(&f, &eye).unwrap();
        assert_eq!(out.row(0), &[2.0, 4.0]);
        assert_eq!(out.row(1), &[6.0, -2.0]);
    }

    #[test]
    fn contextualize_uniform_adds_column_mean() {
        let f = fm(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 0.0]]);
        let third = 1.0 / 3.0;
        let u = AttentionMatrix::new(vec![third; 9], 3, 3, RowSemantics::SelfCloud, true).unwrap();
        let out = contextualize(&f, &u).unwrap();
        assert_abs_diff_eq!(out.row(0)[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.row(0)[1], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.row(2)[0], 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.row(2)[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn contextualize_replaces_cancelled_rows() {
        let f = fm(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        let swap = AttentionMatrix::new(vec![0.0, 1.0, 1.0, 0.0], 2, 2, RowSemantics::SelfCloud, true).unwrap();
        let out = contextualize(&f, &swap).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert_eq!(out.row(0), &[s, s]);
        let wrong = AttentionMatrix::new(vec![1.0], 1, 1, RowSemantics::SelfCloud, true).unwrap();
        assert!(matches!(contextualize(&f, &wrong), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn cross_attention_peaks_on_match() {
        let f = fm(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let a = cross_attention(&f, &f).unwrap();
        for i in 0..3 {
            let best = (0..3).max_by(|&x, &y| a.get(i, x).total_cmp(&a.get(i, y))).unwrap();
            assert_eq!(best, i);
        }
        assert_eq!(a.row_semantics(), RowSemantics::PreviousFrame);
    }

    #[test]
    fn cross_attention_shapes_and_errors() {
        let prev = fm(&[&[1.0, 0.0], &[0.3, 0.2]]);
        let cur = fm(&[&[2.0, 2.0], &[2.0, 2.0], &[2.0, 2.0]]);
        let a = cross_attention(&prev, &cur).unwrap();
        assert_eq!((a.rows(), a.cols()), (2, 3));
        assert!(a.weights().iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
        let other = fm(&[&[1.0, 0.0, 0.0]]);
        assert_eq!(cross_attention(&prev, &other), Err(Error::DimensionMismatch(2, 3)));
    }

    #[test]
    fn global_attention_products() {
        let a = AttentionMatrix::new(vec![0.5, 0.5], 1, 2, RowSemantics::PreviousFrame, true).unwrap();
        let b = AttentionMatrix::new(vec![0.8, 0.2], 1, 2, RowSemantics::PreviousFrame, true).unwrap();
        let g = global_attention(&[a.clone(), b]).unwrap();
        assert_abs_diff_eq!(g.get(0, 0), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(g.get(0, 1), 0.1, epsilon = 1e-15);
        assert!(!g.is_normalized());
        assert_eq!(global_attention(std::slice::from_ref(&a)).unwrap(), a);
        let z = AttentionMatrix::new(vec![0.0, 1.0], 1, 2, RowSemantics::PreviousFrame, true).unwrap();
        assert_eq!(global_attention(&[a.clone(), z]).unwrap().get(0, 0), 0.0);
        assert_eq!(global_attention(&[]), Err(Error::EmptyLevelList));
        let wide = AttentionMatrix::new(vec![1.0 / 3.0; 3], 1, 3, RowSemantics::PreviousFrame, false).unwrap();
        assert!(matches!(global_attention(&[a, wide]), Err(Error::ShapeMismatch { .. })));
    }
}
