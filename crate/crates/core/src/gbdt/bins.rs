//! Histogram discretization of feature columns.

use crate::error::{Error, Result};
use crate::preprocess::FeatureMatrix;

/// Per-feature strictly increasing thresholds. A value's bin is the number of
/// thresholds strictly below it, so bin `b` covers `(t[b-1], t[b]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMapper {
    thresholds: Vec<Vec<f64>>,
}

/// Binned training data, column-major.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    rows: usize,
    bins: Vec<u16>,
    n_bins: Vec<usize>,
}

impl BinnedMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.n_bins.len()
    }

    pub fn column(&self, feature: usize) -> &[u16] {
        &self.bins[feature * self.rows..(feature + 1) * self.rows]
    }

    #[inline]
    pub fn get(&self, row: usize, feature: usize) -> u16 {
        self.bins[feature * self.rows + row]
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.n_bins[feature]
    }
}

/// A cut point in `[lo, hi)`, as close to the middle as rounding allows.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi || !m.is_finite() {
        lo
    } else {
        m
    }
}

fn feature_thresholds(mut values: Vec<f64>, max_bins: usize) -> Vec<f64> {
    values.retain(|v| !v.is_nan());
    values.sort_by(f64::total_cmp);
    let mut distinct: Vec<f64> = values.clone();
    distinct.dedup();
    if distinct.len() <= max_bins {
        return distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect();
    }
    // approximate quantiles: cut after the value holding each target rank
    let n = values.len();
    let mut out: Vec<f64> = Vec::with_capacity(max_bins - 1);
    for j in 1..max_bins {
        let rank = ((j * n) as f64 / max_bins as f64).round() as usize;
        if rank == 0 || rank >= n {
            continue;
        }
        let v = values[rank - 1];
        let next = values[rank..].iter().find(|&&x| x > v);
        if let Some(&next) = next {
            let t = midpoint(v, next);
            if out.last().is_none_or(|&last| t > last) {
                out.push(t);
            }
        }
    }
    out
}

impl BinMapper {
    /// Quantile thresholds per column; columns with at most `max_bins`
    /// distinct values are binned exactly.
    pub fn build(matrix: &FeatureMatrix, max_bins: usize) -> BinMapper {
        let max_bins = max_bins.clamp(2, usize::from(u16::MAX) + 1);
        let thresholds = (0..matrix.cols())
            .map(|c| feature_thresholds(matrix.column(c).collect(), max_bins))
            .collect();
        BinMapper { thresholds }
    }

    pub fn from_thresholds(thresholds: Vec<Vec<f64>>) -> Result<BinMapper> {
        for (f, t) in thresholds.iter().enumerate() {
            if t.len() > usize::from(u16::MAX) {
                return Err(Error::Structural(format!("feature {f}: too many thresholds")));
            }
            if t.iter().any(|x| !x.is_finite()) || t.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Structural(format!(
                    "feature {f}: thresholds must be finite and strictly increasing"
                )));
            }
        }
        Ok(BinMapper { thresholds })
    }

    pub fn n_features(&self) -> usize {
        self.thresholds.len()
    }

    pub fn thresholds(&self, feature: usize) -> &[f64] {
        &self.thresholds[feature]
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.thresholds[feature].len() + 1
    }

    #[inline]
    pub fn bin(&self, feature: usize, x: f64) -> u16 {
        self.thresholds[feature].partition_point(|&t| t < x) as u16
    }

    pub fn bin_matrix(&self, matrix: &FeatureMatrix) -> BinnedMatrix {
        let (rows, cols) = (matrix.rows(), matrix.cols());
        let mut bins = vec![0u16; rows * cols];
        for f in 0..cols {
            let out = &mut bins[f * rows..(f + 1) * rows];
            for (r, slot) in out.iter_mut().enumerate() {
                *slot = self.bin(f, matrix.get(r, f));
            }
        }
        BinnedMatrix {
            rows,
            bins,
            n_bins: (0..cols).map(|f| self.n_bins(f)).collect(),
        }
    }
}
