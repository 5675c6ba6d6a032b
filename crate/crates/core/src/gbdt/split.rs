//! Gradient histograms and second-order split search.

use rayon::prelude::*;

use super::bins::BinnedMatrix;
use super::GbdtConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BinStats {
    pub grad: f64,
    pub hess: f64,
    pub count: u32,
}

impl BinStats {
    #[inline]
    fn add(&mut self, grad: f64, hess: f64) {
        self.grad += grad;
        self.hess += hess;
        self.count += 1;
    }

    fn plus(self, o: BinStats) -> BinStats {
        BinStats {
            grad: self.grad + o.grad,
            hess: self.hess + o.hess,
            count: self.count + o.count,
        }
    }

    fn minus(self, o: BinStats) -> BinStats {
        BinStats {
            grad: self.grad - o.grad,
            hess: self.hess - o.hess,
            count: self.count - o.count,
        }
    }

    /// Sums over `rows` in the given order.
    pub fn over_rows(rows: &[u32], grads: &[f64], hess: &[f64]) -> BinStats {
        let mut s = BinStats::default();
        for &r in rows {
            s.add(grads[r as usize], hess[r as usize]);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureHistogram {
    pub feature: usize,
    pub bins: Vec<BinStats>,
}

impl FeatureHistogram {
    /// `self - other`, bin by bin.
    pub fn subtract(&self, other: &FeatureHistogram) -> FeatureHistogram {
        FeatureHistogram {
            feature: self.feature,
            bins: self
                .bins
                .iter()
                .zip(&other.bins)
                .map(|(a, b)| a.minus(*b))
                .collect(),
        }
    }
}

/// Accumulates one histogram per listed feature over `rows`. Features are
/// processed in parallel; each histogram is summed sequentially in row order,
/// so the result does not depend on the thread count.
pub fn build_histograms(
    data: &BinnedMatrix,
    grads: &[f64],
    hess: &[f64],
    rows: &[u32],
    features: &[usize],
) -> Vec<FeatureHistogram> {
    features
        .par_iter()
        .map(|&f| {
            let column = data.column(f);
            let mut bins = vec![BinStats::default(); data.n_bins(f)];
            for &r in rows {
                let r = r as usize;
                bins[column[r] as usize].add(grads[r], hess[r]);
            }
            FeatureHistogram { feature: f, bins }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    /// Rows with bin <= `bin` go left.
    pub bin: u16,
    pub gain: f64,
    pub left: BinStats,
    pub right: BinStats,
}

#[inline]
fn score(g: f64, h: f64, lambda: f64) -> f64 {
    let denom = h + lambda;
    if denom > 0.0 {
        g * g / denom
    } else {
        0.0
    }
}

/// Gains closer than this (relative) count as ties, so summation order
/// cannot flip the lowest-feature, lowest-bin preference.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[inline]
fn beats(gain: f64, incumbent: f64) -> bool {
    gain - incumbent > TIE_TOLERANCE * incumbent.abs()
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-6 * (1.0 + scale)
}

/// Best split over all histograms by
/// `G_L^2/(H_L+l) + G_R^2/(H_R+l) - G_P^2/(H_P+l)`, requiring at least
/// `min_samples_leaf` rows per side and strictly positive gain. Ties (within
/// [`TIE_TOLERANCE`]) go to the lowest feature index, then the lowest bin.
pub fn find_best_split(
    histograms: &[FeatureHistogram],
    parent: &BinStats,
    config: &GbdtConfig,
) -> Result<Option<SplitCandidate>> {
    let lambda = config.lambda_l2;
    let min_leaf = config.min_samples_leaf as u32;
    let parent_score = score(parent.grad, parent.hess, lambda);
    let mut best: Option<SplitCandidate> = None;

    let mut ordered: Vec<&FeatureHistogram> = histograms.iter().collect();
    ordered.sort_by_key(|h| h.feature);
    for hist in ordered {
        let total = hist.bins.iter().fold(BinStats::default(), |a, b| a.plus(*b));
        let scale: f64 = hist.bins.iter().map(|b| b.grad.abs() + b.hess.abs()).sum();
        if total.count != parent.count
            || !close(total.grad, parent.grad, scale)
            || !close(total.hess, parent.hess, scale)
        {
            return Err(Error::Internal(format!(
                "histogram of feature {} sums to ({}, {}, {}) but the node holds ({}, {}, {})",
                hist.feature, total.grad, total.hess, total.count, parent.grad, parent.hess,
                parent.count
            )));
        }
        let mut left = BinStats::default();
        for (b, stats) in hist.bins.iter().enumerate().take(hist.bins.len().saturating_sub(1)) {
            left = left.plus(*stats);
            if left.count < min_leaf {
                continue;
            }
            let right = parent.minus(left);
            if right.count < min_leaf {
                break;
            }
            let gain = score(left.grad, left.hess, lambda) + score(right.grad, right.hess, lambda)
                - parent_score;
            if gain > 0.0 && best.is_none_or(|c| beats(gain, c.gain)) {
                best = Some(SplitCandidate {
                    feature: hist.feature,
                    bin: b as u16,
                    gain,
                    left,
                    right,
                });
            }
        }
    }
    Ok(best)
}
