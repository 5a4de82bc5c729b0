//! ROC curves and AUC for scored change masks.

use crate::error::{Error, Result};
use crate::raster::Raster;

/// Maximum number of thresholds swept; above this, thresholds are
/// quantile-spaced over the sorted unique scores (documented approximation
/// that bounds runtime on large images).
const MAX_THRESHOLDS: usize = 10_000;

/// An ROC curve: (false-positive-rate, true-positive-rate) points ordered by
/// descending threshold, with the trapezoid AUC.
#[derive(Debug, Clone)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweeps thresholds over the score raster against a boolean truth mask.
/// Higher scores must indicate change. Truth must contain both classes.
pub fn roc_curve(scores: &Raster, truth: &[bool]) -> Result<RocCurve> {
    if truth.len() != scores.len() {
        return Err(Error::Input(format!(
            "{} truth values for {} scores",
            truth.len(),
            scores.len()
        )));
    }
    let positives = truth.iter().filter(|&&t| t).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Evaluation(
            "truth mask must contain both changed and unchanged pixels".into(),
        ));
    }
    if scores.data().iter().any(|v| v.is_nan()) {
        return Err(Error::Input("scores contain NaN".into()));
    }

    // pair and sort descending by score
    let mut pairs: Vec<(f32, bool)> = scores
        .data()
        .iter()
        .copied()
        .zip(truth.iter().copied())
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut unique = 0usize;
    let mut last = f32::INFINITY;
    for &(s, _) in &pairs {
        if s != last {
            unique += 1;
            last = s;
        }
    }
    // keep every unique score as a threshold, or quantile-subsample
    let stride = unique.div_ceil(MAX_THRESHOLDS).max(1);

    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut seen = 0usize;
    let mut last = f32::INFINITY;
    for (i, &(s, is_pos)) in pairs.iter().enumerate() {
        if s != last {
            if seen % stride == 0 && seen > 0 {
                points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
            }
            seen += 1;
            last = s;
        }
        if is_pos {
            tp += 1;
        } else {
            fp += 1;
        }
        if i == pairs.len() - 1 {
            points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
        }
    }

    let mut auc = 0.0;
    for w in points.windows(2) {
        let (x1, y1) = w[0];
        let (x2, y2) = w[1];
        auc += (x2 - x1) * (y1 + y2) * 0.5;
    }
    Ok(RocCurve { points, auc })
}
