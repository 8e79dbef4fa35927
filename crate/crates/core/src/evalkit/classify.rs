use crate::error::{Error, Result};
use serde::Serialize;

/// Fraction of positions where prediction and ground truth agree.
pub fn accuracy<T: PartialEq>(pred: &[T], gt: &[T]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} labels",
            pred.len(),
            gt.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::UndefinedMetric("accuracy over zero samples".into()));
    }
    let hits = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gt.len() as f64)
}

/// Accuracy of a two-way (state change / no state change) classifier.
pub fn binary_accuracy(pred: &[bool], gt: &[bool]) -> Result<f64> {
    accuracy(pred, gt)
}

/// Temporal error in seconds between a predicted and a true keyframe index.
pub fn pnr_error(pred_frame: usize, gt_frame: usize, clip_fps: f64) -> Result<f64> {
    if !(clip_fps.is_finite() && clip_fps > 0.0) {
        return Err(Error::InvalidInput(format!("fps must be positive, got {clip_fps}")));
    }
    Ok(pred_frame.abs_diff(gt_frame) as f64 / clip_fps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PnrSummary {
    pub mean: f64,
    pub median: f64,
    pub count: usize,
}

/// Mean and median of per-clip localisation errors.
pub fn summarize_pnr(errors: &[f64]) -> Result<PnrSummary> {
    if errors.is_empty() {
        return Err(Error::UndefinedMetric("PNR error over zero clips".into()));
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    };
    Ok(PnrSummary {
        mean,
        median,
        count: errors.len(),
    })
}
