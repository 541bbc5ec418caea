//! RBDC, TBDC and frame-level AUC from score maps and annotated tracks.

mod criteria;
mod detections;
mod gt;
mod roc;

use serde::{Deserialize, Serialize};

pub use criteria::{curve_area, rbdc_auc, tbdc_auc, CriterionParams, Curve, CurvePoint};
pub use detections::{
    extract_detections, label_components, threshold_sweep, DetectionRegion, ThresholdDetections, MAX_SWEEP_THRESHOLDS,
};
pub use gt::{parse_ground_truth_csv, GroundTruth, GroundTruthTrack, PixelBox};
pub use roc::frame_auc;

use crate::error::Result;
use crate::scoring::ScoreMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub params: CriterionParams,
    pub frames: usize,
    pub gt_tracks: usize,
    pub gt_boxes: usize,
    pub thresholds: usize,
    pub rbdc: Curve,
    pub tbdc: Curve,
    /// Absent when every frame carries the same label.
    pub frame_auc: Option<f64>,
}

/// Runs all three criteria on a score map.
pub fn evaluate_score_map(
    map: &ScoreMap,
    gt: &GroundTruth,
    params: &CriterionParams,
    max_thresholds: usize,
) -> Result<MetricsReport> {
    let taus = threshold_sweep(map, max_thresholds);
    let dets = extract_detections(map, &taus);
    let rbdc = rbdc_auc(&dets, gt, map.frames(), map.width(), params)?;
    let tbdc = tbdc_auc(&dets, gt, map.frames(), map.width(), params)?;
    let frame_auc = frame_auc(&map.frame_maxima(), &gt.frame_labels(map.frames())).ok();
    Ok(MetricsReport {
        params: *params,
        frames: map.frames(),
        gt_tracks: gt.tracks.len(),
        gt_boxes: gt.box_count(),
        thresholds: taus.len(),
        rbdc,
        tbdc,
        frame_auc,
    })
}
