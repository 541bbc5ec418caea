//! Region- and track-based detection criteria.
//!
//! Both criteria plot a detection rate against false positives per frame
//! (FPPF) as the detection threshold sweeps, and report the area under that
//! curve over `FPPF in [0, max_fppf]`, divided by `max_fppf`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::detections::ThresholdDetections;
use crate::evaluate::gt::{GroundTruth, PixelBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriterionParams {
    /// Minimum IoU between a detection region and a ground-truth box.
    pub iou_min: f64,
    /// Fraction of a track's boxes that must be detected (inclusive).
    pub track_fraction: f64,
    /// Upper end of the FPPF axis.
    pub max_fppf: f64,
}

impl Default for CriterionParams {
    fn default() -> Self {
        Self {
            iou_min: 0.1,
            track_fraction: 0.1,
            max_fppf: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub fppf: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub auc: f64,
    /// One point per threshold, in sweep order.
    pub points: Vec<CurvePoint>,
}

/// Detection flag per ground-truth box (flattened in track order) and the
/// number of regions matching no box, at one threshold.
struct Matching {
    detected: Vec<Vec<bool>>,
    false_positives: usize,
}

fn match_threshold(
    det: &ThresholdDetections,
    gt: &GroundTruth,
    by_frame: &[Vec<(usize, usize, PixelBox)>],
    frame_width: usize,
    iou_min: f64,
) -> Matching {
    let mut detected: Vec<Vec<bool>> = gt.tracks.iter().map(|t| vec![false; t.boxes.len()]).collect();
    let mut false_positives = 0;
    for region in &det.regions {
        let mut matched = false;
        if let Some(boxes) = by_frame.get(region.frame) {
            for &(ti, bi, b) in boxes {
                if region.iou(&b, frame_width) >= iou_min {
                    detected[ti][bi] = true;
                    matched = true;
                }
            }
        }
        if !matched {
            false_positives += 1;
        }
    }
    Matching {
        detected,
        false_positives,
    }
}

fn index_by_frame(gt: &GroundTruth, frame_count: usize) -> Vec<Vec<(usize, usize, PixelBox)>> {
    let mut by_frame = vec![Vec::new(); frame_count];
    for (ti, t) in gt.tracks.iter().enumerate() {
        for (bi, &(f, b)) in t.boxes.iter().enumerate() {
            if f < frame_count {
                by_frame[f].push((ti, bi, b));
            }
        }
    }
    by_frame
}

/// Trapezoid area under `(fppf, tpr)` points from `(0, 0)` to `max_fppf`.
///
/// Points are ordered by FPPF (then rate); past the last point the final rate is held.
pub fn curve_area(points: &[CurvePoint], max_fppf: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.fppf, p.tpr)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut area = 0.0;
    let (mut px, mut py) = (0.0, 0.0);
    for (x, y) in pts {
        if x >= max_fppf {
            // px < max_fppf <= x, so the segment has positive width
            let y_at = py + (y - py) * (max_fppf - px) / (x - px);
            area += (max_fppf - px) * (py + y_at) / 2.0;
            return area / max_fppf;
        }
        area += (x - px) * (py + y) / 2.0;
        px = x;
        py = y;
    }
    area += (max_fppf - px) * py;
    area / max_fppf
}

fn validate(gt: &GroundTruth, frame_count: usize, params: &CriterionParams) -> Result<()> {
    if gt.is_empty() {
        return Err(Error::InvalidInput(
            "ground truth has no anomalous regions; the criterion is undefined".into(),
        ));
    }
    if frame_count == 0 {
        return Err(Error::InvalidInput("evaluation needs at least one frame".into()));
    }
    if params.max_fppf.is_nan() || params.max_fppf <= 0.0 {
        return Err(Error::Config(format!(
            "max_fppf must be positive, got {}",
            params.max_fppf
        )));
    }
    Ok(())
}

fn sweep<F>(
    detections: &[ThresholdDetections],
    gt: &GroundTruth,
    frame_count: usize,
    frame_width: usize,
    params: &CriterionParams,
    rate: F,
) -> Result<Curve>
where
    F: Fn(&Matching) -> f64,
{
    validate(gt, frame_count, params)?;
    let by_frame = index_by_frame(gt, frame_count);
    let points: Vec<CurvePoint> = detections
        .iter()
        .map(|det| {
            let m = match_threshold(det, gt, &by_frame, frame_width, params.iou_min);
            CurvePoint {
                threshold: det.threshold,
                fppf: m.false_positives as f64 / frame_count as f64,
                tpr: rate(&m),
            }
        })
        .collect();
    Ok(Curve {
        auc: curve_area(&points, params.max_fppf),
        points,
    })
}

/// Region-based criterion: fraction of ground-truth boxes hit by some region with IoU >= `iou_min`.
pub fn rbdc_auc(
    detections: &[ThresholdDetections],
    gt: &GroundTruth,
    frame_count: usize,
    frame_width: usize,
    params: &CriterionParams,
) -> Result<Curve> {
    let total = gt.box_count() as f64;
    sweep(detections, gt, frame_count, frame_width, params, |m| {
        m.detected.iter().flatten().filter(|&&d| d).count() as f64 / total
    })
}

/// Track-based criterion: fraction of tracks with at least `track_fraction` of their boxes detected.
pub fn tbdc_auc(
    detections: &[ThresholdDetections],
    gt: &GroundTruth,
    frame_count: usize,
    frame_width: usize,
    params: &CriterionParams,
) -> Result<Curve> {
    let fraction = params.track_fraction;
    let tracks: Vec<usize> = gt.tracks.iter().map(|t| t.boxes.len()).collect();
    let n_tracks = tracks.iter().filter(|&&n| n > 0).count() as f64;
    sweep(detections, gt, frame_count, frame_width, params, |m| {
        let hit = m
            .detected
            .iter()
            .zip(&tracks)
            .filter(|(flags, &n)| {
                n > 0 && {
                    let d = flags.iter().filter(|&&f| f).count() as f64;
                    // inclusive, tolerant of 0.1 * 10 style rounding
                    d >= fraction * n as f64 - 1e-9
                }
            })
            .count();
        hit as f64 / n_tracks
    })
}
