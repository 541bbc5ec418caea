use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::evaluate::gt::PixelBox;
use crate::scoring::ScoreMap;

/// Default cap on the number of thresholds in a sweep.
pub const MAX_SWEEP_THRESHOLDS: usize = 1000;

/// One 8-connected component of a thresholded score-map frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRegion {
    pub frame: usize,
    /// Row-major pixel indices within the frame, ascending.
    pub pixels: Vec<u32>,
    pub bbox: PixelBox,
    /// Highest score inside the region.
    pub score: f64,
}

impl DetectionRegion {
    /// Builds a region from pixel coordinates; used to describe detections directly.
    pub fn from_box(frame: usize, b: PixelBox, frame_width: usize, score: f64) -> Self {
        let mut pixels = Vec::with_capacity(b.area());
        for y in b.y..b.y + b.h {
            for x in b.x..b.x + b.w {
                pixels.push((y * frame_width + x) as u32);
            }
        }
        Self {
            frame,
            pixels,
            bbox: b,
            score,
        }
    }

    /// Intersection over union between this pixel set and a box.
    pub fn iou(&self, b: &PixelBox, frame_width: usize) -> f64 {
        if !boxes_overlap(&self.bbox, b) {
            return 0.0;
        }
        let inter = self
            .pixels
            .iter()
            .filter(|&&p| {
                let p = p as usize;
                b.contains(p % frame_width, p / frame_width)
            })
            .count();
        let union = self.pixels.len() + b.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

fn boxes_overlap(a: &PixelBox, b: &PixelBox) -> bool {
    a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h
}

/// All regions found at one threshold, over every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDetections {
    pub threshold: f64,
    pub regions: Vec<DetectionRegion>,
}

/// 8-connected components of `mask`, each as ascending row-major pixel indices.
pub fn label_components(mask: &[bool], width: usize, height: usize) -> Vec<Vec<u32>> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(p) = queue.pop_front() {
            comp.push(p as u32);
            let (x, y) = ((p % width) as isize, (p / width) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                        continue;
                    }
                    let q = ny as usize * width + nx as usize;
                    if mask[q] && !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn region_from_pixels(frame: usize, pixels: Vec<u32>, scores: &[f32], width: usize) -> DetectionRegion {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    let mut best = 0f32;
    for &p in &pixels {
        let (x, y) = (p as usize % width, p as usize / width);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x + 1);
        y1 = y1.max(y + 1);
        best = best.max(scores[p as usize]);
    }
    DetectionRegion {
        frame,
        pixels,
        bbox: PixelBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        },
        score: best as f64,
    }
}

/// Regions of `map >= tau` for each threshold.
pub fn extract_detections(map: &ScoreMap, thresholds: &[f64]) -> Vec<ThresholdDetections> {
    let (w, h) = (map.width(), map.height());
    let maxima = map.frame_maxima();
    thresholds
        .iter()
        .map(|&tau| {
            let mut regions = Vec::new();
            for (k, &fmax) in maxima.iter().enumerate() {
                if fmax < tau {
                    continue;
                }
                let scores = map.frame(k);
                let mask: Vec<bool> = scores.iter().map(|&s| s as f64 >= tau).collect();
                for comp in label_components(&mask, w, h) {
                    regions.push(region_from_pixels(k, comp, scores, w));
                }
            }
            ThresholdDetections {
                threshold: tau,
                regions,
            }
        })
        .collect()
}

/// Distinct positive scores of the map, descending; quantile-thinned above `cap`.
///
/// Zero means an exact exemplar match and is never a detection threshold.
pub fn threshold_sweep(map: &ScoreMap, cap: usize) -> Vec<f64> {
    let mut values: Vec<f32> = map.raw().iter().copied().filter(|&s| s > 0.0).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values.dedup();
    let values: Vec<f64> = values.into_iter().map(f64::from).collect();
    if values.len() <= cap || cap == 0 {
        return values;
    }
    let mut out: Vec<f64> = (0..cap)
        .map(|i| {
            let pos = i * (values.len() - 1) / (cap - 1).max(1);
            values[pos]
        })
        .collect();
    out.dedup();
    out
}
