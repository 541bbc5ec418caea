use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixel units; covers columns `[x, x + w)` and rows `[y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl PixelBox {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthTrack {
    pub track_id: u64,
    /// `(frame, box)` pairs sorted by frame.
    pub boxes: Vec<(usize, PixelBox)>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub tracks: Vec<GroundTruthTrack>,
}

impl GroundTruth {
    pub fn box_count(&self) -> usize {
        self.tracks.iter().map(|t| t.boxes.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.box_count() == 0
    }

    /// Per-frame binary labels: a frame is anomalous when any box lies on it.
    pub fn frame_labels(&self, frame_count: usize) -> Vec<bool> {
        let mut labels = vec![false; frame_count];
        for t in &self.tracks {
            for &(f, _) in &t.boxes {
                if f < frame_count {
                    labels[f] = true;
                }
            }
        }
        labels
    }

    /// Builds tracks from `(track_id, frame, box)` rows, clamping boxes to the frame.
    pub fn from_rows(
        rows: impl IntoIterator<Item = (u64, usize, f64, f64, f64, f64)>,
        frame_dims: (usize, usize),
        frame_count: usize,
    ) -> Result<Self> {
        let (fh, fw) = frame_dims;
        let mut tracks: BTreeMap<u64, Vec<(usize, PixelBox)>> = BTreeMap::new();
        for (track_id, frame, x, y, w, h) in rows {
            if frame >= frame_count {
                return Err(Error::InvalidInput(format!(
                    "track {track_id} annotates frame {frame}, video has {frame_count} frames"
                )));
            }
            if !(w > 0.0 && h > 0.0) || ![x, y, w, h].iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "track {track_id} frame {frame}: box ({x}, {y}, {w}, {h}) is degenerate"
                )));
            }
            let x0 = x.round().clamp(0.0, fw as f64) as usize;
            let y0 = y.round().clamp(0.0, fh as f64) as usize;
            let x1 = (x + w).round().clamp(0.0, fw as f64) as usize;
            let y1 = (y + h).round().clamp(0.0, fh as f64) as usize;
            if x1 <= x0 || y1 <= y0 {
                return Err(Error::InvalidInput(format!(
                    "track {track_id} frame {frame}: box lies outside the {fw}x{fh} frame"
                )));
            }
            tracks.entry(track_id).or_default().push((
                frame,
                PixelBox {
                    x: x0,
                    y: y0,
                    w: x1 - x0,
                    h: y1 - y0,
                },
            ));
        }
        Ok(Self {
            tracks: tracks
                .into_iter()
                .map(|(track_id, mut boxes)| {
                    boxes.sort_by_key(|(f, b)| (*f, b.y, b.x));
                    GroundTruthTrack { track_id, boxes }
                })
                .collect(),
        })
    }
}

/// Parses `track_id,frame,x,y,w,h` records. `#` comments and a non-numeric
/// header line are skipped.
pub fn parse_ground_truth_csv(text: &str, frame_dims: (usize, usize), frame_count: usize) -> Result<GroundTruth> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("ground truth: {e}")))?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if i == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if record.len() != 6 {
            return Err(Error::Format(format!(
                "ground truth line {line}: expected 6 fields, found {}",
                record.len()
            )));
        }
        let bad = |what: &str| Error::Format(format!("ground truth line {line}: bad {what}"));
        let track: u64 = record[0].parse().map_err(|_| bad("track_id"))?;
        let frame: usize = record[1].parse().map_err(|_| bad("frame"))?;
        let mut nums = [0f64; 4];
        for (n, f) in nums.iter_mut().zip(record.iter().skip(2)) {
            *n = f.parse().map_err(|_| bad("box coordinate"))?;
        }
        rows.push((track, frame, nums[0], nums[1], nums[2], nums[3]));
    }
    GroundTruth::from_rows(rows, frame_dims, frame_count)
}
