//! Anomaly scoring of test volumes and pixelwise score maps.

use std::io::Write;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attributes::VolumeKey;
use crate::error::{Error, Result};
use crate::extract::{builtin_volume_feature, VideoInput};
use crate::features::{feature_distance_unchecked, FeatureVector, Normalizers};
use crate::ingest::{window_starts, RegionGrid, VideoVolume};
use crate::model::{KeyedFeature, RegionModel, SceneModel};

/// Score assigned to volumes of regions that never saw nominal data.
pub const DEFAULT_SENTINEL: f64 = 10.0;
pub const DEFAULT_NCC_MIN: f64 = 0.995;
pub const DEFAULT_DECISION_THRESHOLD: f64 = 1.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeScore {
    pub region_index: usize,
    pub frame_start: usize,
    pub score: f64,
    /// Index into the region's exemplars; `None` for a region without exemplars.
    pub nearest_exemplar: Option<usize>,
}

/// Minimum distance to the region's exemplars, with the first minimizer.
pub fn score_volume(
    f: &FeatureVector,
    rm: &RegionModel,
    z: &Normalizers,
    sentinel: f64,
) -> Result<(f64, Option<usize>)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, e) in rm.exemplars().iter().enumerate() {
        if i == 0 {
            f.check_dims(&e.dims())?;
        }
        let d = feature_distance_unchecked(f, e, z);
        if best.is_none_or(|(b, _)| d < b) {
            best = Some((d, i));
        }
    }
    Ok(match best {
        Some((d, i)) => (d, Some(i)),
        None => (sentinel, None),
    })
}

/// Per-frame `H x W` scores. Each pixel holds the max over the volumes covering it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    width: usize,
    height: usize,
    frames: usize,
    scores: Vec<f32>,
}

impl ScoreMap {
    pub fn new(frames: usize, height: usize, width: usize) -> Self {
        Self {
            width,
            height,
            frames,
            scores: vec![0.0; frames * height * width],
        }
    }

    pub fn from_raw(frames: usize, height: usize, width: usize, scores: Vec<f32>) -> Result<Self> {
        if scores.len() != frames * height * width {
            return Err(Error::Dimension(format!(
                "score map {frames}x{height}x{width} needs {} values, got {}",
                frames * height * width,
                scores.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidInput(
                "score map holds negative or non-finite scores".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            frames,
            scores,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn frame(&self, k: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.scores[k * n..(k + 1) * n]
    }

    pub fn get(&self, k: usize, y: usize, x: usize) -> f32 {
        self.scores[(k * self.height + y) * self.width + x]
    }

    pub fn raw(&self) -> &[f32] {
        &self.scores
    }

    /// Highest score of each frame.
    pub fn frame_maxima(&self) -> Vec<f64> {
        (0..self.frames)
            .map(|k| self.frame(k).iter().fold(0f32, |m, &s| m.max(s)) as f64)
            .collect()
    }

    /// Raises every in-frame pixel of the volume to at least its score.
    pub fn accumulate(&mut self, vs: &VolumeScore, grid: &RegionGrid, t: usize) {
        let (x0, y0, x1, y1) = grid.clipped_bounds(vs.region_index);
        let s = vs.score as f32;
        let end = (vs.frame_start + t).min(self.frames);
        for k in vs.frame_start..end {
            for y in y0..y1.min(self.height) {
                let row = (k * self.height + y) * self.width;
                for p in &mut self.scores[row + x0..row + x1.min(self.width)] {
                    if s > *p {
                        *p = s;
                    }
                }
            }
        }
    }

    /// Pixelwise max of two maps of equal shape.
    pub fn merge_max(&mut self, other: &ScoreMap) -> Result<()> {
        if (self.frames, self.height, self.width) != (other.frames, other.height, other.width) {
            return Err(Error::Dimension("score maps differ in shape".into()));
        }
        for (a, b) in self.scores.iter_mut().zip(&other.scores) {
            *a = a.max(*b);
        }
        Ok(())
    }
}

pub fn accumulate(map: &mut ScoreMap, vs: &VolumeScore, grid: &RegionGrid, t: usize) {
    map.accumulate(vs, grid, t);
}

/// Zero-mean normalized cross-correlation over every byte of two volumes.
///
/// Returns `None` when either volume has zero variance.
pub fn volume_ncc(a: &VideoVolume, b: &VideoVolume) -> Option<f64> {
    let (pa, pb) = (a.pixels(), b.pixels());
    if pa.len() != pb.len() || pa.is_empty() {
        return None;
    }
    let n = pa.len() as f64;
    let ma = pa.iter().map(|&x| x as f64).sum::<f64>() / n;
    let mb = pb.iter().map(|&x| x as f64).sum::<f64>() / n;
    let (mut num, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in pa.iter().zip(pb) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        num += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(num / (va.sqrt() * vb.sqrt()))
}

/// True when `cur` is close enough to `prev` to reuse its score.
pub fn volume_unchanged(cur: &VideoVolume, prev: &VideoVolume, ncc_min: f64) -> bool {
    if cur.pixels().len() != prev.pixels().len() {
        return false;
    }
    match volume_ncc(cur, prev) {
        Some(ncc) => ncc >= ncc_min,
        None => {
            let constant = |v: &VideoVolume| v.pixels().iter().all(|&p| p == v.pixels()[0]);
            if constant(cur) && constant(prev) {
                cur.pixels()[0] == prev.pixels()[0]
            } else {
                // a constant volume against a textured one correlates at 0
                0.0 >= ncc_min
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectOptions {
    pub skip_unchanged: bool,
    pub ncc_min: f64,
    pub sentinel: f64,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            skip_unchanged: true,
            ncc_min: DEFAULT_NCC_MIN,
            sentinel: DEFAULT_SENTINEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub map: ScoreMap,
    pub volume_scores: Vec<VolumeScore>,
    /// Volumes whose feature vector was actually computed.
    pub feature_computations: usize,
    /// Volumes that reused the previous window's score.
    pub reused: usize,
}

fn check_model_grid(model: &SceneModel, dims: (usize, usize)) -> Result<()> {
    if dims != model.grid.frame_dims() {
        return Err(Error::Dimension(format!(
            "test frames are {dims:?}, model grid expects {:?}",
            model.grid.frame_dims()
        )));
    }
    Ok(())
}

fn assemble(model: &SceneModel, frames: usize, volume_scores: Vec<VolumeScore>) -> ScoreMap {
    let (h, w) = model.grid.frame_dims();
    let covered = frames / model.t * model.t;
    let mut map = ScoreMap::new(covered, h, w);
    for vs in &volume_scores {
        map.accumulate(vs, &model.grid, model.t);
    }
    map
}

/// Scores every volume of a test video against a built-in-feature model.
pub fn detect(video: &VideoInput, model: &SceneModel, opts: &DetectOptions) -> Result<Detection> {
    check_model_grid(model, video.frames.dims())?;
    if video.frames.len() < model.t {
        return Err(Error::InvalidInput(format!(
            "test video has {} frames, fewer than t = {}",
            video.frames.len(),
            model.t
        )));
    }
    video.check_flow_coverage(model.t)?;
    let grid = &model.grid;
    let mut prev: Vec<Option<(VideoVolume, VolumeScore)>> = vec![None; grid.len()];
    let mut volume_scores = Vec::new();
    let mut computed = 0;
    let mut reused = 0;
    for start in window_starts(video.frames.len(), model.t) {
        let results: Vec<Result<(VideoVolume, VolumeScore, bool)>> = (0..grid.len())
            .into_par_iter()
            .map(|r| {
                let volume = VideoVolume::crop(&video.frames, grid, r, start, model.t);
                if opts.skip_unchanged {
                    if let Some((pv, ps)) = &prev[r] {
                        if volume_unchanged(&volume, pv, opts.ncc_min) {
                            let vs = VolumeScore {
                                frame_start: start,
                                ..*ps
                            };
                            return Ok((volume, vs, false));
                        }
                    }
                }
                let f = builtin_volume_feature(&volume, &video.flows, grid, &model.flow_thresholds)?;
                f.check_dims(&model.dims)?;
                let (score, nearest) = score_volume(&f, &model.regions[r], &model.normalizers, opts.sentinel)?;
                let vs = VolumeScore {
                    region_index: r,
                    frame_start: start,
                    score,
                    nearest_exemplar: nearest,
                };
                Ok((volume, vs, true))
            })
            .collect();
        for (r, res) in results.into_iter().enumerate() {
            let (volume, vs, fresh) = res?;
            if fresh {
                computed += 1;
            } else {
                reused += 1;
            }
            volume_scores.push(vs);
            prev[r] = Some((volume, vs));
        }
    }
    let map = assemble(model, video.frames.len(), volume_scores.clone());
    Ok(Detection {
        map,
        volume_scores,
        feature_computations: computed,
        reused,
    })
}

/// Scores precomputed features (e.g. imported ones) of a test video with `frame_count` frames.
pub fn detect_features(
    features: &[KeyedFeature],
    frame_count: usize,
    model: &SceneModel,
    opts: &DetectOptions,
) -> Result<Detection> {
    let volume_scores: Vec<VolumeScore> = features
        .par_iter()
        .map(|kf| {
            kf.feature.check_dims(&model.dims)?;
            let r = kf.key.region_index as usize;
            let rm = model.region(r)?;
            let (score, nearest) = score_volume(&kf.feature, rm, &model.normalizers, opts.sentinel)?;
            Ok(VolumeScore {
                region_index: r,
                frame_start: kf.key.frame_start as usize,
                score,
                nearest_exemplar: nearest,
            })
        })
        .collect::<Result<_>>()?;
    let map = assemble(model, frame_count, volume_scores.clone());
    Ok(Detection {
        map,
        volume_scores,
        feature_computations: features.len(),
        reused: 0,
    })
}

impl Detection {
    pub fn score_of(&self, key: VolumeKey) -> Option<&VolumeScore> {
        self.volume_scores
            .iter()
            .find(|vs| vs.region_index == key.region_index as usize && vs.frame_start as u64 == key.frame_start)
    }
}

/// Description of a score map directory, stored as `index.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMapIndex {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub files: Vec<String>,
    /// Free-form provenance, typically the effective configuration.
    #[serde(default)]
    pub config: String,
}

pub const SCORE_INDEX_FILE: &str = "index.json";

/// Writes one little-endian `f32` grid per frame (`scores_NNNNNN.f32`) and `index.json`.
pub fn write_score_maps(map: &ScoreMap, dir: &Path, config: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(map.frames);
    for k in 0..map.frames {
        let name = format!("scores_{k:06}.f32");
        let mut buf = Vec::with_capacity(map.width * map.height * 4);
        for &s in map.frame(k) {
            buf.write_f32::<LittleEndian>(s)?;
        }
        std::fs::write(dir.join(&name), buf)?;
        files.push(name);
    }
    let index = ScoreMapIndex {
        width: map.width,
        height: map.height,
        frames: map.frames,
        files,
        config: config.to_string(),
    };
    let mut f = std::fs::File::create(dir.join(SCORE_INDEX_FILE))?;
    serde_json::to_writer_pretty(&mut f, &index).map_err(|e| Error::Format(e.to_string()))?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_score_maps(dir: &Path) -> Result<ScoreMap> {
    let index_path = dir.join(SCORE_INDEX_FILE);
    let text = std::fs::read_to_string(&index_path).map_err(|e| Error::ingest(&index_path, e.to_string()))?;
    let index: ScoreMapIndex =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", index_path.display())))?;
    if index.files.len() != index.frames {
        return Err(Error::Format(format!(
            "index lists {} files for {} frames",
            index.files.len(),
            index.frames
        )));
    }
    let n = index.width * index.height;
    let mut scores = Vec::with_capacity(n * index.frames);
    for name in &index.files {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::ingest(&path, e.to_string()))?;
        if bytes.len() != 4 * n {
            return Err(Error::Format(format!(
                "{} holds {} bytes, expected {}",
                path.display(),
                bytes.len(),
                4 * n
            )));
        }
        let mut rdr = bytes.as_slice();
        for _ in 0..n {
            scores.push(rdr.read_f32::<LittleEndian>()?);
        }
    }
    ScoreMap::from_raw(index.frames, index.height, index.width, scores)
}

/// 8-bit grayscale heatmaps, one PNG per frame; `scale` maps to white.
pub fn write_heatmaps(map: &ScoreMap, dir: &Path, scale: f64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for k in 0..map.frames {
        let pixels: Vec<u8> = map
            .frame(k)
            .iter()
            .map(|&s| ((s as f64 / scale).clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let img =
            image::GrayImage::from_raw(map.width as u32, map.height as u32, pixels).expect("buffer sized from the map");
        let path = dir.join(format!("heat_{k:06}.png"));
        img.save(&path)
            .map_err(|e| Error::ingest(&path, format!("cannot encode heatmap: {e}")))?;
    }
    Ok(())
}
