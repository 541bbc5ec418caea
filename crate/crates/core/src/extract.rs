//! Turns videos (frames plus flow) or imported feature tables into ordered
//! per-volume feature streams.

use rayon::prelude::*;

use crate::attributes::{
    builtin_appearance, compute_motion_attributes, AppearanceDescriptor, FeatureTable, FlowThresholds, ImportedRecord,
    VolumeKey,
};
use crate::error::{Error, Result};
use crate::features::{assemble_feature, ComponentDims, FeatureVector, MotionComponents};
use crate::ingest::{
    crop_flow_volume, estimate_flow, window_starts, FlowEstimatorParams, FlowField, FrameSequence, RegionGrid,
    VideoVolume,
};
use crate::model::KeyedFeature;

/// A video together with its flow; `flows[i]` maps frame `i` onto frame `i + 1`.
#[derive(Debug, Clone)]
pub struct VideoInput {
    pub frames: FrameSequence,
    pub flows: Vec<FlowField>,
}

impl VideoInput {
    pub fn new(frames: FrameSequence, flows: Vec<FlowField>) -> Result<Self> {
        if let Some((i, f)) = flows.iter().enumerate().find(|(_, f)| f.dims() != frames.dims()) {
            return Err(Error::Dimension(format!(
                "flow {i} is {:?} but frames are {:?}",
                f.dims(),
                frames.dims()
            )));
        }
        Ok(Self { frames, flows })
    }

    /// Fills in flow with the built-in estimator.
    pub fn with_estimated_flow(frames: FrameSequence, params: &FlowEstimatorParams) -> Result<Self> {
        let flows = estimate_sequence_flow(&frames, params)?;
        Self::new(frames, flows)
    }

    /// Errors with the first frame pair a complete window needs but has no flow for.
    pub fn check_flow_coverage(&self, t: usize) -> Result<()> {
        let windows = self.frames.len() / t;
        if windows == 0 {
            return Ok(());
        }
        let last_needed = (windows - 1) * t + t - 2;
        if self.flows.len() <= last_needed {
            let missing = window_starts(self.frames.len(), t)
                .flat_map(|s| s..s + t - 1)
                .find(|&i| i >= self.flows.len())
                .unwrap_or(last_needed);
            return Err(Error::MissingFlow {
                from: missing,
                to: missing + 1,
            });
        }
        Ok(())
    }
}

pub fn estimate_sequence_flow(frames: &FrameSequence, params: &FlowEstimatorParams) -> Result<Vec<FlowField>> {
    frames
        .frames()
        .par_windows(2)
        .map(|pair| estimate_flow(&pair[0], &pair[1], params))
        .collect()
}

/// Built-in feature of one volume: thumbnail/histogram appearance plus flow attributes.
pub fn builtin_volume_feature(
    volume: &VideoVolume,
    flows: &[FlowField],
    grid: &RegionGrid,
    th: &FlowThresholds,
) -> Result<FeatureVector> {
    let app = builtin_appearance(volume);
    let flow_volume = crop_flow_volume(flows, grid, volume.region_index, volume.frame_start, volume.t())?;
    let motion = compute_motion_attributes(&flow_volume, th)?;
    assemble_feature(
        &app,
        MotionComponents::Builtin(&motion),
        &ComponentDims::builtin(app.app.len()),
    )
}

/// Features of every volume in ingest order: window by window, regions in grid order.
pub fn extract_video_features(
    video: &VideoInput,
    grid: &RegionGrid,
    t: usize,
    th: &FlowThresholds,
) -> Result<Vec<KeyedFeature>> {
    if t < 2 {
        return Err(Error::Config(format!("temporal extent t = {t} must be at least 2")));
    }
    if video.frames.dims() != grid.frame_dims() {
        return Err(Error::Dimension(format!(
            "video frames are {:?}, model grid expects {:?}",
            video.frames.dims(),
            grid.frame_dims()
        )));
    }
    if video.frames.len() < t {
        return Err(Error::InvalidInput(format!(
            "video has {} frames, fewer than t = {t}",
            video.frames.len()
        )));
    }
    video.check_flow_coverage(t)?;
    let keys: Vec<(usize, usize)> = window_starts(video.frames.len(), t)
        .flat_map(|s| (0..grid.len()).map(move |r| (r, s)))
        .collect();
    keys.par_iter()
        .map(|&(region, start)| {
            let volume = VideoVolume::crop(&video.frames, grid, region, start, t);
            Ok(KeyedFeature {
                key: VolumeKey::new(region, start),
                feature: builtin_volume_feature(&volume, &video.flows, grid, th)?,
            })
        })
        .collect()
}

pub fn imported_feature(rec: &ImportedRecord, dims: &ComponentDims) -> Result<FeatureVector> {
    let app = AppearanceDescriptor {
        app: rec.app.clone(),
        source: crate::attributes::FeatureSource::Imported,
    };
    assemble_feature(&app, MotionComponents::Imported(rec), dims)
}

/// Features from an imported table, in ingest order.
pub fn table_features(table: &FeatureTable, grid: &RegionGrid) -> Result<Vec<KeyedFeature>> {
    table
        .records
        .iter()
        .map(|(key, rec)| {
            if key.region_index as usize >= grid.len() {
                return Err(Error::Dimension(format!(
                    "feature record for region {} but the grid has {} regions",
                    key.region_index,
                    grid.len()
                )));
            }
            Ok(KeyedFeature {
                key: *key,
                feature: imported_feature(rec, &table.dims)?,
            })
        })
        .collect()
}
