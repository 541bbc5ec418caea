//! Location-dependent exemplar model of a scene.
//!
//! Every grid region keeps its own exemplar set. A feature becomes an
//! exemplar only when it is farther than `th` from every exemplar already
//! stored, so the set grows greedily as nominal video streams in and can be
//! extended later with more video without revisiting what was seen.

mod io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attributes::{FeatureSource, FlowThresholds, VolumeKey};
use crate::error::{Error, Result};
use crate::features::{calibrate_normalizers, feature_distance_unchecked, ComponentDims, FeatureVector, Normalizers};
use crate::ingest::RegionGrid;

pub use io::{load_model, save_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};

pub const DEFAULT_EXEMPLAR_THRESHOLD: f32 = 1.5;

/// Where an exemplar came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub video: u32,
    pub frame_start: u64,
}

/// A feature tagged with the volume it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyedFeature {
    pub key: VolumeKey,
    pub feature: FeatureVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionModel {
    pub region_index: usize,
    exemplars: Vec<FeatureVector>,
    provenance: Vec<Provenance>,
}

impl RegionModel {
    pub fn new(region_index: usize) -> Self {
        Self {
            region_index,
            exemplars: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub(crate) fn from_parts(region_index: usize, exemplars: Vec<FeatureVector>, provenance: Vec<Provenance>) -> Self {
        debug_assert_eq!(exemplars.len(), provenance.len());
        Self {
            region_index,
            exemplars,
            provenance,
        }
    }

    pub fn exemplars(&self) -> &[FeatureVector] {
        &self.exemplars
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    /// Stores `f` if it is farther than `th` from every current exemplar.
    /// Returns whether it was stored.
    pub fn offer(&mut self, f: FeatureVector, prov: Provenance, th: f64, z: &Normalizers) -> bool {
        let novel = self.exemplars.iter().all(|e| feature_distance_unchecked(&f, e, z) > th);
        if novel {
            self.exemplars.push(f);
            self.provenance.push(prov);
        }
        novel
    }
}

/// Greedy selection over one region's ordered stream.
pub fn select_exemplars<I>(region_index: usize, stream: I, th: f64, z: &Normalizers) -> Result<RegionModel>
where
    I: IntoIterator<Item = (FeatureVector, Provenance)>,
{
    let mut rm = RegionModel::new(region_index);
    let mut dims = None;
    for (f, prov) in stream {
        match dims {
            None => dims = Some(f.dims()),
            Some(d) => f.check_dims(&d)?,
        }
        rm.offer(f, prov, th, z);
    }
    Ok(rm)
}

/// Geometry and thresholds shared by every region of a scene model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub grid: RegionGrid,
    pub t: usize,
    pub th: f32,
    pub dims: ComponentDims,
    pub source: FeatureSource,
    pub flow_thresholds: FlowThresholds,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalizerChoice {
    Fixed(Normalizers),
    /// Calibrate on the nominal features themselves, sampling with this seed if needed.
    Calibrate {
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneModel {
    pub grid: RegionGrid,
    pub t: usize,
    pub normalizers: Normalizers,
    pub th: f32,
    pub dims: ComponentDims,
    pub source: FeatureSource,
    pub flow_thresholds: FlowThresholds,
    /// Number of nominal videos absorbed so far; the next one gets this id.
    pub videos_seen: u32,
    /// Effective configuration the model was built with, echoed for provenance.
    pub config: String,
    pub regions: Vec<RegionModel>,
}

impl SceneModel {
    pub fn empty(spec: ModelSpec, normalizers: Normalizers) -> Result<Self> {
        normalizers.validate()?;
        if !(spec.th >= 0.0 && spec.th.is_finite()) {
            return Err(Error::Config(format!("exemplar threshold {} is invalid", spec.th)));
        }
        if spec.t < 2 {
            return Err(Error::Config(format!(
                "temporal extent t = {} leaves no flow pairs inside a volume",
                spec.t
            )));
        }
        let regions = (0..spec.grid.len()).map(RegionModel::new).collect();
        Ok(Self {
            grid: spec.grid,
            t: spec.t,
            normalizers,
            th: spec.th,
            dims: spec.dims,
            source: spec.source,
            flow_thresholds: spec.flow_thresholds,
            videos_seen: 0,
            config: String::new(),
            regions,
        })
    }

    pub fn exemplar_count(&self) -> usize {
        self.regions.iter().map(RegionModel::len).sum()
    }

    pub fn region(&self, index: usize) -> Result<&RegionModel> {
        self.regions.get(index).ok_or_else(|| {
            Error::InvalidInput(format!("region {index} outside grid of {} regions", self.regions.len()))
        })
    }

    /// Continues greedy selection with one more nominal video, in stream order.
    pub fn absorb_video(&mut self, features: &[KeyedFeature]) -> Result<()> {
        let mut per_region: Vec<Vec<&KeyedFeature>> = vec![Vec::new(); self.regions.len()];
        for kf in features {
            kf.feature.check_dims(&self.dims)?;
            let r = kf.key.region_index as usize;
            per_region
                .get_mut(r)
                .ok_or_else(|| {
                    Error::Dimension(format!(
                        "feature for region {r} but the grid has {} regions",
                        self.regions.len()
                    ))
                })?
                .push(kf);
        }
        let video = self.videos_seen;
        let th = self.th as f64;
        let z = self.normalizers;
        self.regions
            .par_iter_mut()
            .zip(per_region.into_par_iter())
            .for_each(|(rm, stream)| {
                for kf in stream {
                    let prov = Provenance {
                        video,
                        frame_start: kf.key.frame_start,
                    };
                    rm.offer(kf.feature.clone(), prov, th, &z);
                }
            });
        self.videos_seen += 1;
        Ok(())
    }
}

/// Builds a model from the feature streams of the nominal videos, in order.
///
/// The exemplar stream runs continuously across videos.
pub fn build_scene_model(
    videos: &[Vec<KeyedFeature>],
    spec: ModelSpec,
    normalizers: NormalizerChoice,
) -> Result<SceneModel> {
    if videos.is_empty() {
        return Err(Error::InvalidInput("at least one nominal video is required".into()));
    }
    let z = match normalizers {
        NormalizerChoice::Fixed(z) => z,
        NormalizerChoice::Calibrate { seed } => {
            let all: Vec<FeatureVector> = videos.iter().flatten().map(|kf| kf.feature.clone()).collect();
            calibrate_normalizers(&all, seed)?
        }
    };
    let mut model = SceneModel::empty(spec, z)?;
    for v in videos {
        model.absorb_video(v)?;
    }
    Ok(model)
}

/// Adds a nominal video to an existing model. Normalizers stay fixed.
pub fn update_scene_model(model: &mut SceneModel, features: &[KeyedFeature]) -> Result<()> {
    model.absorb_video(features)
}
