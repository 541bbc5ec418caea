//! Declarative run configuration, read from TOML. Command-line flags override
//! individual fields; the effective configuration is echoed into every output.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vad_core::attributes::FlowThresholds;
use vad_core::evaluate::{CriterionParams, MAX_SWEEP_THRESHOLDS};
use vad_core::ingest::FlowEstimatorParams;
use vad_core::model::DEFAULT_EXEMPLAR_THRESHOLD;
use vad_core::scoring::{DetectOptions, DEFAULT_DECISION_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    /// Side of the square spatial region, in pixels (even).
    pub region_size: usize,
    /// Frames per video volume.
    pub t: usize,
    /// Frame size, needed only when working from imported features alone.
    pub frame_width: Option<usize>,
    pub frame_height: Option<usize>,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            region_size: 32,
            t: 10,
            frame_width: None,
            frame_height: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Exemplar threshold: a feature becomes an exemplar only if it is
    /// farther than this from every existing exemplar of its region.
    pub th: f32,
    pub calibration_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            th: DEFAULT_EXEMPLAR_THRESHOLD,
            calibration_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowSource {
    /// Read `.flo` files when `--flow` is given, otherwise estimate.
    Auto,
    Import,
    Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub source: FlowSource,
    pub th_mot: f64,
    pub th_bkg: f64,
    pub estimator: FlowEstimatorParams,
}

impl Default for FlowConfig {
    fn default() -> Self {
        let th = FlowThresholds::default();
        Self {
            source: FlowSource::Auto,
            th_mot: th.th_mot,
            th_bkg: th.th_bkg,
            estimator: FlowEstimatorParams::default(),
        }
    }
}

impl FlowConfig {
    pub fn thresholds(&self) -> FlowThresholds {
        FlowThresholds {
            th_mot: self.th_mot,
            th_bkg: self.th_bkg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub skip_unchanged: bool,
    pub ncc_min: f64,
    pub sentinel: f64,
    pub decision_threshold: f64,
    /// Score drawn as white in heatmaps; 0 uses the map's maximum.
    pub heatmap_scale: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        let d = DetectOptions::default();
        Self {
            skip_unchanged: d.skip_unchanged,
            ncc_min: d.ncc_min,
            sentinel: d.sentinel,
            decision_threshold: DEFAULT_DECISION_THRESHOLD,
            heatmap_scale: 0.0,
        }
    }
}

impl ScoringConfig {
    pub fn detect_options(&self) -> DetectOptions {
        DetectOptions {
            skip_unchanged: self.skip_unchanged,
            ncc_min: self.ncc_min,
            sentinel: self.sentinel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_min: f64,
    pub track_fraction: f64,
    pub max_fppf: f64,
    pub max_thresholds: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let p = CriterionParams::default();
        Self {
            iou_min: p.iou_min,
            track_fraction: p.track_fraction,
            max_fppf: p.max_fppf,
            max_thresholds: MAX_SWEEP_THRESHOLDS,
        }
    }
}

impl EvalConfig {
    pub fn params(&self) -> CriterionParams {
        CriterionParams {
            iou_min: self.iou_min,
            track_fraction: self.track_fraction,
            max_fppf: self.max_fppf,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub geometry: Geometry,
    pub model: ModelConfig,
    pub flow: FlowConfig,
    pub scoring: ScoringConfig,
    pub eval: EvalConfig,
    /// Not echoed: outputs do not depend on it.
    #[serde(skip_serializing)]
    pub runtime: RuntimeConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("config {}", p.display()))
            }
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if g.region_size == 0 || !g.region_size.is_multiple_of(2) {
            bail!(
                "geometry.region_size must be a positive even number, got {}",
                g.region_size
            );
        }
        if g.t < 2 {
            bail!("geometry.t must be at least 2, got {}", g.t);
        }
        if !(self.model.th >= 0.0 && self.model.th.is_finite()) {
            bail!("model.th must be a finite non-negative number, got {}", self.model.th);
        }
        self.flow.thresholds().validate()?;
        if !(0.0..=1.0).contains(&self.scoring.ncc_min) {
            bail!("scoring.ncc_min must lie in [0, 1], got {}", self.scoring.ncc_min);
        }
        Ok(())
    }

    /// TOML text of the effective configuration.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }
}
