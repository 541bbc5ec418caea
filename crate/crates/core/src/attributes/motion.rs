use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::FlowField;

pub const DIRECTION_BINS: usize = 12;

/// Cutoffs that separate moving pixels from stationary ones and motion volumes from background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowThresholds {
    /// A pixel moves when its flow magnitude is at least this many px/frame.
    pub th_mot: f64,
    /// A volume is background when its stationary fraction is at least this.
    pub th_bkg: f64,
}

impl Default for FlowThresholds {
    fn default() -> Self {
        Self {
            th_mot: 1.0,
            th_bkg: 0.99,
        }
    }
}

impl FlowThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.th_mot.is_nan() || self.th_mot <= 0.0 {
            return Err(Error::Config(format!("th_mot must be positive, got {}", self.th_mot)));
        }
        if !(self.th_bkg > 0.0 && self.th_bkg <= 1.0) {
            return Err(Error::Config(format!("th_bkg must lie in (0, 1], got {}", self.th_bkg)));
        }
        Ok(())
    }
}

/// Interpretable motion description of one volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionAttributes {
    /// Fraction of all pixels moving in each 30 degree direction.
    pub ang: [f64; DIRECTION_BINS],
    /// Mean flow magnitude of the pixels in each direction bin, px/frame.
    pub mag: [f64; DIRECTION_BINS],
    /// Fraction of stationary pixels.
    pub bkg: f64,
    /// True when the volume is classified as background.
    pub cls: bool,
}

/// Direction bin of a moving flow vector. Image y points down; bin 0 covers `[0, pi/6)`.
#[inline]
pub fn direction_bin(u: f64, v: f64) -> usize {
    let mut angle = v.atan2(u);
    if angle < 0.0 {
        angle += 2.0 * PI;
    }
    ((angle / (PI / 6.0)) as usize).min(DIRECTION_BINS - 1)
}

/// Pools every pixel of every field into one 13-bin histogram plus per-bin mean speeds.
pub fn compute_motion_attributes(flows: &[FlowField], th: &FlowThresholds) -> Result<MotionAttributes> {
    let first = flows
        .first()
        .ok_or_else(|| Error::InvalidInput("motion attributes need at least one flow field".into()))?;
    if first.width() * first.height() == 0 {
        return Err(Error::InvalidInput("flow volume has no pixels".into()));
    }
    if let Some(f) = flows.iter().find(|f| f.dims() != first.dims()) {
        return Err(Error::Dimension(format!(
            "flow volume mixes {:?} and {:?} fields",
            first.dims(),
            f.dims()
        )));
    }

    let mut counts = [0u64; DIRECTION_BINS];
    let mut speed_sums = [0f64; DIRECTION_BINS];
    let mut stationary = 0u64;
    for f in flows {
        for (&u, &v) in f.u().iter().zip(f.v()) {
            let (u, v) = (u as f64, v as f64);
            let m = u.hypot(v);
            if m < th.th_mot {
                stationary += 1;
            } else {
                let b = direction_bin(u, v);
                counts[b] += 1;
                speed_sums[b] += m;
            }
        }
    }

    let total = (flows.len() * first.width() * first.height()) as f64;
    let mut ang = [0.0; DIRECTION_BINS];
    let mut mag = [0.0; DIRECTION_BINS];
    for b in 0..DIRECTION_BINS {
        ang[b] = counts[b] as f64 / total;
        if counts[b] > 0 {
            mag[b] = speed_sums[b] / counts[b] as f64;
        }
    }
    let bkg = stationary as f64 / total;
    Ok(MotionAttributes {
        ang,
        mag,
        bkg,
        cls: bkg >= th.th_bkg,
    })
}
