//! Combined feature vectors and the normalized component distance.
//!
//! Two features are compared component by component: the Euclidean distance
//! of each of `app`, `ang`, `mag` and `bkg` is divided by that component's
//! normalizer and the four quotients are summed. The background flag `cls`
//! takes no part in the sum; a background feature simply has its motion
//! components zeroed when it is assembled.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::{AppearanceDescriptor, ImportedRecord, MotionAttributes, DIRECTION_BINS};
use crate::error::{Error, Result};

/// Sets larger than this are calibrated on `CALIBRATION_PAIR_CAP^2` sampled pairs.
pub const CALIBRATION_PAIR_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    App,
    Ang,
    Mag,
    Bkg,
}

impl Component {
    /// Also the tie-break order when ranking components.
    pub const ALL: [Component; 4] = [Component::App, Component::Ang, Component::Mag, Component::Bkg];

    pub fn name(self) -> &'static str {
        match self {
            Component::App => "app",
            Component::Ang => "ang",
            Component::Mag => "mag",
            Component::Bkg => "bkg",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "app" => Ok(Component::App),
            "ang" => Ok(Component::Ang),
            "mag" => Ok(Component::Mag),
            "bkg" => Ok(Component::Bkg),
            other => Err(Error::InvalidInput(format!("unknown component {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentDims {
    pub app: usize,
    pub ang: usize,
    pub mag: usize,
    pub bkg: usize,
}

impl ComponentDims {
    pub fn builtin(app: usize) -> Self {
        Self {
            app,
            ang: DIRECTION_BINS,
            mag: DIRECTION_BINS,
            bkg: 1,
        }
    }

    pub fn get(&self, c: Component) -> usize {
        match c {
            Component::App => self.app,
            Component::Ang => self.ang,
            Component::Mag => self.mag,
            Component::Bkg => self.bkg,
        }
    }

    /// Width of the flattened vector including the one-element `cls`.
    pub fn total_with_cls(&self) -> usize {
        self.app + self.ang + self.mag + self.bkg + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub app: Vec<f32>,
    pub ang: Vec<f32>,
    pub mag: Vec<f32>,
    pub bkg: Vec<f32>,
    pub cls: bool,
}

impl FeatureVector {
    /// Validates finiteness and applies the background rule: a background
    /// volume carries all-zero motion components.
    pub fn new(app: Vec<f32>, mut ang: Vec<f32>, mut mag: Vec<f32>, mut bkg: Vec<f32>, cls: bool) -> Result<Self> {
        for (c, v) in [
            (Component::App, &app),
            (Component::Ang, &ang),
            (Component::Mag, &mag),
            (Component::Bkg, &bkg),
        ] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite value in {c} component")));
            }
        }
        if cls {
            for v in [&mut ang, &mut mag, &mut bkg] {
                v.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        Ok(Self {
            app,
            ang,
            mag,
            bkg,
            cls,
        })
    }

    pub fn component(&self, c: Component) -> &[f32] {
        match c {
            Component::App => &self.app,
            Component::Ang => &self.ang,
            Component::Mag => &self.mag,
            Component::Bkg => &self.bkg,
        }
    }

    pub fn dims(&self) -> ComponentDims {
        ComponentDims {
            app: self.app.len(),
            ang: self.ang.len(),
            mag: self.mag.len(),
            bkg: self.bkg.len(),
        }
    }

    pub fn check_dims(&self, expected: &ComponentDims) -> Result<()> {
        let got = self.dims();
        if &got != expected {
            return Err(Error::Dimension(format!(
                "feature dims {got:?} differ from model dims {expected:?}"
            )));
        }
        Ok(())
    }
}

/// Motion part of a feature, either computed from flow or read from a feature file.
#[derive(Debug, Clone, Copy)]
pub enum MotionComponents<'a> {
    Builtin(&'a MotionAttributes),
    Imported(&'a ImportedRecord),
}

pub fn assemble_feature(
    appearance: &AppearanceDescriptor,
    motion: MotionComponents<'_>,
    dims: &ComponentDims,
) -> Result<FeatureVector> {
    let f = match motion {
        MotionComponents::Builtin(m) => FeatureVector::new(
            appearance.app.clone(),
            m.ang.iter().map(|&x| x as f32).collect(),
            m.mag.iter().map(|&x| x as f32).collect(),
            vec![m.bkg as f32],
            m.cls,
        )?,
        MotionComponents::Imported(r) => FeatureVector::new(
            appearance.app.clone(),
            r.ang.clone(),
            r.mag.clone(),
            r.bkg.clone(),
            r.cls,
        )?,
    };
    f.check_dims(dims)?;
    Ok(f)
}

/// Per-component scale constants; each divides its component's distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizers {
    pub app: f32,
    pub ang: f32,
    pub mag: f32,
    pub bkg: f32,
}

impl Default for Normalizers {
    fn default() -> Self {
        Self {
            app: 1.0,
            ang: 1.0,
            mag: 1.0,
            bkg: 1.0,
        }
    }
}

impl Normalizers {
    pub fn get(&self, c: Component) -> f32 {
        match c {
            Component::App => self.app,
            Component::Ang => self.ang,
            Component::Mag => self.mag,
            Component::Bkg => self.bkg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for c in Component::ALL {
            let z = self.get(c);
            if !(z > 0.0 && z.is_finite()) {
                return Err(Error::InvalidInput(format!("normalizer Z_{c} = {z} is not positive")));
            }
        }
        Ok(())
    }
}

#[inline]
fn l2(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Euclidean distance between two component vectors.
pub fn component_distance(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "component lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(l2(a, b))
}

/// The four normalized addends `d_A / Z_A` in `Component::ALL` order.
pub fn distance_terms(f1: &FeatureVector, f2: &FeatureVector, z: &Normalizers) -> Result<[f64; 4]> {
    let mut terms = [0.0; 4];
    for (t, c) in terms.iter_mut().zip(Component::ALL) {
        let d =
            component_distance(f1.component(c), f2.component(c)).map_err(|e| Error::Dimension(format!("{c}: {e}")))?;
        *t = d / z.get(c) as f64;
    }
    Ok(terms)
}

pub fn feature_distance(f1: &FeatureVector, f2: &FeatureVector, z: &Normalizers) -> Result<f64> {
    Ok(distance_terms(f1, f2, z)?.iter().sum())
}

/// Distance for features already known to share dims.
#[inline]
pub(crate) fn feature_distance_unchecked(f1: &FeatureVector, f2: &FeatureVector, z: &Normalizers) -> f64 {
    l2(&f1.app, &f2.app) / z.app as f64
        + l2(&f1.ang, &f2.ang) / z.ang as f64
        + l2(&f1.mag, &f2.mag) / z.mag as f64
        + l2(&f1.bkg, &f2.bkg) / z.bkg as f64
}

/// Maximum pairwise distance of each component, in `Component::ALL` order.
///
/// All pairs are used up to `CALIBRATION_PAIR_CAP` features. Beyond that,
/// `CALIBRATION_PAIR_CAP^2` pairs are drawn with a generator seeded by `seed`.
pub fn max_component_distances(features: &[FeatureVector], seed: u64) -> Result<[f64; 4]> {
    if features.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "calibration needs at least 2 features, got {}",
            features.len()
        )));
    }
    let dims = features[0].dims();
    for f in features {
        f.check_dims(&dims)?;
    }
    let mut max = [0f64; 4];
    let mut visit = |a: &FeatureVector, b: &FeatureVector| {
        for (m, c) in max.iter_mut().zip(Component::ALL) {
            let d = l2(a.component(c), b.component(c));
            if d > *m {
                *m = d;
            }
        }
    };
    let n = features.len();
    if n <= CALIBRATION_PAIR_CAP {
        for i in 0..n {
            for j in i + 1..n {
                visit(&features[i], &features[j]);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..CALIBRATION_PAIR_CAP * CALIBRATION_PAIR_CAP {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            visit(&features[i], &features[j]);
        }
    }
    Ok(max)
}

/// Normalizers from the maximum pairwise component distances; a zero maximum becomes 1.
pub fn calibrate_normalizers(features: &[FeatureVector], seed: u64) -> Result<Normalizers> {
    let max = max_component_distances(features, seed)?;
    let guard = |m: f64| if m > 0.0 { m as f32 } else { 1.0 };
    Ok(Normalizers {
        app: guard(max[0]),
        ang: guard(max[1]),
        mag: guard(max[2]),
        bkg: guard(max[3]),
    })
}
