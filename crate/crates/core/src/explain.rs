//! Attribute panels and explanations of anomaly decisions.
//!
//! A panel shows what the model believes about a volume: direction
//! histogram, per-direction speed, stationary fraction and background flag,
//! plus class probabilities when an attribute head for imported appearance
//! embeddings is supplied. An explanation sets the panel of a test volume
//! beside the panel of its nearest exemplar and splits the anomaly score into
//! its four normalized component terms.

use std::fmt;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::attributes::DIRECTION_BINS;
use crate::error::{Error, Result};
use crate::features::{distance_terms, Component, FeatureVector, Normalizers};
use crate::model::{Provenance, RegionModel};
use crate::scoring::DEFAULT_DECISION_THRESHOLD;

/// Class probabilities below this are reported as "unknown".
pub const UNKNOWN_CLASS_CUTOFF: f64 = 0.5;

/// `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LinearLayer {
    fn check(&self, inputs: usize, outputs: Option<usize>, what: &str) -> Result<()> {
        if self.weights.len() != self.bias.len() {
            return Err(Error::Dimension(format!(
                "{what} head has {} rows but {} biases",
                self.weights.len(),
                self.bias.len()
            )));
        }
        if let Some(o) = outputs {
            if self.weights.len() != o {
                return Err(Error::Dimension(format!(
                    "{what} head has {} outputs, expected {o}",
                    self.weights.len()
                )));
            }
        }
        if let Some(row) = self.weights.iter().find(|r| r.len() != inputs) {
            return Err(Error::Dimension(format!(
                "{what} head rows take {} inputs, component has {inputs}",
                row.len()
            )));
        }
        Ok(())
    }

    fn apply(&self, x: &[f32]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, &v)| w * v as f64).sum::<f64>() + b)
            .collect()
    }
}

/// Linear read-outs from imported embeddings to interpretable attributes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttributeHead {
    #[serde(default)]
    pub class_names: Vec<String>,
    #[serde(default)]
    pub class: Option<LinearLayer>,
    #[serde(default)]
    pub ang: Option<LinearLayer>,
    #[serde(default)]
    pub mag: Option<LinearLayer>,
    #[serde(default)]
    pub bkg: Option<LinearLayer>,
}

impl AttributeHead {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("attribute head: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::ingest(path, e.to_string()))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributePanel {
    /// `(class, probability)`; only present when a class head was supplied.
    pub class_probs: Option<Vec<(String, f64)>>,
    pub direction_hist: Vec<f64>,
    /// Mean speed per direction bin, px/frame.
    pub speed: Vec<f64>,
    pub background_fraction: f64,
    pub stationary: bool,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn read_out(layer: Option<&LinearLayer>, x: &[f32], outputs: usize, what: &str) -> Result<Vec<f64>> {
    match layer {
        Some(l) => {
            l.check(x.len(), Some(outputs), what)?;
            Ok(l.apply(x))
        }
        None if x.len() == outputs => Ok(widen(x)),
        None => Err(Error::Dimension(format!(
            "{what} component has {} entries; an attribute head is needed to map it to {outputs} values",
            x.len()
        ))),
    }
}

/// Panel of a feature. Without a head, motion components are shown as stored.
pub fn attribute_panel(f: &FeatureVector, head: Option<&AttributeHead>) -> Result<AttributePanel> {
    let class_probs = match head.and_then(|h| h.class.as_ref().map(|c| (h, c))) {
        Some((h, layer)) => {
            layer.check(f.app.len(), None, "class")?;
            if !h.class_names.is_empty() && h.class_names.len() != layer.weights.len() {
                return Err(Error::Dimension(format!(
                    "{} class names for {} class outputs",
                    h.class_names.len(),
                    layer.weights.len()
                )));
            }
            let probs = layer.apply(&f.app).into_iter().map(sigmoid);
            Some(
                probs
                    .enumerate()
                    .map(|(i, p)| {
                        let name = h.class_names.get(i).cloned().unwrap_or_else(|| format!("class{i}"));
                        (name, p)
                    })
                    .collect(),
            )
        }
        None => None,
    };
    let direction_hist = read_out(head.and_then(|h| h.ang.as_ref()), &f.ang, DIRECTION_BINS, "ang")?;
    let speed = read_out(head.and_then(|h| h.mag.as_ref()), &f.mag, DIRECTION_BINS, "mag")?;
    let bkg = read_out(head.and_then(|h| h.bkg.as_ref()), &f.bkg, 1, "bkg")?;
    Ok(AttributePanel {
        class_probs,
        direction_hist,
        speed,
        background_fraction: bkg[0],
        stationary: f.cls,
    })
}

const DIRECTION_NAMES: [&str; DIRECTION_BINS] = [
    "right",
    "down-right",
    "down-right",
    "down",
    "down",
    "down-left",
    "left",
    "left",
    "up-left",
    "up",
    "up",
    "up-right",
];

impl AttributePanel {
    /// Most likely class, or "unknown" when no probability reaches the cutoff.
    pub fn class_label(&self) -> Option<String> {
        self.class_probs.as_ref().map(|probs| {
            probs
                .iter()
                .filter(|(_, p)| *p >= UNKNOWN_CLASS_CUTOFF)
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map_or_else(|| "unknown".to_string(), |(n, _)| n.clone())
        })
    }

    /// Dominant direction bin, if any pixel moves.
    pub fn main_direction(&self) -> Option<usize> {
        self.direction_hist
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }

    /// One templated sentence, e.g. "person moving right at 2.0 px/frame (35% of pixels)".
    pub fn describe(&self) -> String {
        let subject = self.class_label().unwrap_or_else(|| "something".into());
        match (self.stationary, self.main_direction()) {
            (false, Some(d)) => {
                let moving: f64 = self.direction_hist.iter().sum();
                format!(
                    "{subject} moving {} at {:.1} px/frame ({:.0}% of pixels moving)",
                    DIRECTION_NAMES[d],
                    self.speed[d],
                    moving * 100.0
                )
            }
            _ => format!("{subject}, stationary background"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Normal,
    Anomalous,
}

/// Anomalous exactly when the score exceeds the threshold.
pub fn verdict(score: f64, threshold: f64) -> Verdict {
    if score > threshold {
        Verdict::Anomalous
    } else {
        Verdict::Normal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentTerm {
    pub component: Component,
    /// Normalized distance `d / Z` of this component.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub region_index: usize,
    pub test_panel: AttributePanel,
    pub nearest_exemplar: Option<usize>,
    pub nearest_provenance: Option<Provenance>,
    pub nearest_panel: Option<AttributePanel>,
    /// The four addends in `app, ang, mag, bkg` order; empty for a never-observed region.
    pub terms: Vec<ComponentTerm>,
    pub total: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    /// Largest addend; `None` when the total is zero or the region was never observed.
    pub dominant: Option<Component>,
    pub never_observed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplainOptions {
    pub decision_threshold: f64,
    /// Score reported for regions without exemplars.
    pub sentinel: f64,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        Self {
            decision_threshold: DEFAULT_DECISION_THRESHOLD,
            sentinel: crate::scoring::DEFAULT_SENTINEL,
        }
    }
}

/// Finds the nearest exemplar and splits the score into its component terms.
pub fn explain_score(
    f: &FeatureVector,
    rm: &RegionModel,
    z: &Normalizers,
    head: Option<&AttributeHead>,
    opts: &ExplainOptions,
) -> Result<Explanation> {
    let test_panel = attribute_panel(f, head)?;
    if rm.is_empty() {
        return Ok(Explanation {
            region_index: rm.region_index,
            test_panel,
            nearest_exemplar: None,
            nearest_provenance: None,
            nearest_panel: None,
            terms: Vec::new(),
            total: opts.sentinel,
            threshold: opts.decision_threshold,
            verdict: verdict(opts.sentinel, opts.decision_threshold),
            dominant: None,
            never_observed: true,
        });
    }
    let mut best: Option<(usize, [f64; 4], f64)> = None;
    for (i, e) in rm.exemplars().iter().enumerate() {
        let terms = distance_terms(f, e, z)?;
        let total: f64 = terms.iter().sum();
        if best.is_none_or(|(_, _, b)| total < b) {
            best = Some((i, terms, total));
        }
    }
    let (idx, terms, total) = best.expect("region is non-empty");
    let mut dominant = None;
    let mut top = 0.0;
    for (c, &v) in Component::ALL.iter().zip(&terms) {
        if v > top {
            top = v;
            dominant = Some(*c);
        }
    }
    Ok(Explanation {
        region_index: rm.region_index,
        test_panel,
        nearest_exemplar: Some(idx),
        nearest_provenance: Some(rm.provenance()[idx]),
        nearest_panel: Some(attribute_panel(&rm.exemplars()[idx], head)?),
        terms: Component::ALL
            .iter()
            .zip(terms)
            .map(|(&component, value)| ComponentTerm { component, value })
            .collect(),
        total,
        threshold: opts.decision_threshold,
        verdict: verdict(total, opts.decision_threshold),
        dominant,
        never_observed: false,
    })
}

fn component_phrase(c: Component) -> &'static str {
    match c {
        Component::App => "unusual appearance",
        Component::Ang => "unusual direction of motion",
        Component::Mag => "unusual speed",
        Component::Bkg => "unusual amount of moving pixels",
    }
}

impl fmt::Display for Explanation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = match self.verdict {
            Verdict::Normal => "normal",
            Verdict::Anomalous => "anomalous",
        };
        writeln!(f, "region: {}", self.region_index)?;
        writeln!(
            f,
            "score: {:.4} (threshold {:.2}) -> {verdict}",
            self.total, self.threshold
        )?;
        writeln!(f, "test volume: {}", self.test_panel.describe())?;
        if self.never_observed {
            writeln!(f, "region never observed in nominal video")?;
            return Ok(());
        }
        if let (Some(i), Some(p)) = (self.nearest_exemplar, &self.nearest_panel) {
            let prov = self
                .nearest_provenance
                .map(|p| format!(" (video {}, frame {})", p.video, p.frame_start))
                .unwrap_or_default();
            writeln!(f, "nearest exemplar #{i}{prov}: {}", p.describe())?;
        }
        for t in &self.terms {
            writeln!(f, "  d_{}/Z_{} = {:.4}", t.component, t.component, t.value)?;
        }
        match self.dominant {
            Some(c) => writeln!(f, "dominant: {c} ({})", component_phrase(c)),
            None => writeln!(f, "dominant: none"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region_index: usize,
    pub exemplar_count: usize,
    pub panels: Vec<(Provenance, AttributePanel)>,
}

/// Panels of the first `top_k` exemplars in selection order.
pub fn render_region_summary(rm: &RegionModel, top_k: usize, head: Option<&AttributeHead>) -> Result<RegionSummary> {
    let panels = rm
        .exemplars()
        .iter()
        .zip(rm.provenance())
        .take(top_k)
        .map(|(e, p)| Ok((*p, attribute_panel(e, head)?)))
        .collect::<Result<_>>()?;
    Ok(RegionSummary {
        region_index: rm.region_index,
        exemplar_count: rm.len(),
        panels,
    })
}

impl fmt::Display for RegionSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "region {}: {} exemplars", self.region_index, self.exemplar_count)?;
        for (i, (p, panel)) in self.panels.iter().enumerate() {
            writeln!(
                f,
                "  #{i} (video {}, frame {}): {}",
                p.video,
                p.frame_start,
                panel.describe()
            )?;
        }
        Ok(())
    }
}

fn fill(img: &mut RgbImage, x0: u32, y0: u32, w: u32, h: u32, c: Rgb<u8>) {
    for y in y0..(y0 + h).min(img.height()) {
        for x in x0..(x0 + w).min(img.width()) {
            img.put_pixel(x, y, c);
        }
    }
}

/// Bar-chart rendering of a panel: class probabilities (if any), direction
/// histogram, speeds scaled to `max_speed`, then stationary fraction and flag.
pub fn render_panel_png(panel: &AttributePanel, max_speed: f64) -> RgbImage {
    const BAR: u32 = 10;
    const GAP: u32 = 2;
    const ROW: u32 = 60;
    let n_class = panel.class_probs.as_ref().map_or(0, Vec::len) as u32;
    let groups = [n_class, DIRECTION_BINS as u32, DIRECTION_BINS as u32, 2];
    let width = groups.iter().map(|&n| n * (BAR + GAP) + 8).sum::<u32>().max(8);
    let mut img = RgbImage::from_pixel(width, ROW + 8, Rgb([255, 255, 255]));
    let mut x = 4;
    let mut bars = |vals: Vec<f64>, color: Rgb<u8>, img: &mut RgbImage| {
        for v in vals {
            let h = (v.clamp(0.0, 1.0) * ROW as f64).round() as u32;
            fill(img, x, 4 + ROW - h, BAR, h, color);
            x += BAR + GAP;
        }
        x += 8;
    };
    if let Some(probs) = &panel.class_probs {
        bars(probs.iter().map(|p| p.1).collect(), Rgb([200, 80, 60]), &mut img);
    }
    bars(panel.direction_hist.clone(), Rgb([60, 110, 200]), &mut img);
    let scale = if max_speed > 0.0 { max_speed } else { 1.0 };
    bars(
        panel.speed.iter().map(|s| s / scale).collect(),
        Rgb([70, 160, 90]),
        &mut img,
    );
    bars(
        vec![panel.background_fraction, if panel.stationary { 1.0 } else { 0.0 }],
        Rgb([120, 120, 120]),
        &mut img,
    );
    img
}
