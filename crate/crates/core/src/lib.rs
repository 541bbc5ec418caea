//! Region-based video anomaly detection with interpretable attributes.
//!
//! Video is split into overlapping spatial regions and short temporal
//! windows. Each volume is described by appearance plus motion attributes
//! (direction histogram, per-direction speed, stationary fraction, background
//! flag). Nominal video yields a per-region set of exemplars; at test time a
//! volume's anomaly score is its normalized distance to the nearest exemplar of
//! its region.

pub mod attributes;
pub mod error;
pub mod evaluate;
pub mod explain;
pub mod extract;
pub mod features;
pub mod ingest;
pub mod model;
pub mod scoring;

pub use error::{Error, Result};
pub use image;
