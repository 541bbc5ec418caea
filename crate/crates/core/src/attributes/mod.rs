//! Per-volume attributes: motion statistics from flow, a built-in appearance
//! descriptor, and import of externally computed features.

mod appearance;
mod import;
mod motion;

pub use appearance::{builtin_appearance, AppearanceDescriptor, FeatureSource, BUILTIN_APP_DIM};
pub use import::{export_features, import_features, FeatureTable, ImportedRecord, VolumeKey, FEATURE_MAGIC};
pub use motion::{compute_motion_attributes, direction_bin, FlowThresholds, MotionAttributes, DIRECTION_BINS};
