//! Frame sequences, flow fields, the region grid and spatio-temporal volumes.

mod estimate;
mod flow;
mod frames;
mod grid;
mod volume;

pub use estimate::{brightness_residual, estimate_flow, FlowEstimatorParams};
pub use flow::{load_flow, load_flow_dir, write_flow, write_flow_dir, FlowField, FLO_MAGIC};
pub use frames::{load_frame_sequence, write_frame_sequence, FrameSequence};
pub use grid::{build_region_grid, Anchor, RegionGrid};
pub use volume::{crop_flow_volume, extract_volumes, window_starts, VideoVolume, VolumeStream};
