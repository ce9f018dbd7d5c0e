//! Semi-dense mapping: block matching along the stereo baseline and across
//! time, depth fusion and local-map maintenance.

mod depth;
mod stereo;
mod temporal;
pub mod zncc;

pub use depth::{fuse_depth, merge_maps, propagate_map, DepthPoint, DepthSource, LocalDepthMap};
pub use stereo::{static_stereo_match, StereoMatchConfig};
pub use temporal::{temporal_stereo_match, TemporalMatchConfig};
