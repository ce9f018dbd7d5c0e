//! Event representations: time surfaces, adaptive accumulation maps and
//! offset-suppressed time surfaces, plus contour sampling utilities.

mod activity;
mod aa;
mod osts;
mod sample;
mod time_surface;

pub use activity::{activity_update, converged_activity};
pub use aa::{build_aa, AaMap, RegionGridConfig};
pub use osts::build_osts;
pub use sample::{sample_contour_points, split_by_gradient, GradientSplitConfig};
pub use time_surface::{build_time_surface, negative_surface, LastEventTimes};
