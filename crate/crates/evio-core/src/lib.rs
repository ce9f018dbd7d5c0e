//! Event-based stereo visual-inertial odometry.
//!
//! The crate is organized around a desk-scale pipeline:
//!
//! - [`events`] / [`grid`] / [`geometry`]: streams, rasters, camera and pose math
//! - [`representations`]: time surfaces, adaptive accumulation, offset-suppressed
//!   surfaces and contour-point sampling
//! - [`mapping`]: semi-dense stereo depth from block matching, plus temporal
//!   matching, fusion and map propagation
//! - [`tracking`]: spatio-temporal registration of the local depth map against
//!   the current negative surface
//! - [`imu`]: pre-integration and motion prediction
//! - [`backend`]: sliding-window velocity/bias refinement
//! - [`sim`]: analytic stereo event + IMU simulator with exact ground truth
//! - [`metrics`]: trajectory association, ATE and RPE
//! - [`pipeline`]: the end-to-end runner shared by the CLI and tests
//! - [`io`]: file formats (event streams, IMU CSV, trajectories, PFM/PGM/PLY)

pub mod backend;
pub mod events;
pub mod geometry;
pub mod grid;
pub mod imu;
pub mod io;
pub mod mapping;
pub mod metrics;
pub mod pipeline;
pub mod representations;
pub mod sim;
pub mod tracking;

pub use events::{Event, EventStream};
pub use geometry::{CameraIntrinsics, MotionParams, Pose, StereoRig};
pub use grid::Grid;
pub use imu::{GravityModel, ImuBias, ImuSample, Preintegration};
pub use mapping::{DepthPoint, DepthSource, LocalDepthMap};
