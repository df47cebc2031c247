//! LiDAR bird's-eye-view detection pipeline: point-cloud ingestion, grid-map
//! rasterization, anchor-based oriented-box regression, the combined one-shot
//! detection loss with analytic gradients, a small trainable convolutional
//! network, and rotated-IoU evaluation tooling.
//!
//! The coordinate convention throughout is the KITTI velodyne frame:
//! x forward, y left, z up, all in meters. Yaw is the rotation of a box about
//! the vertical axis, in radians wrapped to `[-pi, pi]`.

pub mod bev;
pub mod boxes;
pub mod error;
pub mod eval;
pub mod kitti;
pub mod loss;
pub mod net;
pub mod plot;
pub mod types;

pub use error::{Error, Result};
pub use types::{ClassId, Obb3D, Point, PointCloud};
