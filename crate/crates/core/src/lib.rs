//! Sparse RGB-D visual odometry for dynamic scenes.
//!
//! Features on moving objects are rejected twice: every frame, the depth
//! image is clustered with K-Means and clusters whose average robust
//! reprojection error stands out are marked dynamic; every keyframe, a
//! semantic mask removes movable object classes from the keyframe and the
//! map. The remaining static features drive a two-stage tracker.
//!
//! Start with the runnable programs in `examples/`, e.g.
//! `cargo run --release --example synthetic_benchmark`.

pub mod app;
pub mod clustering;
pub mod config;
pub mod dataset;
pub mod dynamic;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod map;
pub mod semantic;
pub mod tracker;

pub use geometry::{CameraIntrinsics, DepthRange, Pose, Twist};

/// 16-bit single-channel depth image in raw sensor units.
pub type DepthImage = image::ImageBuffer<image::Luma<u16>, Vec<u16>>;
