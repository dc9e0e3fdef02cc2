pub mod error;
pub mod estimator;
pub mod matcher;
pub mod metrics;
pub mod obsgen;
pub mod real;
pub mod rotkit;
pub mod scenarios;
pub mod so3grid;
pub mod symmodel;

pub use error::{Error, Result};
pub use real::Real;

pub type Rotation = rotkit::Rotation<f64>;
pub type Pose = rotkit::Pose<f64>;
pub type CameraIntrinsics = rotkit::CameraIntrinsics<f64>;
pub type RotationF32 = rotkit::Rotation<f32>;
pub type PoseF32 = rotkit::Pose<f32>;
pub type CameraIntrinsicsF32 = rotkit::CameraIntrinsics<f32>;
