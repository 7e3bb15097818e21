//! Multi-view stereo with non-local extensible PatchMatch and hierarchical
//! planar priors.

pub mod error;
pub mod fusion;
pub mod geometry;
pub mod hpm;
pub mod imaging;
pub mod patchmatch;
pub mod prior;
pub mod scalar;
pub mod scene;
pub mod spatial;
pub mod synth;

pub use error::{MvsError, Result};
pub use scalar::Real;

pub type Camera = geometry::CameraModel<f64>;
pub type Hypothesis = geometry::Hypothesis<f64>;
pub type Plane = geometry::PlaneParams<f64>;
pub type GrayImage = imaging::Image<f32>;
