//! Two-stage tracking-by-detection: high-score Hungarian matching on a
//! height-based cost, low-score trajectory patching, and Kalman
//! pseudo-observations, with MOT-format I/O, a synthetic scene generator and
//! HOTA/MOTA/IDF1 evaluation.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiation.

pub mod assignment;
pub mod geometry;
pub mod metrics;
pub mod mot_io;
pub mod motion;
pub mod scalar;
pub mod synth;
pub mod tracker;

pub use geometry::{CostKind, IouKind};
pub use scalar::Scalar;

pub type BBox = geometry::BBox<f64>;
pub type BBox32 = geometry::BBox<f32>;
pub type Detection = tracker::Detection<f64>;
pub type Track = tracker::Track<f64>;
pub type TrackerConfig = tracker::TrackerConfig<f64>;
pub type Tracker = tracker::Tracker<f64>;
pub type Tracker32 = tracker::Tracker<f32>;
pub type FrameOutput = tracker::FrameOutput<f64>;
pub type KalmanFilter = motion::KalmanFilter<f64>;
pub type KalmanState = motion::KalmanState<f64>;
pub type Assignment = assignment::Assignment<f64>;
pub type TrackRow = mot_io::TrackRow<f64>;
pub type TrackSequence = mot_io::TrackSequence<f64>;
pub type DetSequence = mot_io::DetSequence<f64>;
pub type Scenario = synth::Scenario<f64>;
