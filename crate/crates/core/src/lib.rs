//! Meteor detection for image sequences taken from fixed or moving cameras.
//!
//! The chain is: threshold with hysteresis, label connected components,
//! associate components between consecutive frames, estimate the camera
//! motion, then grow tracks and classify them as meteors, stars or noise.
//! A synthetic scene generator and a scorer against ground truth complete
//! the toolbox.
//!
//! Geometry and statistics are generic over [`scalar::Real`] (`f32` or
//! `f64`); pixel accumulators are exact integers. The aliases below fix the
//! scalar type for the common cases.

pub mod ccl;
pub mod detect;
pub mod ellipse;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod ingest;
pub mod matching;
pub mod motion;
pub mod output;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod track;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Point = geometry::Point<f64>;
pub type PointF32 = geometry::Point<f32>;
pub type RigidMotion = motion::RigidMotion<f64>;
pub type RigidMotionF32 = motion::RigidMotion<f32>;
pub type EllipseStats = ellipse::EllipseStats<f64>;
pub type EllipseStatsF32 = ellipse::EllipseStats<f32>;
pub type FlatnessHistogram = ellipse::FlatnessHistogram<f64>;
pub type EvalReport = eval::EvalReport<f64>;
pub type EvalReportF32 = eval::EvalReport<f32>;
