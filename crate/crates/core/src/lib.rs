//! Evaluation toolkit for pubic symphysis and fetal head segmentation in
//! intrapartum ultrasound: overlap and distance metrics, angle-of-progression
//! biometry, leaderboard ranking with bootstrap stability, cohort analysis,
//! synthetic data and report generation.
//!
//! Geometry and summary statistics are generic over [`scalar::Scalar`]; the
//! aliases below fix the common `f64` and `f32` instantiations.

pub mod biometry;
pub mod cohorts;
pub mod ingest;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod ranking;
pub mod report;
pub mod scalar;
pub mod synth;

pub use mask::{BinaryMask, LabelMask, Structure};
pub use metrics::{MetricRecord, MetricValue};
pub use scalar::Scalar;

pub type EllipseF64 = biometry::Ellipse<f64>;
pub type EllipseF32 = biometry::Ellipse<f32>;
pub type AopResultF64 = biometry::AopResult<f64>;
pub type AopResultF32 = biometry::AopResult<f32>;
pub type BoxStatsF64 = report::BoxStats<f64>;
