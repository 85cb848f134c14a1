//! Metric learning on the unit hypersphere for multi-object tracking.
//!
//! The crate bundles the pieces needed to study cosine-margin embedding
//! losses end to end on synthetic tracking workloads:
//!
//! - [`hypersphere`]: vector geometry (normalization, cosine similarity,
//!   embedding concatenation).
//! - [`losses`]: six metric-learning losses with hand-derived gradients and
//!   a finite-difference gradient checker.
//! - [`mining`]: hard positive / hard negative selection within a batch.
//! - [`trainer`]: a small linear-projection trainer driven by any of the
//!   losses.
//! - [`tracker`]: gated greedy / Hungarian data association over frames.
//! - [`evaluator`]: sMOTSA / MOTSA / IDS / FP / FN scoring of track files.
//! - [`synth`]: synthetic scenario generation plus brute-force association
//!   oracles for testing.
//! - [`formats`]: the line-oriented detection / track / model file formats.

pub mod evaluator;
pub mod formats;
pub mod hypersphere;
pub mod losses;
pub mod mask;
pub mod mining;
pub mod numeric;
pub mod synth;
pub mod tracker;
pub mod trainer;

pub use evaluator::{AnnotatedObject, ClassMetrics, MetricsReport};
pub use hypersphere::{FeatureVector, UnitVector};
pub use losses::{CmcForm, LabeledPair, LossKind, MarginScale, Triplet};
pub use mask::RleMask;
pub use mining::DetectionBatch;
pub use synth::{Scenario, ScenarioConfig};
pub use tracker::{AssocConfig, BBox, Detection, Matcher, Track, TrackingResult};
pub use trainer::{ProjectionModel, SeparationStats, TrainConfig, TrainStage};
