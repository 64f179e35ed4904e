//! Pedestrian trajectory prediction with transferable motion patterns.
//!
//! Trajectories are mapped into a curbside coordinate frame defined by the
//! two curbs of a street corner, featurized on an occupancy grid, and
//! decomposed into motion primitives by nonnegative sparse coding.
//! Transitions between primitives define motion patterns, each modelled by a
//! pair of Gaussian processes over velocity. A model trained at one corner
//! predicts at another by mapping observations through the target corner's
//! frame.

pub mod benchmark;
pub mod config;
pub mod error;
pub mod geometry;
pub mod gp;
pub mod metrics;
pub mod predictor;
pub mod sparse_coding;
pub mod synthgen;
pub mod trajectory;

pub use config::{Mode, PipelineConfig};
pub use error::{Error, Result};
pub use geometry::{AffineMap2D, CurbsideFrame};
pub use predictor::{predict, train, Candidate, PredictionSet, TasnscModel};
pub use trajectory::{Dataset, Split, Trajectory};
