//! Learned transformation-invariant nearest-neighbour classification.
//!
//! A factored gated RBM learns how images of one identity change into each
//! other. The transforming distance between two images is the smallest
//! feature-space residual left after letting the model transform one toward
//! the other, regularised by the model's free energy.

pub mod data;
pub mod distance;
pub mod error;
pub mod features;
pub mod knn;
pub mod math;
pub mod model;
pub mod scenario;

pub use distance::{transforming_distance, DistanceConfig, DistanceMode};
pub use error::{Error, Result};
pub use features::FeatureSpace;
pub use model::FgrbmParams;
