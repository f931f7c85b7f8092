//! Supervised similarity from random-forest leaf co-occurrence, and a
//! class-wise outlier measure built on top of it.
//!
//! The pipeline is: [`data`] loads and splits a tabular dataset, [`forest`]
//! grows a bootstrap ensemble of CART trees, [`proximity`] turns the leaf
//! assignments into a pairwise similarity matrix, [`outlier`] scores every
//! record against every class, and [`mds`] / [`analysis`] produce the
//! embeddings and return-attribution statistics used for reporting.

pub mod analysis;
pub mod data;
pub mod forest;
pub mod mds;
pub mod metrics;
pub mod modelsel;
pub mod outlier;
pub mod proximity;
mod rng;

pub use data::{Dataset, FeatureKind, FeatureSchema};
pub use forest::{Forest, ForestParams};
pub use outlier::{OutlierConfig, OutlierScores};
pub use proximity::{DistanceMatrix, ProximityKind, ProximityMatrix};
