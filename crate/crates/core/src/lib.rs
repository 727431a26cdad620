//! Density-grid stream clustering.
//!
//! Records stream into a sparse table of decayed grid densities (the online
//! component); every `gap` ticks the offline component forms and adjusts
//! clusters of connected dense grids. Alongside sit a batch K-means
//! baseline, vital-sign feature and risk extraction, evaluation metrics and
//! CSV/synthetic ingestion.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod density;
pub mod error;
pub mod eval;
pub mod features;
pub mod grid;
pub mod ingest;
pub mod kmeans;
pub mod model;
pub mod rng;
pub mod settings;

pub use cluster::{run_dstream, Cluster, ClusteringState, Event, GridLabels, LoggedEvent};
pub use density::{CharacteristicVector, ClusterLabel, GridAttribute, GridList};
pub use error::{Error, Result};
pub use grid::{
    map_to_grid, neighbors, DataRecord, DecayParams, GridCoordinate, GridGeometry, Tick,
};
