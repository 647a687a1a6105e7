//! Streaming node property prediction on continuous-time dynamic graphs.
//!
//! The pipeline augments node features (random, positional, structural),
//! picks the augmentation most robust to distribution shift with cheap linear
//! probes over several chronological splits, and trains a small MLP-based
//! temporal model that answers label queries incrementally as edges arrive.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ctdg;
pub mod datagen;
pub mod error;
pub mod features;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod node2vec;
pub mod par;
pub mod rng;
pub mod select;
pub mod slim;
pub mod task;

pub use ctdg::{NeighborEntry, NodeId, StaticGraph, StreamConfig, StreamState, TemporalEdge};
pub use error::{Result, SplashError};
pub use features::{AugConfig, FeatureTable, Process};
pub use par::Parallelism;
