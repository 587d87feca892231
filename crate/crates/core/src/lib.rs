//! A graph-learning engine for text-attributed graphs that trains
//! message-passing node classifiers while enriching a budget-limited,
//! heuristically selected fraction of node texts through an external LLM
//! service — and performs inference with zero LLM calls.
//!
//! The pipeline per training batch: select candidate nodes up front
//! ([`selection`]), sample and cosine-re-rank fixed-size neighborhoods
//! ([`sampler`]), pass candidates through the probabilistic enhancement gate
//! against the call budget ([`enhance`]), and aggregate with a plain
//! mean-aggregation network trained by hand-derived gradients ([`gnn`]).
//! [`metrics`] adds gradient-flow and feature-cohesion diagnostics.

pub mod enhance;
pub mod error;
pub mod features;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod selection;
pub mod synthetic;

pub use error::{Error, Result};
pub use features::{FeatureMatrix, FeatureView, OverlaidFeatures};
pub use graph::{NodeId, NodeRecord, Split, TextAttributedGraph};
pub use selection::{CandidateSet, SelectionMethod, SelectionScores};
