//! Mobility-graph toolkit: build annotated origin-destination graphs from
//! taxi-trip records, register graph pairs in the permutation-quotient space
//! with a Frank-Wolfe matcher, interpolate between registered graphs, and
//! evaluate matched vs. unmatched graphs on a missing-link-prediction task.

pub mod cli;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod harness;
pub mod ingest;
pub mod matching;

pub use error::{Error, Result};
pub use serde_json;
pub use graph::{
    graph_distance, interpolate, permute_graph, validate_graph, InterpolationPath, MobilityGraph,
    Modality, Period, Permutation,
};
