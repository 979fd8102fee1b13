//! Minimum core counts for batches of personalized PageRank queries under a
//! deadline.
//!
//! The crate times a sample of queries, divides the remaining queries into
//! slots that fit the deadline, and executes the slots on bounded worker
//! pools, either in real time or in deterministic virtual time.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod executor;
pub mod graph;
pub mod manifest;
pub mod planner;
pub mod pool;
pub mod ppr;
pub mod seed;
pub mod workload;

pub use error::{Error, Result};
pub use graph::{load_edge_list, Graph, VertexId};
pub use planner::{Plan, PlanConfig};
pub use ppr::{PprEstimate, PprParams};
pub use workload::{QuerySet, TimingStats};
