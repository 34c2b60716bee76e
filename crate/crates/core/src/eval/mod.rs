//! Frame-level AP and recall, model evaluation over corpus splits and the
//! six-kind benchmark.

mod bench;
mod harness;
pub mod metrics;

pub use bench::*;
pub use harness::*;
pub use metrics::{average_precision, recall_at_threshold, recall_with_rule, DecisionRule, MetricError};
