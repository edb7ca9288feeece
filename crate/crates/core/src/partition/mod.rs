//! Graph partitioning, overlap expansion and separators.

mod graph;
mod plan;
mod strategy;

pub use graph::{graph_from_precision, Graph, UNREACHABLE};
pub use plan::{expand_overlap, partition, partition_of_unity, with_global_separator, PartitionPlan, Selector};
pub use strategy::{PartitionStrategy, RecursiveBisection, StrategyRegistry, TemporalInterval};
