//! Graph classification benchmark for edge-importance explainers: synthetic
//! datasets, a weighted-edge message passing classifier, explainers, and
//! removal-based evaluation.

pub mod eval;
pub mod explain;
pub mod gnn;
pub mod graph;
pub mod synthgen;

#[cfg(test)]
mod testutil;
