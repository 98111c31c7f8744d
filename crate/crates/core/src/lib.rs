//! Long-range percolation on transitive graphs of polynomial growth.

pub mod blocks;
pub mod cluster;
pub mod experiment;
pub mod graph;
pub mod iso;
pub mod kernel;
pub mod oracle;
pub mod sampler;
pub mod stats;
