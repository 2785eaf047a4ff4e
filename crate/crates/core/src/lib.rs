//! Predictive process monitoring over directly-follows graphs.

pub mod cli;
pub mod dfg;
pub mod eventlog;
pub mod gnn;
pub mod metrics;
pub mod nncore;
pub mod sampling;
pub mod training;
