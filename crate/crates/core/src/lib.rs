//! Embodied urban navigation over georeferenced street graphs.
//!
//! The crate bundles the navigation environment, a synthetic city
//! generator, the benchmark task builder, the step-wise episode engine,
//! scripted and remote policies, backtracking / cognition / memory
//! strategies, the metric suite, a batch runner and an HTTP session
//! service for human operators.

pub mod error;
pub mod geo;
pub mod graph;
pub mod synth;
pub mod bench;
pub mod seed;
pub mod fixtures;
pub mod episode;
pub mod policy;
pub mod strategy;
pub mod metrics;
pub mod runner;
pub mod service;
