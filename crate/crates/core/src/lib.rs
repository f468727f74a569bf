//! Core engine for interactive, human-steered molecular optimization.

pub mod molgraph;
pub mod metrics;
pub mod substructure;
pub mod scoring;
pub mod ga;
pub mod dataset;
pub mod projection;
pub mod llm;
pub mod session;
