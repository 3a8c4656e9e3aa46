//! Crash-report driven scenario generation and ADS testing.

pub mod dsl;
pub mod eval;
pub mod geom;
pub mod kb;
pub mod llm;
pub mod pipeline;
pub mod report;
pub mod scene;
pub mod sim;
