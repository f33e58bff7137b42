//! Cross-chain bridge auditing: static extraction, taint slicing, predicate
//! catalog, model orchestration and reporting.

pub mod frontend;
pub mod callgraph;
pub mod verification;
pub mod taint;
pub mod semantic;
pub mod orchestrator;
pub mod pipeline;
pub mod report;
