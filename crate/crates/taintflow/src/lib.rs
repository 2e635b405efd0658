//! Demand-driven backward taint analysis over a small object-oriented
//! three-address IR.
//!
//! The pipeline is: parse the textual IR ([`parser`]), bring every method
//! into SSA form ([`ssa`]), resolve call targets ([`callgraph`]), then answer
//! per-sink taint queries with a backward IFDS-style tabulation over
//! k-limited access paths ([`solver`], driven by [`taint`]). An independent
//! exhaustive forward propagation ([`oracle`]) serves as the correctness
//! reference, and [`gen`] produces seeded test corpora.

pub mod access_path;
pub mod callgraph;
pub mod flow;
pub mod gen;
pub mod ir;
pub mod oracle;
pub mod parser;
pub mod solver;
pub mod ssa;
pub mod taint;
