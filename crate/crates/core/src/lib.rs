//! Causal analysis toolkit with a tool-calling agent loop on top.
//!
//! The bottom layers are self-contained statistics and graph
//! machinery: tables and correlation ([`tabular`]), mixed causal
//! graphs with reachability queries ([`graph`]), Fisher-Z independence
//! testing ([`ci`]), constraint-based discovery ([`pc`]),
//! equivalence-class edge verdicts ([`edge`]), and double/debiased
//! treatment-effect estimation ([`dml`]).
//!
//! On top sit synthetic data generation ([`scm`]), benchmark question
//! generation and scoring ([`qgen`]), the agent session loop
//! ([`agent`]), and the command-line entry points ([`cli`]).

pub mod agent;
pub mod ci;
pub mod cli;
pub mod dml;
pub mod edge;
pub mod error;
pub mod graph;
pub mod pc;
pub mod qgen;
pub mod scm;
pub mod tabular;

pub use error::{Error, Result};
