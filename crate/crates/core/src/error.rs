//! Crate-wide error type.
//!
//! One enum covers every module so results compose across the tool
//! boundary: the agent loop renders any of these as an observation
//! string instead of aborting a session.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv '{path}': {detail}")]
    Csv { path: String, detail: String },

    #[error("csv '{path}' row {row}, column '{column}': cannot parse '{value}' as a number")]
    NonNumericCell {
        path: String,
        row: usize,
        column: String,
        value: String,
    },

    #[error("unknown variable '{name}'")]
    UnknownVariable { name: String },

    #[error("duplicate node name '{name}'")]
    DuplicateNode { name: String },

    #[error("self loop on node '{name}'")]
    SelfLoop { name: String },

    #[error("nodes '{a}' and '{b}' already joined by an edge")]
    EdgeConflict { a: String, b: String },

    #[error("directed part of the graph contains a cycle")]
    DirectedCycle,

    #[error("operation requires a fully directed graph but '{a}' - '{b}' is undirected")]
    NotFullyDirected { a: String, b: String },

    #[error("variables must be distinct, got '{name}' twice")]
    SameVariable { name: String },

    #[error("column '{name}' is constant; correlation is undefined")]
    ConstantColumn { name: String },

    #[error("{what} needs at least {needed} rows, table has {available}")]
    InsufficientRows {
        what: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("singular matrix: {detail}")]
    SingularMatrix { detail: String },

    #[error("graph document malformed: {detail}")]
    GraphParse { detail: String },

    #[error("graph has no consistent DAG extension")]
    NoConsistentExtension,

    #[error("tool input malformed: {detail}")]
    BadToolInput { detail: String },

    #[error("unknown tool '{name}'; valid tools are [{}]", valid.join(", "))]
    UnknownTool { name: String, valid: Vec<String> },

    #[error("there is no causal graph named '{name}' in memory")]
    UnknownGraph { name: String },

    #[error("scripted replay exhausted after {calls} model calls")]
    ReplayExhausted { calls: usize },

    #[error("backend request failed: {detail}")]
    Backend { detail: String },

    #[error("invalid benchmark plan: {detail}")]
    BadPlan { detail: String },

    #[error("template expects {expected} names, got {found}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("{what} out of range: {detail}")]
    OutOfRange { what: &'static str, detail: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Shorthand for IO failures tagged with the offending path.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
