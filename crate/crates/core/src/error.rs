use thiserror::Error;

use crate::model::{Edge, Timestep, VertexId};

/// Errors raised by the library.
///
/// Variants are grouped so the CLI can map them onto exit codes:
/// domain violations, syntax errors and resource caps.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),

    #[error("unknown edge {0}")]
    UnknownEdge(Edge),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("cannot condition vertex {vertex} on survival to timestep {t}: {reason}")]
    Conditioning {
        vertex: VertexId,
        t: Timestep,
        reason: String,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("policy `{policy}` returned an illegal decision at t={t}: {reason}")]
    IllegalDecision {
        policy: String,
        t: Timestep,
        reason: String,
    },

    #[error("undefined value: {0}")]
    Undefined(String),

    #[error("{what} exceeds cap: {count} > {cap}{hint}")]
    CapExceeded {
        what: &'static str,
        count: u128,
        cap: u128,
        hint: &'static str,
    },

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn is_resource_cap(&self) -> bool {
        matches!(self, Error::CapExceeded { .. })
    }

    pub fn is_syntax(&self) -> bool {
        matches!(self, Error::Syntax { .. } | Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
