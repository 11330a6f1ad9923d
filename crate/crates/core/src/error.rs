use thiserror::Error;

use crate::model::Side;

/// Errors produced by instance construction, data loading, solvers and the
/// optimizer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{side} ranking for agent {agent} is not a bijection over the opposite side")]
    NonBijectiveRanking { side: Side, agent: usize },

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error(
        "Sinkhorn iteration {iteration} overflowed (zero or non-finite scaling); \
         large tau makes exp(-tau*C) underflow -- enable log_domain"
    )]
    SinkhornOverflow { iteration: usize },

    #[error(
        "Sinkhorn did not reach stop_tol within {iterations} iterations \
         (marginal deviation {deviation:.3e})"
    )]
    SinkhornNotConverged { iterations: usize, deviation: f64 },

    #[error("TU fixed-point iteration {iteration} overflowed; increase beta")]
    TuOverflow { iteration: usize },

    #[error("oracle failed at outer iteration {iteration} on {side} agent {agent}: {source}")]
    OracleFailure {
        iteration: usize,
        side: Side,
        agent: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("policy left the Birkhoff polytope at outer iteration {iteration}: {detail}")]
    PolicyDrift { iteration: usize, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("metadata error on {path}: {detail}")]
    Metadata { path: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
