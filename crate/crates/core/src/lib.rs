//! Certified summary-based taint analysis for a small object-oriented IR.
//!
//! The analyzer computes a flow summary for every method bottom-up and emits
//! the summaries as a certificate; the checker validates a certificate with a
//! single summary recomputation per method.

pub mod alias;
pub mod certify;
pub mod corpus;
pub mod dataflow;
pub mod graphs;
pub mod ir;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ir(#[from] ir::IrError),
    #[error(transparent)]
    Graph(#[from] graphs::GraphError),
    #[error(transparent)]
    Alias(#[from] alias::AliasError),
    #[error(transparent)]
    Cert(#[from] certify::CertError),
    #[error(transparent)]
    Gen(#[from] corpus::GenError),
}
