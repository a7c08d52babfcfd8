//! Dimension-pruned dense retrieval: importance estimation, risk-based
//! dimension selection, masked exact search, and TREC-style evaluation,
//! plus a synthetic lab that checks the estimators against closed forms.

pub mod dime;
pub mod engine;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod selection;
pub mod store;
pub mod synthetic;

pub use error::{Error, Result};
