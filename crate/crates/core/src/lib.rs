//! Informative sub-table selection for large tables.

pub mod artifacts;
pub mod baselines;
pub mod binning;
pub mod config;
pub mod embedding;
pub mod error;
pub mod fixtures;
pub mod kmeans;
pub mod metrics;
pub mod optimize;
pub mod query;
pub mod rules;
pub mod selection;
pub mod table;

pub use error::{Error, Result};
