//! Risk-limiting audits for elections that keep card-level cast vote records.
//!
//! The crate covers the whole audit loop: ingesting CVRs and manifests,
//! building assertions, drawing a consistent sample across contests,
//! measuring risk with the ALPHA supermartingale, and escalating to a full
//! hand count when the risk limit cannot be met.

pub mod assertions;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod ingest;
pub mod model;
pub mod risk;
pub mod sampling;
pub mod server;

pub use error::{Error, Result};
