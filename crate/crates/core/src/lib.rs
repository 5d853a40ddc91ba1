//! Differentially private synthetic tabular data from a generative prior.
//!
//! The crate implements Private Evolution with a workload-aware distance,
//! one-shot pipelines that fit weights over generator output treated as
//! public data, simple baselines, and an experiment harness.

pub mod error;
pub mod baselines;
pub mod evolution;
pub mod generator;
pub mod harness;
pub mod privacy;
pub mod publicfit;
pub mod schema;
pub mod workload;

pub use error::{Error, Result};
pub use privacy::{AccountantLedger, PrivacyBudget, SeedTree};
pub use schema::{Dataset, Provenance, TableSchema};
pub use workload::{AnswerVector, Norm, Workload};
