//! Covariate selection for causal-effect estimation from observational data.
//!
//! The crate turns a dataset with a designated treatment and outcome into a
//! covariate adjustment set that keeps the regression-based effect estimate
//! unbiased while minimizing its variance, via best-subset regression under
//! conditional-independence constraints. It also carries everything needed
//! to validate such selections against a known generating process: DAGs with
//! d-separation queries, linear structural equation models with seeded
//! sampling and do-interventions, Fisher-Z independence tests, a k-sparse
//! regression solver with an exhaustive oracle, and a replication harness.
//!
//! Modules follow the pipeline: [`graph`] and [`sem`] define ground truth
//! and data, [`stats`] and [`subset`] supply the estimation machinery,
//! [`cmio`] implements the selection algorithms, [`method`] exposes every
//! strategy behind one trait for runtime dispatch, and [`bench`] replicates
//! whole studies.

pub mod bench;
pub mod cmio;
pub mod error;
pub mod graph;
pub mod method;
pub mod sem;
pub mod stats;
pub mod subset;

pub use error::{Error, Result};
