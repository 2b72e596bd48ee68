//! Link prediction in a two-snapshot social network from user text,
//! graph topology, and interaction counts.

pub mod attention;
pub mod baselines;
pub mod config;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod gcn;
pub mod graph;
pub mod metrics;
pub mod numeric;
pub mod predictor;
pub mod tensor;
pub mod text;

pub use error::{Error, Result};
