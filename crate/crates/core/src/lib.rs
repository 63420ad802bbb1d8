//! Desk-scale simulator for decentralized federated learning with
//! similarity-driven neighbor selection and loss-weighted aggregation.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod cli;
pub mod collaboration;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod toy;
pub mod types;

pub use config::{AlgorithmId, ExperimentConfig};
pub use engine::{run_training, Simulation, TrainingOutput};
pub use error::{Error, Result};
pub use model::ModelShape;
pub use types::{ClientState, ModelParams, Topology};
