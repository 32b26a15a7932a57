//! Local differential privacy pre-processing of multidimensional categorical
//! training data, with group-fairness and utility evaluation.
//!
//! The crate is organised bottom-up:
//!
//! * [`schema`] loads categorical CSV data against a declared schema.
//! * [`mechanisms`] holds the seven client-side ε-LDP frequency oracles
//!   (GRR, BLH, OLH, RAPPOR, OUE, SS, THE) and their support decoders.
//! * [`budget`] splits a global ε across sensitive attributes.
//! * [`pipeline`] sanitizes training data and builds the homogeneous binary
//!   feature matrix.
//! * [`model`] is a logistic-regression classifier and utility metrics.
//! * [`fairness`] computes DI, SPD, EOD and OAD.
//! * [`harness`] sweeps mechanisms, allocation schemes and ε values.

pub mod budget;
pub mod fairness;
pub mod harness;
pub mod mechanisms;
pub mod model;
pub mod pipeline;
pub mod schema;
pub mod seed;
pub mod synthetic;

use thiserror::Error;

/// Top-level error, wrapping each module's error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Schema(#[from] schema::SchemaError),
    #[error(transparent)]
    Mechanism(#[from] mechanisms::MechanismError),
    #[error(transparent)]
    Budget(#[from] budget::BudgetError),
    #[error(transparent)]
    Pipeline(#[from] pipeline::PipelineError),
    #[error(transparent)]
    Fairness(#[from] fairness::FairnessError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
