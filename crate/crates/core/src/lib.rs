//! Bayesian inference for stochastic differential equations observed with
//! noise at discrete times, using particle MCMC with correlated and
//! augmented auxiliary variables.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`).
//! Concrete `f64` aliases are exported at the crate root for the common case.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod diagnostics;
pub mod error;
pub mod filter;
pub mod importance;
pub mod linalg;
pub mod lna;
pub mod models;
pub mod parallel;
pub mod prior;
pub mod rng;
pub mod samplers;
pub mod scalar;
pub mod sde;
pub mod tuning;

pub use error::{Error, ErrorCategory, Result};
pub use parallel::Workers;
pub use scalar::Real;

pub type Mat64 = linalg::Mat<f64>;
pub type ObservationModel64 = sde::ObservationModel<f64>;
pub type InitialState64 = sde::InitialState<f64>;
pub type ParamVector64 = sde::ParamVector<f64>;
pub type Prior64 = prior::Prior<f64>;
pub type AuxiliaryVariates64 = filter::AuxiliaryVariates<f64>;
pub type ModelSpec64 = models::ModelSpec<f64>;
