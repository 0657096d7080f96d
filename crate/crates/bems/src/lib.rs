//! Robust MPC toolkit and closed-loop simulator for building HVAC systems
//! participating in energy and reserve-capacity markets.

pub mod config;
pub mod controller;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod market;
pub mod prediction;
pub mod report;
pub mod robust;
pub mod scalar;
pub mod sim;
pub mod thermal;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete f64 aliases for the generic core types.
pub type Mat64 = linalg::Mat<f64>;
