//! Active subspaces and derivative-based Shapley effects for scalar models of
//! possibly dependent random inputs.

pub mod active;
pub mod dependency;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod gradient;
pub mod linalg;
pub mod model;
pub mod sensitivity;
pub mod shapley;
pub mod stats;
pub mod testfns;

pub use error::{Error, Result};
