//! Assimilative causal inference for conditional Gaussian nonlinear systems.
//!
//! Causality is measured by how much future observations of the effect change
//! the posterior of the candidate cause: the relative entropy between the
//! smoother and filter distributions of the hidden variables (the causal
//! strength), and the number of future steps over which this change is still
//! felt (the causal influence range).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aci;
pub mod assim;
pub mod cli;
pub mod cir;
pub mod error;
pub mod gaussian;
pub mod model;
pub mod sim;
pub mod validate;

pub use aci::{aci_series, conditional_aci_series, AciMode, AciSeries};
pub use assim::{filter, smooth, ConditionalStrategy, LaggedFamily, OnlineSmoother};
pub use cir::{cir_series, CirSeries, LaggedDivergenceProfile};
pub use error::{Error, Result};
pub use gaussian::{relative_entropy, GaussianPath, GaussianState};
pub use model::{CgnsModel, Coefficients, ObservationPartition};
pub use sim::{euler_maruyama, Trajectory};
