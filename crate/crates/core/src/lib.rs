//! Robust sum-AMSE transceiver design for the multiuser MIMO downlink under
//! imperfect channel knowledge.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod duality;
pub mod error;
pub mod linalg;
pub mod model;
pub mod mse;
pub mod power_alloc;
pub mod problem;
pub mod solver;

pub use error::{Error, Result};
