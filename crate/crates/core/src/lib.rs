//! Pseudo-spectral simulation and Monte-Carlo laboratory for the exponential
//! fractional nonlinear Schrödinger equation on the flat torus.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod gauge;
pub mod harness;
pub mod measures;
pub mod stats;
pub mod torus;
pub mod variational;

pub use error::{Error, Result};
