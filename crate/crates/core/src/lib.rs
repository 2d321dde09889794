//! Kinetics of bosons in a one-dimensional tight-binding array whose only
//! bath is a driven, lossy cavity. Scattering conserves particle number, so
//! the steady state is set by the cavity noise spectrum alone.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod integrator;
pub mod kinetics;
pub mod lattice;
pub mod perturbation;
pub mod quadrature;
pub mod reservoir;
pub mod run;
pub mod verify;

pub use error::{Error, Result};
