//! Monte Carlo wavefunction simulation of a two-level atom walking through a
//! near-resonant one-dimensional optical lattice, with the analysis tools for
//! flight statistics and an energy-space Fokker-Planck model.

// `!(a < b)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod fokker_planck;
pub mod model;
pub mod observables;
pub mod statistics;

pub use error::{Error, Result};
pub use model::{AtomState, LatticeParams, SpontaneousEvent, StateRecord};
