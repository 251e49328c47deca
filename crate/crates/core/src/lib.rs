//! Assignably safe extremum seeking on quadratic plants with a linear
//! barrier: algorithm dynamics, averaged models, equilibrium analysis,
//! and a scenario-driven command line front end.

// `!(x > 0.0)` is used on purpose so that NaN fails every validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod dynamics;
pub mod integrate;
pub mod problem;
pub mod random;
pub mod scenario;
pub mod signals;
pub mod verify;
