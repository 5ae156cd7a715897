//! Circuit-level model of capacitive human body communication channels:
//! an AC nodal solver, the body channel model and its presets, parameter
//! fits, the sub-sampling amplitude estimator and receive-chain de-embedding.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod config;
pub mod deembed;
pub mod estimation;
pub mod io;
pub mod model;
pub mod sampling;
pub mod units;
