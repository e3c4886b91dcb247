//! Simulation, evaluation, and parameter identification for 1-D mouse-pointer
//! movement models built on discrete-time optimal feedback control.
//!
//! The crate covers five model families (a target-anchored spring-mass-damper,
//! a quintic polynomial, an exact-state linear-quadratic regulator, and two
//! output-feedback controllers with signal-dependent noise), trajectory-level
//! and distribution-level comparison metrics, corpus preprocessing, and
//! derivative-free parameter fitting. The `pointctl` binary exposes all of it
//! on the command line.

pub mod cli;
pub mod data;
pub mod error;
pub mod fitting;
pub mod linalg;
pub mod lindyn;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod svg;

pub use error::{Error, Result};
