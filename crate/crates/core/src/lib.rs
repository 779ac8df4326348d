//! Gaussian simulator and analysis toolkit for time-multiplexed,
//! measurement-based continuous-variable quantum computation: exact
//! covariance-matrix state evolution, the dual-homodyne teleportation
//! chain with programmable bases, gate compilation, correlation-based
//! matrix estimation, entanglement verification, and a waveform layer for
//! detector traces.

pub mod chain;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimation;
pub mod gates;
pub mod gaussian;
pub mod report;
pub mod rng;
pub mod trace;

pub use error::{Error, Result};
