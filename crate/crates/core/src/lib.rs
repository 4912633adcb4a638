//! Physiological signal analysis for human-machine collaboration.
//!
//! The crate covers the full EEG/EMG path: recording I/O, filtering and
//! epoching, Welch spectra, corticomuscular coherence with significance
//! thresholds, rank-based group statistics, spherical-spline scalp maps,
//! synthetic oracles, and the operator-state classifier that drives the
//! dual-loop assistance controller.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cmc;
pub mod error;
pub mod numfmt;
pub mod preprocess;
pub mod signal_io;
pub mod spectral;
pub mod state_engine;
pub mod stats;
pub mod synth;
pub mod topomap;

pub use error::{Error, Result};
