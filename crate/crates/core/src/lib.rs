//! Multiple-model trajectory PHD filtering.
//!
//! The crate is organised bottom-up:
//!
//! - [`trajgauss`]: Gaussian densities over stacked state sequences and the
//!   weighted mixtures that represent a trajectory PHD.
//! - [`models`]: jump-Markov motion model bank, measurement model, birth
//!   mixture and the built-in maneuvering-target scenario.
//! - [`filter`]: prediction, update, mixture reduction, L-scan truncation and
//!   estimate extraction.
//! - [`sim`]: ground-truth and cluttered-scan generation.
//! - [`metric`]: LP trajectory metric, its brute-force oracle and the dense
//!   simplex solver behind it.
//! - [`io`]: JSON mixture dumps and CSV exchange formats.

// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod filter;
pub mod io;
pub mod metric;
pub mod models;
pub mod sim;
pub mod trajgauss;

pub use error::{Error, Result};
pub use filter::{FilterConfig, LScan, MmTphdFilter, ScanSet, TrajectoryEstimate};
pub use models::{BirthModel, MeasurementModel, ModeSet, MotionModel, Scenario};
pub use trajgauss::{StateMarginal, TrajectoryGaussian, TrajectoryMixture};
