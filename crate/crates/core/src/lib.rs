//! Passive mmWave respiration sensing under human-motion interference.
//!
//! The processing chain mirrors a passive bistatic receiver with one reference
//! and two surveillance channels:
//!
//! 1. [`synth`] renders the reference and surveillance channels of a
//!    [`Scenario`](synth::Scenario).
//! 2. [`clutter`] removes zero-Doppler clutter per CIT.
//! 3. [`caf`] computes the cross ambiguity function per CIT and stacks the rows
//!    into a time-Doppler [`DopplerMap`](caf::DopplerMap).
//! 4. [`cfar`] runs 2D cell-averaging CFAR on the map power.
//! 5. [`estimator`] decides on respiration presence and counts breaths from
//!    the slow-time structure of the maps.
//!
//! [`dataset`] generates labeled synthetic datasets and [`eval`] scores the
//! estimator on them.

pub mod caf;
pub mod cfar;
pub mod clutter;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod formats;
pub mod iq;
pub mod pipeline;
pub mod rng;
pub mod scene;
pub mod synth;

pub use error::{Error, Result};
pub use iq::IqBuffer;
