//! Collision-counting benchmarks for random circuit sampling.
//!
//! A device that samples bitstrings from the output state of a random circuit
//! re-samples previously seen bitstrings more often than a uniform random
//! source does. This crate counts those collisions (and cross-collisions
//! between two devices), compares them with closed-form expectations, and
//! builds the collision-volume (CV) and cross-collision-volume (XCV) tests,
//! fidelity estimation and sampling-cost estimates on top of them.
//!
//! Module map:
//!
//! - [`distribution`]: uniform, Haar-random and depolarized outcome distributions.
//! - [`circuit`]: quantum-volume style random circuits and a statevector simulator.
//! - [`sampling`]: alias-method sampler and the [`SampleSet`] multiset.
//! - [`collision`]: collision counts, closed forms, anomalies, fidelity and cost.
//! - [`volume`]: the adaptive CV / XCV tests and the collision-volume scan.
//! - [`device`]: bitstring sources (simulated, spoofing, archived, remote) and the
//!   TCP sample server.
//! - [`experiments`]: CSV datasets for the collision, anomaly, noise and cost curves.
//! - [`cli`]: the `collide` command line.

pub mod circuit;
pub mod cli;
pub mod collision;
pub mod device;
pub mod distribution;
mod error;
pub mod experiments;
pub mod rng;
pub mod sampling;
pub mod volume;

pub use circuit::{generate_qv_circuit, random_unitary_4x4, simulate, Circuit};
pub use collision::{AnomalyReport, CostEstimate};
pub use device::{open_device, BitstringSource, DeviceSpec};
pub use distribution::{NoiseModel, ProbabilityDistribution, StateVector};
pub use error::{Error, Result};
pub use sampling::{build_sampler, draw, draw_noisy, SampleSet, Sampler};
pub use volume::{TestConfig, TestOutcome, TestResult};
