//! Desk-scale radiosonde cluster toolkit.
//!
//! The crate covers the whole chain of a floating-radiosonde measurement
//! campaign: balloon sizing against the standard atmosphere, buoyant flight
//! through a synthetic turbulent wind, a bit-exact telemetry codec over a
//! lossy star network, ground-segment ingestion and calibration, IMU/GNSS
//! fusion, and the cluster statistics (spectra, stability profiles and
//! Richardson distance-neighbour graphs).
//!
//! Every stochastic component draws from counter-based ChaCha streams keyed
//! by `(seed, domain, id)`, so sondes and stations can be evaluated in any
//! order without changing results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod atmosphere;
pub mod balloon;
pub mod cli;
pub mod config;
pub mod flight;
pub mod fusion;
pub mod geo;
pub mod ingest;
pub mod pipeline;
pub mod rng;
pub mod telemetry;

/// Gravitational acceleration used throughout, m·s⁻².
pub const GRAVITY: f64 = 9.81;
