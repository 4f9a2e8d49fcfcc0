//! Simulation and numerical-error analysis for current-based leaky
//! integrate-and-fire networks with exponential synapses and instantaneous
//! resets.
//!
//! The crate provides:
//!
//! - a time-driven Euler–Maruyama integrator with grid spike detection
//!   ([`engine::simulate`]) and an event-resolved integrator for the
//!   noise-free case ([`engine::deterministic_event_simulate`]);
//! - exactly coupled Brownian increments across step sizes
//!   ([`paths::BrownianStore`]), so every ladder of step sizes shares one
//!   underlying random input;
//! - spike-train matching, spike-time errors and mismatch events
//!   ([`spikes`]);
//! - strong/weak error statistics, crossing-speed flux histograms and
//!   convergence-order fits ([`analysis`]);
//! - Lyapunov machinery: saltation matrices, the hybrid fundamental matrix,
//!   flux-based and two-copy exponent estimators ([`lyapunov`]);
//! - independent oracles used by the test suite ([`oracle`]);
//! - scenario configuration, presets and batch experiment runners
//!   ([`config`], [`experiments`]).

pub mod analysis;
pub mod config;
pub mod engine;
pub mod experiments;
pub mod lyapunov;
pub mod model;
pub mod oracle;
pub mod paths;
pub mod report;
pub mod spikes;
