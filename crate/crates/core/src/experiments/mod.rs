//! Batch experiment orchestration across (seed, h, depth, T).
//!
//! Sample units are independent and scheduled on the rayon pool; aggregation
//! is sequential in sample order so results are bit-reproducible for a fixed
//! config and seed table.

mod calibrate;
mod lyap;
mod strong;
mod weak;

pub use calibrate::{calibrate_drives, CalibrationOutcome};
pub use lyap::{
    run_lyapunov_experiment, FluxLambdaReport, LyapunovReport, LyapunovRunOptions,
};
pub use strong::{run_strong_experiment, StrongCell, StrongOutcome, StrongSampleRow};
pub use weak::{run_weak_experiment, WeakCell, WeakOutcome};

use crate::analysis::AnalysisError;
use crate::config::ConfigError;
use crate::engine::EngineError;
use crate::lyapunov::LyapunovError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error(transparent)]
    Path(#[from] crate::paths::PathError),
    #[error("matched pool floor not reached: {got}/{floor} matched samples at h={h}, depth={depth} after {n_samples} samples")]
    PoolFloor {
        h: f64,
        depth: usize,
        got: usize,
        floor: usize,
        n_samples: usize,
    },
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a purpose-keyed seed from the master seed.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    splitmix64(master ^ splitmix64(tag))
}

/// Seed of Monte Carlo sample `k`.
pub fn sample_seed(master: u64, k: usize) -> u64 {
    splitmix64(derive_seed(master, 0x5341_4d50_4c45).wrapping_add((k as u64).wrapping_mul(
        0x9E37_79B9_7F4A_7C15,
    )))
}
