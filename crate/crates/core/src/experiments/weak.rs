//! Weak-error experiment: one longest simulation per sample, observables
//! checkpointed at every horizon, paired coarse/reference differences.

use super::{sample_seed, ExperimentError};
use crate::analysis::{fit_order, readout_at_checkpoint, weak_bias, OrderFit};
use crate::config::ScenarioConfig;
use crate::engine::{simulate, SimOptions};
use crate::model::NetworkSpec;
use crate::paths::BrownianStore;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct WeakCell {
    pub h: f64,
    pub depth: usize,
    pub t: f64,
    pub bias: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakOutcome {
    pub cells: Vec<WeakCell>,
    /// Fit of `|bias|` against `h` per `(t, depth)`; absent when some bias
    /// magnitude is exactly zero.
    pub slopes: Vec<(f64, usize, Option<OrderFit>)>,
    pub n_samples: usize,
    pub seeds: Vec<u64>,
    /// Snap distances of the requested checkpoint times.
    pub snap_distances: Vec<f64>,
}

/// `[h][checkpoint][depth]` paired observables `(coarse, reference)`.
type SampleObs = Vec<Vec<Vec<(f64, f64)>>>;

fn run_sample(
    cfg: &ScenarioConfig,
    net: &NetworkSpec,
    depths: &[usize],
    checkpoints: &[f64],
    horizon: f64,
    sample: usize,
) -> Result<SampleObs, ExperimentError> {
    let h_ref = cfg.grid.h_ref();
    let n_fine = (horizon / h_ref).round() as usize;
    let store = BrownianStore::new(
        sample_seed(cfg.seeds.master, sample),
        h_ref,
        n_fine,
        net.n_neurons,
    );
    let opts = SimOptions {
        checkpoints: checkpoints.to_vec(),
        ..Default::default()
    };
    let coefs = (
        cfg.observable.c_v,
        cfg.observable.c_i,
        cfg.observable.c_r,
    );
    let tau_f = cfg.observable.filter_tau;

    let reference = simulate(net, &store, 1, horizon, &opts)?;
    let mut ref_obs = vec![vec![0.0; depths.len()]; checkpoints.len()];
    for ci in 0..checkpoints.len() {
        for (di, &depth) in depths.iter().enumerate() {
            ref_obs[ci][di] =
                readout_at_checkpoint(&reference, net, depth - 1, coefs, tau_f, ci)?;
        }
    }

    let mut out = Vec::with_capacity(cfg.grid.coarse_exps.len());
    for &factor in &cfg.grid.coarse_factors() {
        let coarse = simulate(net, &store, factor, horizon, &opts)?;
        let mut per_cp = vec![vec![(0.0, 0.0); depths.len()]; checkpoints.len()];
        for ci in 0..checkpoints.len() {
            for (di, &depth) in depths.iter().enumerate() {
                let obs = readout_at_checkpoint(&coarse, net, depth - 1, coefs, tau_f, ci)?;
                per_cp[ci][di] = (obs, ref_obs[ci][di]);
            }
        }
        out.push(per_cp);
    }
    Ok(out)
}

/// Run the paired weak-bias experiment. Every sample runs one longest
/// simulation per ladder step plus the reference, all coupled to one Brownian
/// path; shorter horizons come from checkpoints of the same trajectories.
/// The pool grows in batches until the finest-step bias at the largest
/// horizon and depth is resolved at three standard errors, or the maximum
/// pool size is reached. No pruning: mismatched samples stay in.
pub fn run_weak_experiment(
    cfg: &ScenarioConfig,
    depths: &[usize],
) -> Result<WeakOutcome, ExperimentError> {
    let net = cfg.build_network()?;
    let snaps = cfg.grid.snapped_checkpoints();
    let checkpoints: Vec<f64> = snaps.iter().map(|s| s.snapped).collect();
    let horizon = cfg.grid.snapped_horizon();
    let hs = cfg.grid.coarse_hs();

    let mut samples: Vec<SampleObs> = Vec::new();
    let mut n_samples = 0usize;
    loop {
        let want = if n_samples == 0 {
            cfg.pools.min_samples
        } else {
            (cfg.pools.max_samples - n_samples).min(cfg.pools.min_samples)
        };
        if want == 0 {
            break;
        }
        let batch: Result<Vec<SampleObs>, ExperimentError> = (n_samples..n_samples + want)
            .into_par_iter()
            .map(|k| run_sample(cfg, &net, depths, &checkpoints, horizon, k))
            .collect();
        samples.extend(batch?);
        n_samples += want;

        // Resolution check on the hardest cell: finest h, last checkpoint,
        // deepest prefix.
        let hi = hs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let ci = checkpoints.len() - 1;
        let di = depths.len() - 1;
        let pairs: Vec<(f64, f64)> = samples.iter().map(|s| s[hi][ci][di]).collect();
        let (bias, se) = weak_bias(&pairs)?;
        if bias.abs() >= 3.0 * se || n_samples >= cfg.pools.max_samples {
            break;
        }
    }

    let mut cells = Vec::new();
    for (hi, &h) in hs.iter().enumerate() {
        for (ci, &t) in checkpoints.iter().enumerate() {
            for (di, &depth) in depths.iter().enumerate() {
                let pairs: Vec<(f64, f64)> = samples.iter().map(|s| s[hi][ci][di]).collect();
                let (bias, stderr) = weak_bias(&pairs)?;
                cells.push(WeakCell {
                    h,
                    depth,
                    t,
                    bias,
                    stderr,
                    n_samples,
                });
            }
        }
    }

    let mut slopes = Vec::new();
    for &t in &checkpoints {
        for &depth in depths {
            let pts: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.depth == depth && c.t == t)
                .map(|c| (c.h, c.bias.abs()))
                .collect();
            let fit = if pts.len() >= 3 && pts.iter().all(|p| p.1 > 0.0) {
                let (hv, ev): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                fit_order(&hv, &ev).ok()
            } else {
                None
            };
            slopes.push((t, depth, fit));
        }
    }

    let seeds = (0..n_samples)
        .map(|k| sample_seed(cfg.seeds.master, k))
        .collect();

    Ok(WeakOutcome {
        cells,
        slopes,
        n_samples,
        seeds,
        snap_distances: snaps.iter().map(|s| s.distance).collect(),
    })
}
