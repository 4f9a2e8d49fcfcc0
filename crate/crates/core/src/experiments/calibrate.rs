//! Drive calibration: layerwise bisection of the constant drives until every
//! layer's firing rate lands in a target band.
//!
//! The published protocol fixes drives by pilot runs without printing their
//! values, so the preset ships without drives and this helper finds them.

use super::{derive_seed, ExperimentError};
use crate::config::ScenarioConfig;
use crate::engine::{simulate, SimOptions};
use crate::model::{build_feedforward, Drive, EiWeights, NeuronParams};
use crate::paths::BrownianStore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationOutcome {
    pub drives: Vec<f64>,
    /// Realized per-layer rates (spikes per neuron per unit time) under the
    /// calibrated drives.
    pub rates: Vec<f64>,
    pub target: (f64, f64),
    pub pilot_horizon: f64,
}

/// Rate of the deepest layer of a prefix network under candidate drives.
fn layer_rate(
    cfg: &ScenarioConfig,
    drives: &[f64],
    pilot_horizon: f64,
    pilot_factor: usize,
) -> Result<f64, ExperimentError> {
    let depth = drives.len();
    let params: Vec<NeuronParams> = drives
        .iter()
        .map(|&b| NeuronParams {
            tau_v: cfg.network.tau_v,
            tau_c: cfg.network.tau_c,
            v_th: cfg.network.v_th,
            v_r: cfg.network.v_r,
            sigma: cfg.network.sigma,
            drive: Drive::Constant(b),
        })
        .collect();
    let ei = EiWeights {
        p_conn: cfg.network.p_conn,
        c_w: cfg.network.c_w,
        n_exc: cfg.network.n_exc,
        n_inh: cfg.network.n_inh,
    };
    // Same weight stream as the full build: prefix blocks are drawn first,
    // so prefix networks share their weights with the full network.
    let weight_seed = derive_seed(cfg.seeds.master, 0x5745_4947);
    let mut rng = ChaCha8Rng::seed_from_u64(weight_seed);
    let net = build_feedforward(depth, cfg.network.width, &params, &ei, &mut rng)?;

    let h_fine = cfg.grid.h_ref();
    let n_fine = (pilot_horizon / h_fine).round() as usize;
    let store = BrownianStore::new(
        derive_seed(cfg.seeds.master, 0x4341_4c49),
        h_fine,
        n_fine,
        net.n_neurons,
    );
    let traj = simulate(&net, &store, pilot_factor, pilot_horizon, &SimOptions::default())?;
    let layer = net.neurons_in_layer(depth - 1);
    let spikes: usize = layer.iter().map(|&p| traj.spikes[p].times.len()).sum();
    Ok(spikes as f64 / (layer.len() as f64 * pilot_horizon))
}

/// Sweep per-layer drives to land each layer's rate inside `target`
/// (spikes per neuron per unit time). Layers are calibrated in order; layer
/// rates are monotone in the own-layer drive, so plain bisection applies.
pub fn calibrate_drives(
    cfg: &ScenarioConfig,
    target: (f64, f64),
    pilot_horizon: f64,
) -> Result<CalibrationOutcome, ExperimentError> {
    if !(target.0 > 0.0 && target.1 > target.0) {
        return Err(ExperimentError::Calibration(
            "target band must satisfy 0 < lo < hi".into(),
        ));
    }
    let mid = (target.0 * target.1).sqrt();
    let i_th = (cfg.network.v_th - cfg.network.v_r) / cfg.network.tau_v;
    // Pilot at a mid-ladder step keeps calibration cheap.
    let pilot_factor = {
        let exps = &cfg.grid.coarse_exps;
        let e = exps[exps.len() / 2];
        1usize << (e - cfg.grid.h_ref_exp) as u32
    };

    let mut drives: Vec<f64> = Vec::with_capacity(cfg.network.depth);
    let mut rates = Vec::with_capacity(cfg.network.depth);
    for _layer in 0..cfg.network.depth {
        let mut lo = 0.0f64;
        let mut hi = 2.0 * i_th;
        drives.push(hi);
        // Widen until the band is reachable from above.
        let mut widen = 0;
        loop {
            *drives.last_mut().unwrap() = hi;
            let r = layer_rate(cfg, &drives, pilot_horizon, pilot_factor)?;
            if r >= mid || widen >= 8 {
                if r < target.0 {
                    return Err(ExperimentError::Calibration(format!(
                        "layer {} rate {r:.2} below band even at drive {hi:.2}",
                        drives.len() - 1
                    )));
                }
                break;
            }
            lo = hi;
            hi *= 2.0;
            widen += 1;
        }
        let mut rate = f64::NAN;
        for _ in 0..24 {
            let b = 0.5 * (lo + hi);
            *drives.last_mut().unwrap() = b;
            rate = layer_rate(cfg, &drives, pilot_horizon, pilot_factor)?;
            if (target.0..=target.1).contains(&rate) {
                break;
            }
            if rate > mid {
                hi = b;
            } else {
                lo = b;
            }
        }
        if !(target.0..=target.1).contains(&rate) {
            return Err(ExperimentError::Calibration(format!(
                "layer {} rate {rate:.2} did not settle in [{}, {}]",
                drives.len() - 1,
                target.0,
                target.1
            )));
        }
        rates.push(rate);
    }

    Ok(CalibrationOutcome {
        drives,
        rates,
        target,
        pilot_horizon,
    })
}
