//! Lyapunov experiment plumbing: flux-based, two-copy and hybrid exponent
//! estimates on one network.

use super::{derive_seed, ExperimentError};
use crate::analysis::{crossing_speed_histogram, FluxHistogram};
use crate::engine::{deterministic_event_simulate, simulate, EventOptions, SimOptions};
use crate::lyapunov::{
    lambda_from_flux, lambda_hyb_estimate, two_copy_divergence, LyapunovEstimate, Perturbation,
    PerturbTarget, TwoCopyOptions, TwoCopyReport,
};
use crate::model::{threshold_current, NetworkSpec};
use crate::paths::BrownianStore;
use serde::Serialize;

#[derive(Clone, Debug)]
pub struct LyapunovRunOptions {
    pub horizon: f64,
    pub seed: u64,
    /// Two-copy perturbation size; the target defaults to all voltages.
    pub perturbation: f64,
    pub perturb_target: PerturbTarget,
    pub two_copy: TwoCopyOptions,
    /// Trajectories aggregated into the flux histogram (sigma > 0 runs use
    /// independent seeds derived from `seed`).
    pub flux_samples: usize,
    pub flux_bins: usize,
    /// Fine-step exponent for noisy runs.
    pub h_fine_exp: i32,
    /// Fraction of the horizon preceding the hybrid fit window.
    pub fit_start_fraction: f64,
}

impl Default for LyapunovRunOptions {
    fn default() -> Self {
        LyapunovRunOptions {
            horizon: 100.0,
            seed: 1,
            perturbation: 1e-6,
            perturb_target: PerturbTarget::AllVoltages,
            two_copy: TwoCopyOptions::default(),
            flux_samples: 8,
            flux_bins: 64,
            h_fine_exp: -10,
            fit_start_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FluxLambdaReport {
    pub lambda: f64,
    pub total_rate: f64,
    pub histogram: FluxHistogram,
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovReport {
    /// Hybrid product estimate; noise-free networks only.
    pub hybrid: Option<LyapunovEstimate>,
    pub two_copy: Option<TwoCopyReport>,
    /// Flux-based voltage exponent; single-neuron networks only.
    pub flux: Option<FluxLambdaReport>,
}

/// Run every estimator applicable to the network: the hybrid fundamental
/// matrix product for noise-free nets, the two-copy common-noise divergence,
/// and the flux-based formula for single neurons. Transversality violations
/// surface as errors.
pub fn run_lyapunov_experiment(
    net: &NetworkSpec,
    opts: &LyapunovRunOptions,
) -> Result<LyapunovReport, ExperimentError> {
    let deterministic = net.params.iter().all(|p| p.sigma == 0.0);

    let hybrid = if deterministic {
        let traj = deterministic_event_simulate(net, opts.horizon, &EventOptions::default())?;
        let (est, _) = lambda_hyb_estimate(&traj, net, opts.fit_start_fraction)?;
        Some(est)
    } else {
        None
    };

    let two_copy = Some(two_copy_divergence(
        net,
        derive_seed(opts.seed, 0x54574f43),
        &Perturbation {
            size: opts.perturbation,
            target: opts.perturb_target,
        },
        opts.horizon,
        &opts.two_copy,
    )?);

    let flux = if net.n_neurons == 1 {
        let i_th = threshold_current(&net.params[0]);
        let edges = FluxHistogram::geometric_edges(1e-4 * i_th, 10.0 * i_th, opts.flux_bins);
        let trains = if deterministic {
            let traj =
                deterministic_event_simulate(net, opts.horizon, &EventOptions::default())?;
            vec![traj.spikes[0].clone()]
        } else {
            let h_fine = 2f64.powi(opts.h_fine_exp);
            let n_fine = (opts.horizon / h_fine).round() as usize;
            let mut trains = Vec::with_capacity(opts.flux_samples);
            for k in 0..opts.flux_samples {
                let store = BrownianStore::new(
                    derive_seed(opts.seed, 0x464c5558 + k as u64),
                    h_fine,
                    n_fine,
                    1,
                );
                let traj = simulate(net, &store, 1, opts.horizon, &SimOptions::default())?;
                trains.push(traj.spikes[0].clone());
            }
            trains
        };
        let refs: Vec<&crate::spikes::SpikeTrain> = trains.iter().collect();
        let hist = crossing_speed_histogram(&refs, opts.horizon, refs.len(), edges)?;
        let lambda = lambda_from_flux(&hist, net.params[0].tau_v, i_th)?;
        Some(FluxLambdaReport {
            lambda,
            total_rate: hist.total_rate(),
            histogram: hist,
        })
    } else {
        None
    };

    Ok(LyapunovReport {
        hybrid,
        two_copy,
        flux,
    })
}
