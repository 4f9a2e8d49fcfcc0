//! Lyapunov machinery: saltation factors and matrices, the subthreshold
//! propagator, the hybrid fundamental matrix product, flux-based single
//! neuron exponents, and two-copy common-noise divergence.

use crate::analysis::FluxHistogram;
use crate::engine::{
    deterministic_event_simulate, simulate, EngineError, EventOptions, NetworkState, SchemeTag,
    SimOptions, TrajectoryRecord,
};
use crate::model::{threshold_current, NetworkSpec, NeuronParams};
use crate::paths::BrownianStore;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LyapunovError {
    #[error("tangency: pre-spike current {i_pre} at or below threshold current {i_th}")]
    Tangency { i_pre: f64, i_th: f64 },
    #[error("negative interval {0}")]
    NegativeDelta(f64),
    #[error("crossing speed {speed:e} below floor {floor:e} at t={t}, neuron {neuron}")]
    SpeedFloor {
        t: f64,
        neuron: usize,
        speed: f64,
        floor: f64,
    },
    #[error("trajectory is not event-resolved")]
    WrongScheme,
    #[error("spike train {0} carries no crossing speeds")]
    MissingSpeeds(usize),
    #[error("histogram has no bins")]
    EmptyHistogram,
    #[error("perturbation too large: spike indices already mismatch at t={0}")]
    PerturbationTooLarge(f64),
    #[error("dimension mismatch")]
    Dimension,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Transversality floor relative to the threshold current.
pub const SPEED_FLOOR_REL: f64 = 1e-8;

/// Voltage-current coupling kernel of the subthreshold flow:
/// `B(d) = tau_v tau_c / (tau_c - tau_v) (e^{-d/tau_c} - e^{-d/tau_v})`,
/// degenerating to `d e^{-d/tau_v}` at equal time constants.
pub fn coupling_kernel(delta: f64, tau_v: f64, tau_c: f64) -> f64 {
    if (tau_c - tau_v).abs() <= 1e-12 * tau_v {
        delta * (-delta / tau_v).exp()
    } else {
        tau_v * tau_c / (tau_c - tau_v) * ((-delta / tau_c).exp() - (-delta / tau_v).exp())
    }
}

/// Scalar saltation factor `S(I) = I / (I - I_th)` at a spike with pre-spike
/// current `I`.
pub fn saltation_factor(i_pre: f64, i_th: f64) -> Result<f64, LyapunovError> {
    if i_pre <= i_th {
        return Err(LyapunovError::Tangency { i_pre, i_th });
    }
    Ok(i_pre / (i_pre - i_th))
}

/// Subthreshold propagator `F(delta)` for `n` neurons with common time
/// constants, in `(v_1..v_n, I_1..I_n)` ordering.
pub fn subthreshold_propagator(
    delta: f64,
    tau_v: f64,
    tau_c: f64,
    n: usize,
) -> Result<DMatrix<f64>, LyapunovError> {
    if delta < 0.0 {
        return Err(LyapunovError::NegativeDelta(delta));
    }
    let ev = (-delta / tau_v).exp();
    let ec = (-delta / tau_c).exp();
    let b = coupling_kernel(delta, tau_v, tau_c);
    let mut f = DMatrix::zeros(2 * n, 2 * n);
    for p in 0..n {
        f[(p, p)] = ev;
        f[(p, n + p)] = b;
        f[(n + p, n + p)] = ec;
    }
    Ok(f)
}

/// Per-neuron propagator for possibly heterogeneous time constants.
fn propagator_general(net: &NetworkSpec, delta: f64) -> DMatrix<f64> {
    let n = net.n_neurons;
    let mut f = DMatrix::zeros(2 * n, 2 * n);
    for p in 0..n {
        let prm = &net.params[p];
        f[(p, p)] = (-delta / prm.tau_v).exp();
        f[(p, n + p)] = coupling_kernel(delta, prm.tau_v, prm.tau_c);
        f[(n + p, n + p)] = (-delta / prm.tau_c).exp();
    }
    f
}

/// Saltation matrix of a spike of neuron `p` with pre-spike current `i_pre`
/// and synaptic column `w_col` (jump added to each postsynaptic current):
/// `S = (Id - e_v e_v^T) + (1/A) u e_v^T` with
/// `u = (w_col + i_pre e_p ; -w_col / tau_c)`.
pub fn saltation_matrix(
    p: usize,
    i_pre: f64,
    w_col: &[f64],
    params: &NeuronParams,
) -> Result<DMatrix<f64>, LyapunovError> {
    let n = w_col.len();
    if p >= n {
        return Err(LyapunovError::Dimension);
    }
    let i_th = threshold_current(params);
    let a = i_pre - i_th;
    let floor = SPEED_FLOOR_REL * i_th;
    if a <= floor {
        return Err(LyapunovError::Tangency { i_pre, i_th });
    }
    let mut s = DMatrix::identity(2 * n, 2 * n);
    // Column v_p is replaced by u / A.
    for q in 0..n {
        s[(q, p)] = (w_col[q] + if q == p { i_pre } else { 0.0 }) / a;
        s[(n + q, p)] = -w_col[q] / (params.tau_c * a);
    }
    Ok(s)
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|r| m.row(r).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
}

/// One logged spike event of a variational run.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VarEvent {
    pub t: f64,
    pub neuron: usize,
    pub speed: f64,
}

/// Running hybrid fundamental matrix with its event log and norm history.
#[derive(Clone, Debug)]
pub struct HybridVariational {
    /// Renormalized running product; the true product is
    /// `exp(log_scale) * matrix`.
    pub matrix: DMatrix<f64>,
    pub log_scale: f64,
    pub events: Vec<VarEvent>,
    /// `(t, log ||Phi(t, 0)||_inf)` sampled right after each saltation and at
    /// the horizon.
    pub norm_history: Vec<(f64, f64)>,
}

impl HybridVariational {
    pub fn log_norm(&self) -> f64 {
        self.log_scale + inf_norm(&self.matrix).ln()
    }
}

fn sorted_events(traj: &TrajectoryRecord) -> Result<Vec<VarEvent>, LyapunovError> {
    let mut events = Vec::new();
    for train in &traj.spikes {
        let speeds = train
            .speeds
            .as_ref()
            .ok_or(LyapunovError::MissingSpeeds(train.neuron))?;
        for (&t, &a) in train.times.iter().zip(speeds) {
            events.push(VarEvent {
                t,
                neuron: train.neuron,
                speed: a,
            });
        }
    }
    events.sort_by(|a, b| (a.t, a.neuron).partial_cmp(&(b.t, b.neuron)).unwrap());
    Ok(events)
}

fn build_variational(
    traj: &TrajectoryRecord,
    net: &NetworkSpec,
) -> Result<HybridVariational, LyapunovError> {
    if traj.scheme != SchemeTag::DeterministicEvent {
        return Err(LyapunovError::WrongScheme);
    }
    let events = sorted_events(traj)?;
    let n = net.n_neurons;
    let min_i_th = net
        .params
        .iter()
        .map(threshold_current)
        .fold(f64::INFINITY, f64::min);
    let floor = SPEED_FLOOR_REL * min_i_th;

    let mut matrix = DMatrix::identity(2 * n, 2 * n);
    let mut log_scale = 0.0f64;
    let mut norm_history = Vec::with_capacity(events.len() + 1);
    let mut t = 0.0f64;

    let renormalize = |m: &mut DMatrix<f64>, log_scale: &mut f64| {
        let norm = inf_norm(m);
        if !(1e-80..=1e80).contains(&norm) && norm > 0.0 {
            *m /= norm;
            *log_scale += norm.ln();
        }
    };

    for ev in &events {
        if ev.speed <= floor {
            return Err(LyapunovError::SpeedFloor {
                t: ev.t,
                neuron: ev.neuron,
                speed: ev.speed,
                floor,
            });
        }
        matrix = propagator_general(net, ev.t - t) * matrix;
        let prm = &net.params[ev.neuron];
        let i_pre = ev.speed + threshold_current(prm);
        let w_col: Vec<f64> = (0..n).map(|q| net.weights[q][ev.neuron]).collect();
        matrix = saltation_matrix(ev.neuron, i_pre, &w_col, prm)? * matrix;
        t = ev.t;
        renormalize(&mut matrix, &mut log_scale);
        norm_history.push((t, log_scale + inf_norm(&matrix).ln()));
    }
    matrix = propagator_general(net, traj.horizon - t) * matrix;
    renormalize(&mut matrix, &mut log_scale);
    norm_history.push((traj.horizon, log_scale + inf_norm(&matrix).ln()));

    Ok(HybridVariational {
        matrix,
        log_scale,
        events,
        norm_history,
    })
}

/// Ordered product `F(T - s_M) S_{p_M} ... S_{p_1} F(s_1)` along an
/// event-resolved trajectory. Any grazing event aborts with its time and
/// neuron.
pub fn hybrid_fundamental_matrix(
    traj: &TrajectoryRecord,
    net: &NetworkSpec,
) -> Result<HybridVariational, LyapunovError> {
    build_variational(traj, net)
}

/// Hybrid exponent estimate with the printed upper bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub exponent: f64,
    /// `-1/tau_max + r_tot log kappa_S` with the rate observed over the
    /// estimation window.
    pub upper_bound: f64,
    pub n_events: usize,
    pub horizon: f64,
    pub spike_rate: f64,
    pub kappa_s: f64,
    pub min_speed: f64,
    pub fit_points: usize,
}

/// Estimate the top hybrid exponent from an event-resolved trajectory.
///
/// The running product is renormalized in the max-row-sum norm as it grows;
/// the exponent is the least-squares slope of `log ||Phi(t)||` sampled right
/// after each saltation over the trailing half of the run (post-event
/// sampling removes the within-period decay/jump oscillation, and a slope is
/// immune to the constant-prefactor bias of `log||Phi(T)||/T`). A run without
/// events returns the subthreshold spectral abscissa `-1/tau_max` exactly.
/// `fit_start_fraction` sets where the fit window begins (default 0.5).
pub fn lambda_hyb_estimate(
    traj: &TrajectoryRecord,
    net: &NetworkSpec,
    fit_start_fraction: f64,
) -> Result<(LyapunovEstimate, HybridVariational), LyapunovError> {
    let var = build_variational(traj, net)?;
    let tau_max = net
        .params
        .iter()
        .map(|p| p.tau_v.max(p.tau_c))
        .fold(0.0f64, f64::max);
    let tau_c_min = net
        .params
        .iter()
        .map(|p| p.tau_c)
        .fold(f64::INFINITY, f64::min);
    let n_events = var.events.len();

    if n_events == 0 {
        let est = LyapunovEstimate {
            exponent: -1.0 / tau_max,
            upper_bound: -1.0 / tau_max,
            n_events: 0,
            horizon: traj.horizon,
            spike_rate: 0.0,
            kappa_s: 1.0,
            min_speed: f64::INFINITY,
            fit_points: 0,
        };
        return Ok((est, var));
    }

    let fit_start = fit_start_fraction.clamp(0.0, 0.95) * traj.horizon;
    // Post-event samples only; the final horizon point would reintroduce the
    // partial-period decay.
    let window: Vec<(f64, f64)> = var.norm_history[..n_events]
        .iter()
        .copied()
        .filter(|&(t, _)| t >= fit_start)
        .collect();

    let (exponent, fit_points, window_rate) = if window.len() >= 3 {
        let n = window.len() as f64;
        let tbar = window.iter().map(|p| p.0).sum::<f64>() / n;
        let ybar = window.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = window.iter().map(|p| (p.0 - tbar).powi(2)).sum();
        let sxy: f64 = window
            .iter()
            .map(|p| (p.0 - tbar) * (p.1 - ybar))
            .sum();
        let span = window.last().unwrap().0 - window[0].0;
        let rate = if span > 0.0 {
            (window.len() - 1) as f64 / span
        } else {
            n_events as f64 / traj.horizon
        };
        (sxy / sxx, window.len(), rate)
    } else {
        (
            var.log_norm() / traj.horizon,
            0,
            n_events as f64 / traj.horizon,
        )
    };

    let min_speed = var
        .events
        .iter()
        .map(|e| e.speed)
        .fold(f64::INFINITY, f64::min);
    let w_max = net.max_abs_weight();
    let i_max = traj.sup_abs_current;
    let kappa_s = ((i_max + w_max) / min_speed)
        .max(1.0 + w_max / min_speed)
        .max(1.0 + w_max / (tau_c_min * min_speed));
    let upper_bound = -1.0 / tau_max + window_rate * kappa_s.ln();

    let est = LyapunovEstimate {
        exponent,
        upper_bound,
        n_events,
        horizon: traj.horizon,
        spike_rate: window_rate,
        kappa_s,
        min_speed,
        fit_points,
    };
    Ok((est, var))
}

/// Flux-based voltage exponent of a single neuron:
/// `-1/tau_v + sum_bins rate(a) log((I_th + a)/a)` at bin midpoints. The
/// small-speed bins contribute finitely because flux mass scales with `a`.
pub fn lambda_from_flux(
    flux: &FluxHistogram,
    tau_v: f64,
    i_th: f64,
) -> Result<f64, LyapunovError> {
    if flux.n_bins() == 0 {
        return Err(LyapunovError::EmptyHistogram);
    }
    let boundary = flux.integrate(|a| ((i_th + a) / a).ln());
    Ok(-1.0 / tau_v + boundary)
}

/// What gets perturbed in a two-copy run.
#[derive(Clone, Copy, Debug)]
pub enum PerturbTarget {
    AllVoltages,
    Layer(usize),
    Neuron(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct Perturbation {
    pub size: f64,
    pub target: PerturbTarget,
}

/// Options for [`two_copy_divergence`].
#[derive(Clone, Debug)]
pub struct TwoCopyOptions {
    /// Spacing of the separation checkpoints.
    pub checkpoint_dt: f64,
    /// EM step factor for noisy runs (`sigma > 0`); the checkpoint spacing
    /// must be a multiple of the resulting step.
    pub coarsen_factor: usize,
    /// Fine step of the shared Brownian store for noisy runs.
    pub h_fine: f64,
    /// Fraction of the horizon to skip before fitting.
    pub fit_skip_fraction: f64,
    pub event_opts: EventOptions,
}

impl Default for TwoCopyOptions {
    fn default() -> Self {
        TwoCopyOptions {
            checkpoint_dt: 0.25,
            coarsen_factor: 1,
            h_fine: 2f64.powi(-10),
            fit_skip_fraction: 0.1,
            event_opts: EventOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TwoCopyPoint {
    pub t: f64,
    /// Euclidean norm of the full state difference.
    pub sep: f64,
    /// Per-layer state separations (one entry for recurrent networks).
    pub layer_sep: Vec<f64>,
    /// Per-neuron spike counts of the copies differ by at most one here
    /// (transient one-spike lags around a crossing are part of normal
    /// operation; a difference of two or more marks a lost or extra spike).
    pub matched: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TwoCopyReport {
    pub points: Vec<TwoCopyPoint>,
    pub exponent: Option<f64>,
    pub layer_exponents: Vec<Option<f64>>,
    pub first_mismatch: Option<f64>,
    pub fit_window: (f64, f64),
}

fn perturbed_rest(net: &NetworkSpec, perturbation: &Perturbation) -> (Vec<f64>, Vec<f64>) {
    let rest = NetworkState::rest(net);
    let mut v = rest.v.clone();
    match perturbation.target {
        PerturbTarget::AllVoltages => {
            for x in v.iter_mut() {
                *x += perturbation.size;
            }
        }
        PerturbTarget::Layer(l) => {
            for p in net.neurons_in_layer(l) {
                v[p] += perturbation.size;
            }
        }
        PerturbTarget::Neuron(p) => v[p] += perturbation.size,
    }
    (v, rest.i)
}

/// Simulate two copies under identical input, differing only in the initial
/// voltages, and track their state separation at spike-aligned checkpoints.
///
/// Checkpoints are taken at the unperturbed copy's spike times (thinned to a
/// minimum spacing of `checkpoint_dt`); sampling at fixed phases would alias
/// the within-period decay/jump oscillation into the fitted exponent. A
/// spike-free run falls back to a uniform checkpoint grid.
///
/// Noise-free networks run on the event-resolved integrator (resets are
/// exact, so infinitesimal separations survive saltation); noisy networks run
/// the grid scheme on one shared Brownian store, which resolves spike-time
/// shifts only down to the grid step. The exponent is fitted over matched
/// checkpoints before the first index mismatch (some per-neuron count
/// difference of two or more); the first mismatch time is reported, not
/// assumed away.
pub fn two_copy_divergence(
    net: &NetworkSpec,
    seed: u64,
    perturbation: &Perturbation,
    horizon: f64,
    opts: &TwoCopyOptions,
) -> Result<TwoCopyReport, LyapunovError> {
    let deterministic = net.params.iter().all(|p| p.sigma == 0.0);
    let pert_init = perturbed_rest(net, perturbation);

    let run = |checkpoints: Vec<f64>,
               initial: Option<(Vec<f64>, Vec<f64>)>|
     -> Result<TrajectoryRecord, LyapunovError> {
        if deterministic {
            let e_opts = EventOptions {
                checkpoints,
                initial,
                ..opts.event_opts.clone()
            };
            Ok(deterministic_event_simulate(net, horizon, &e_opts)?)
        } else {
            let n_steps = (horizon / opts.h_fine).round() as usize;
            let store = BrownianStore::new(seed, opts.h_fine, n_steps, net.n_neurons);
            let s_opts = SimOptions {
                checkpoints,
                initial,
                ..Default::default()
            };
            Ok(simulate(net, &store, opts.coarsen_factor, horizon, &s_opts)?)
        }
    };

    // Pilot run of the unperturbed copy fixes the spike-aligned checkpoints.
    let pilot = run(Vec::new(), None)?;
    let mut checkpoints: Vec<f64> = {
        let mut all: Vec<f64> = pilot
            .spikes
            .iter()
            .flat_map(|t| t.times.iter().copied())
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut thinned = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for t in all {
            if t - last >= opts.checkpoint_dt && t <= horizon {
                thinned.push(t);
                last = t;
            }
        }
        thinned
    };
    if checkpoints.is_empty() {
        let k = (horizon / opts.checkpoint_dt).floor() as usize;
        checkpoints = (1..=k).map(|j| j as f64 * opts.checkpoint_dt).collect();
    }

    let base = run(checkpoints.clone(), None)?;
    let pert = run(checkpoints.clone(), Some(pert_init))?;

    let n_layers = net.n_layers();
    let n = net.n_neurons;
    let mut points = Vec::with_capacity(checkpoints.len());
    let mut first_mismatch = None;
    for (k, &t) in checkpoints.iter().enumerate() {
        let sa = &base.checkpoints[k];
        let sb = &pert.checkpoints[k];
        let mut layer_sq = vec![0.0f64; n_layers];
        for p in 0..n {
            let l = net.layer_of.as_ref().map(|lo| lo[p]).unwrap_or(0);
            let dv = sa.v[p] - sb.v[p];
            let di = sa.i[p] - sb.i[p];
            layer_sq[l] += dv * dv + di * di;
        }
        let sep = layer_sq.iter().sum::<f64>().sqrt();
        let matched = (0..n).all(|p| {
            let ca = base.spikes[p].count_up_to(t) as i64;
            let cb = pert.spikes[p].count_up_to(t) as i64;
            (ca - cb).abs() <= 1
        });
        if !matched && first_mismatch.is_none() {
            first_mismatch = Some(t);
        }
        points.push(TwoCopyPoint {
            t,
            sep,
            layer_sep: layer_sq.iter().map(|s| s.sqrt()).collect(),
            matched,
        });
    }

    if perturbation.size != 0.0 {
        if let Some(tm) = first_mismatch {
            if !checkpoints.is_empty() && tm == checkpoints[0] {
                return Err(LyapunovError::PerturbationTooLarge(tm));
            }
        }
    }

    // Fit over matched, positive-separation checkpoints before the first
    // mismatch.
    let fit_start = opts.fit_skip_fraction * horizon;
    let fit_end = first_mismatch.unwrap_or(f64::INFINITY);
    let fit = |sep_of: &dyn Fn(&TwoCopyPoint) -> f64| -> Option<f64> {
        let pts: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.t >= fit_start && p.t < fit_end && p.matched && sep_of(p) > 0.0)
            .map(|p| (p.t, sep_of(p).ln()))
            .collect();
        if pts.len() < 3 {
            return None;
        }
        let m = pts.len() as f64;
        let tbar = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let ybar = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = pts.iter().map(|p| (p.0 - tbar).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - tbar) * (p.1 - ybar)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    };

    let exponent = fit(&|p: &TwoCopyPoint| p.sep);
    let layer_exponents = (0..n_layers)
        .map(|l| fit(&move |p: &TwoCopyPoint| p.layer_sep[l]))
        .collect();

    Ok(TwoCopyReport {
        points,
        exponent,
        layer_exponents,
        first_mismatch,
        fit_window: (fit_start, fit_end.min(horizon)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Drive, NeuronParams, NetworkSpec};

    fn params(tau_v: f64, tau_c: f64, drive: f64) -> NeuronParams {
        NeuronParams {
            tau_v,
            tau_c,
            v_th: 1.0,
            v_r: 0.0,
            sigma: 0.0,
            drive: Drive::Constant(drive),
        }
    }

    #[test]
    fn saltation_factor_examples() {
        assert_eq!(saltation_factor(2.0, 1.0).unwrap(), 2.0);
        assert!((saltation_factor(1e12, 1.0).unwrap() - 1.0).abs() < 1e-11);
        assert!((saltation_factor(1.1, 1.0).unwrap() - 11.0).abs() < 1e-12);
        assert!(saltation_factor(1.0, 1.0).is_err());
        assert!(saltation_factor(0.5, 1.0).is_err());
    }

    #[test]
    fn propagator_identity_and_equal_tau() {
        let f0 = subthreshold_propagator(0.0, 1.0, 0.2, 3).unwrap();
        assert!((f0 - DMatrix::<f64>::identity(6, 6)).abs().max() < 1e-15);

        let f1 = subthreshold_propagator(1.0, 1.0, 1.0, 1).unwrap();
        assert!((f1[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);

        assert!(subthreshold_propagator(-0.1, 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn propagator_semigroup() {
        for &(tv, tc) in &[(1.0, 0.2), (1.0, 1.0), (0.7, 1.3)] {
            for &(d1, d2) in &[(0.3, 0.9), (0.05, 0.05), (1.7, 0.01)] {
                let a = subthreshold_propagator(d1, tv, tc, 2).unwrap();
                let b = subthreshold_propagator(d2, tv, tc, 2).unwrap();
                let c = subthreshold_propagator(d1 + d2, tv, tc, 2).unwrap();
                assert!(((a * b) - c).abs().max() < 1e-12);
            }
        }
    }

    #[test]
    fn saltation_matrix_scalar_reduction() {
        // Isolated neuron: the v-direction action equals the scalar factor.
        let prm = params(1.0, 0.2, 2.0);
        for &i_pre in &[1.5, 2.0, 5.0, 1.01] {
            let s = saltation_matrix(0, i_pre, &[0.0], &prm).unwrap();
            let factor = saltation_factor(i_pre, 1.0).unwrap();
            assert!((s[(0, 0)] - factor).abs() < 1e-12);
            // Perturbations orthogonal to e_v are unchanged.
            assert_eq!(s[(1, 1)], 1.0);
            assert_eq!(s[(0, 1)], 0.0);
            assert_eq!(s[(1, 0)], 0.0);
        }
    }

    #[test]
    fn saltation_matrix_blocks() {
        let prm = params(1.0, 0.5, 0.0);
        let w_col = [0.3, -0.2, 0.1];
        let i_pre = 2.0;
        let s = saltation_matrix(1, i_pre, &w_col, &prm).unwrap();
        let a = i_pre - 1.0;
        // Column v_1 carries (w + i_pre e_1; -w/tau_c)/A.
        assert!((s[(0, 1)] - 0.3 / a).abs() < 1e-15);
        assert!((s[(1, 1)] - (i_pre - 0.2) / a).abs() < 1e-15);
        assert!((s[(2, 1)] - 0.1 / a).abs() < 1e-15);
        assert!((s[(3, 1)] - (-0.3 / (0.5 * a))).abs() < 1e-15);
        assert!((s[(4, 1)] - (0.2 / (0.5 * a))).abs() < 1e-15);
        assert!((s[(5, 1)] - (-0.1 / (0.5 * a))).abs() < 1e-15);
        // All other columns are identity.
        for c in [0usize, 2, 3, 4, 5] {
            for r in 0..6 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert_eq!(s[(r, c)], want);
            }
        }
    }

    #[test]
    fn saltation_matrix_matches_finite_difference_across_one_spike() {
        // Central differences of the event-resolved flow map around one spike
        // of an isolated neuron.
        let prm = params(1.0, 0.2, 2.0);
        let net = NetworkSpec::single(prm).unwrap();
        let horizon = 1.0; // one spike at ln 2 ~ 0.693
        let flow = |v0: f64, i0: f64| -> (f64, f64) {
            let opts = EventOptions {
                initial: Some((vec![v0], vec![i0])),
                ..Default::default()
            };
            let t = deterministic_event_simulate(&net, horizon, &opts).unwrap();
            (t.final_state.v[0], t.final_state.i[0])
        };
        let eps = 1e-7;
        let (vp, ip) = flow(eps, 2.0);
        let (vm, im) = flow(-eps, 2.0);
        let fd_col_v = [(vp - vm) / (2.0 * eps), (ip - im) / (2.0 * eps)];
        let (vp2, ip2) = flow(0.0, 2.0 + eps);
        let (vm2, im2) = flow(0.0, 2.0 - eps);
        let fd_col_i = [(vp2 - vm2) / (2.0 * eps), (ip2 - im2) / (2.0 * eps)];

        let base = deterministic_event_simulate(&net, horizon, &EventOptions::default()).unwrap();
        let phi = hybrid_fundamental_matrix(&base, &net).unwrap();
        let m = &phi.matrix;
        let scale = phi.log_scale.exp();
        let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(1e-6);
        assert!(rel(m[(0, 0)] * scale, fd_col_v[0]) < 1e-4, "{} vs {}", m[(0, 0)], fd_col_v[0]);
        assert!(rel(m[(1, 0)] * scale, fd_col_v[1]) < 1e-4);
        assert!(rel(m[(0, 1)] * scale, fd_col_i[0]) < 1e-4);
        assert!(rel(m[(1, 1)] * scale, fd_col_i[1]) < 1e-4);
    }

    #[test]
    fn no_spike_product_is_propagator() {
        let net = NetworkSpec::single(params(1.0, 0.2, 0.5)).unwrap();
        let traj = deterministic_event_simulate(&net, 2.0, &EventOptions::default()).unwrap();
        let phi = hybrid_fundamental_matrix(&traj, &net).unwrap();
        let f = subthreshold_propagator(2.0, 1.0, 0.2, 1).unwrap();
        assert!((phi.matrix.clone() * phi.log_scale.exp() - f).abs().max() < 1e-12);
    }

    #[test]
    fn constant_input_periods_are_neutral() {
        // Per-period voltage growth factor is exactly one; over many periods
        // the top-left entry stays pinned at 1.
        let net = NetworkSpec::single(params(1.0, 0.2, 2.0)).unwrap();
        let traj = deterministic_event_simulate(&net, 20.0, &EventOptions::default()).unwrap();
        let phi = hybrid_fundamental_matrix(&traj, &net).unwrap();
        let top_left = phi.matrix[(0, 0)] * phi.log_scale.exp();
        // v-column growth after the final partial period: e^{-(T - s_M)/tau_v}.
        let last = phi.events.last().unwrap().t;
        let expect = (-(20.0 - last)).exp();
        assert!(
            (top_left - expect).abs() < 1e-9,
            "top-left {top_left} vs {expect}"
        );
    }

    #[test]
    fn lambda_estimate_constant_input_is_zero() {
        let net = NetworkSpec::single(params(1.0, 0.2, 2.0)).unwrap();
        let traj = deterministic_event_simulate(&net, 60.0, &EventOptions::default()).unwrap();
        let (est, _) = lambda_hyb_estimate(&traj, &net, 0.5).unwrap();
        assert!(est.exponent.abs() < 1e-6, "lambda {}", est.exponent);
        assert!(est.exponent <= est.upper_bound + 1e-9);
    }

    #[test]
    fn lambda_estimate_subthreshold_is_spectral_abscissa() {
        let net = NetworkSpec::single(params(1.0, 0.2, 0.5)).unwrap();
        let traj = deterministic_event_simulate(&net, 10.0, &EventOptions::default()).unwrap();
        let (est, _) = lambda_hyb_estimate(&traj, &net, 0.5).unwrap();
        assert!((est.exponent - (-1.0)).abs() < 1e-9);
        assert!(est.exponent <= est.upper_bound + 1e-12);
    }

    #[test]
    fn flux_lambda_examples() {
        // Zero flux: pure contraction.
        let empty = FluxHistogram {
            edges: vec![0.5, 1.5],
            counts: vec![0],
            underflow: 0,
            overflow: 0,
            n_samples: 1,
            horizon: 1.0,
        };
        assert_eq!(lambda_from_flux(&empty, 1.0, 1.0).unwrap(), -1.0);

        // Unit rate concentrated at a = i_th: -1 + log 2.
        let single = FluxHistogram {
            edges: vec![0.9, 1.1],
            counts: vec![10],
            underflow: 0,
            overflow: 0,
            n_samples: 1,
            horizon: 10.0,
        };
        let l = lambda_from_flux(&single, 1.0, 1.0).unwrap();
        assert!((l - (-1.0 + std::f64::consts::LN_2)).abs() < 1e-12);

        let none = FluxHistogram {
            edges: vec![1.0],
            counts: vec![],
            underflow: 0,
            overflow: 0,
            n_samples: 1,
            horizon: 1.0,
        };
        assert!(lambda_from_flux(&none, 1.0, 1.0).is_err());
    }

    #[test]
    fn two_copy_zero_perturbation_is_identically_zero() {
        let net = NetworkSpec::single(params(1.0, 0.2, 2.0)).unwrap();
        let rep = two_copy_divergence(
            &net,
            1,
            &Perturbation {
                size: 0.0,
                target: PerturbTarget::AllVoltages,
            },
            8.0,
            &TwoCopyOptions::default(),
        )
        .unwrap();
        assert!(rep.points.iter().all(|p| p.sep == 0.0));
        assert!(rep.exponent.is_none());
    }

    #[test]
    fn two_copy_constant_input_is_flat() {
        let net = NetworkSpec::single(params(1.0, 0.2, 2.0)).unwrap();
        let rep = two_copy_divergence(
            &net,
            1,
            &Perturbation {
                size: 1e-6,
                target: PerturbTarget::AllVoltages,
            },
            40.0,
            &TwoCopyOptions::default(),
        )
        .unwrap();
        let ex = rep.exponent.expect("fit");
        assert!(ex.abs() < 1e-3, "two-copy exponent {ex}");
        assert!(rep.first_mismatch.is_none());
    }
}
