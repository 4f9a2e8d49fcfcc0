//! Time stepping: the Euler–Maruyama scheme with grid spike detection and
//! reset, and an event-resolved integrator for noise-free networks.

mod event;

pub use event::{deterministic_event_simulate, EventOptions};

use crate::model::{threshold_current, NetworkSpec};
use crate::paths::{BrownianStore, PathError};
use crate::spikes::SpikeTrain;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("non-finite state at t={t} (neuron {neuron})")]
    NonFinite { t: f64, neuron: usize },
    #[error("horizon {horizon} is not a multiple of the step {h}")]
    BadHorizon { horizon: f64, h: f64 },
    #[error("checkpoint {0} is not on the step grid")]
    BadCheckpoint(f64),
    #[error("store covers {available} fine steps, need {needed}")]
    StoreTooShort { available: usize, needed: usize },
    #[error("increment/count slice length mismatch")]
    BadSliceLength,
    #[error("event integrator requires sigma = 0 everywhere")]
    NotDeterministic,
    #[error("initial voltage of neuron {0} is at or above threshold")]
    InitialAboveThreshold(usize),
    #[error("grazing crossing at t={t}, neuron {neuron}: speed {speed:e} below floor {floor:e}")]
    Grazing {
        t: f64,
        neuron: usize,
        speed: f64,
        floor: f64,
    },
    #[error("event budget exhausted ({0} events)")]
    EventBudget(usize),
    #[error(transparent)]
    Path(#[from] PathError),
}

/// Instantaneous network state on the grid.
#[derive(Clone, Debug)]
pub struct NetworkState {
    pub v: Vec<f64>,
    pub i: Vec<f64>,
    pub t: f64,
    pub spike_counts: Vec<u64>,
}

impl NetworkState {
    /// Rest state: voltages at reset, currents at the t=0 drive value.
    pub fn rest(net: &NetworkSpec) -> Self {
        let v = net.params.iter().map(|p| p.v_r).collect();
        let i = net.params.iter().map(|p| p.drive.value_at(0.0)).collect();
        NetworkState {
            v,
            i,
            t: 0.0,
            spike_counts: vec![0; net.n_neurons],
        }
    }

    fn check_finite(&self) -> Result<(), EngineError> {
        for p in 0..self.v.len() {
            if !self.v[p].is_finite() || !self.i[p].is_finite() {
                return Err(EngineError::NonFinite {
                    t: self.t,
                    neuron: p,
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeTag {
    EmGrid,
    DeterministicEvent,
}

/// State snapshot at one time.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub v: Vec<f64>,
    pub i: Vec<f64>,
}

/// Output of one simulation run.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub scheme: SchemeTag,
    /// Grid step for `EmGrid`; recording stride for the event integrator.
    pub h: f64,
    pub horizon: f64,
    /// Thinned grid snapshots (empty unless requested).
    pub snapshots: Vec<Snapshot>,
    /// States at the requested checkpoint times, in order.
    pub checkpoints: Vec<Snapshot>,
    pub spikes: Vec<SpikeTrain>,
    pub final_state: NetworkState,
    /// Running maximum of |I| over the run (grid values for `EmGrid`,
    /// interval endpoints for the event integrator).
    pub sup_abs_current: f64,
}

impl TrajectoryRecord {
    /// Spike trains restricted to the first `depth` layers.
    pub fn prefix_spikes<'a>(&'a self, net: &NetworkSpec, depth: usize) -> Vec<&'a SpikeTrain> {
        net.prefix_neurons(depth)
            .into_iter()
            .map(|p| &self.spikes[p])
            .collect()
    }
}

/// Options for [`simulate`].
#[derive(Clone, Debug, Default)]
pub struct SimOptions {
    /// Store every `snapshot_stride`-th grid state; 0 disables snapshots.
    pub snapshot_stride: usize,
    /// Grid-aligned times at which full states are recorded.
    pub checkpoints: Vec<f64>,
    /// Start from this `(v, i)` instead of the rest state.
    pub initial: Option<(Vec<f64>, Vec<f64>)>,
}

/// Voltage update and spike detection for one step. Reads the start-of-step
/// current, writes the post-reset voltage into `v_out`, and returns the fired
/// neurons with the crossing-speed estimate `I(t_m) - I_th`.
fn voltage_pass(
    net: &NetworkSpec,
    v: &[f64],
    i_old: &[f64],
    h: f64,
    v_out: &mut [f64],
    fired: &mut Vec<(usize, f64)>,
) {
    fired.clear();
    for p in 0..net.n_neurons {
        let prm = &net.params[p];
        let vn = v[p] + h * (-(v[p] - prm.v_r) / prm.tau_v + i_old[p]);
        if vn >= prm.v_th {
            fired.push((p, i_old[p] - threshold_current(prm)));
            v_out[p] = prm.v_r;
        } else {
            v_out[p] = vn;
        }
    }
}

/// Current decay/noise update for one step (no synaptic jumps).
fn current_pass(net: &NetworkSpec, i: &mut [f64], t: f64, h: f64, increments: &[f64]) {
    for p in 0..net.n_neurons {
        let prm = &net.params[p];
        let b = prm.drive.value_at(t);
        i[p] += -(h / prm.tau_c) * (i[p] - b) + (prm.sigma / prm.tau_c) * increments[p];
    }
}

/// Add the synaptic column of every spiking presynaptic neuron.
fn apply_spike_columns(net: &NetworkSpec, i: &mut [f64], spiking: &[(usize, u32)]) {
    for &(j, count) in spiking {
        if count == 0 {
            continue;
        }
        let c = count as f64;
        for p in 0..net.n_neurons {
            let w = net.weights[p][j];
            if w != 0.0 {
                i[p] += c * w;
            }
        }
    }
}

/// One Euler–Maruyama step with grid spike detection.
///
/// Currents consume the given per-neuron numerical spike counts of this step;
/// voltages are advanced with start-of-step values; any neuron whose updated
/// voltage reaches threshold is reset and returned (with its crossing-speed
/// estimate). In a self-consistent run the `incoming` counts equal the fired
/// set this function returns, which is how [`simulate`] drives it.
pub fn em_step(
    state: &mut NetworkState,
    net: &NetworkSpec,
    h: f64,
    increments: &[f64],
    incoming: &[u32],
) -> Result<Vec<(usize, f64)>, EngineError> {
    if increments.len() != net.n_neurons || incoming.len() != net.n_neurons {
        return Err(EngineError::BadSliceLength);
    }
    let mut fired = Vec::new();
    let mut v_new = vec![0.0; net.n_neurons];
    voltage_pass(net, &state.v, &state.i, h, &mut v_new, &mut fired);
    current_pass(net, &mut state.i, state.t, h, increments);
    let spiking: Vec<(usize, u32)> = incoming
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(j, &c)| (j, c))
        .collect();
    apply_spike_columns(net, &mut state.i, &spiking);
    state.v = v_new;
    state.t += h;
    for &(p, _) in &fired {
        state.spike_counts[p] += 1;
    }
    state.check_finite()?;
    Ok(fired)
}

/// Run the EM scheme over `horizon` with step `factor * h_fine`, coupled to
/// the store's fine path by block summation. `factor = 1` is the fine
/// reference trajectory.
pub fn simulate(
    net: &NetworkSpec,
    store: &BrownianStore,
    factor: usize,
    horizon: f64,
    opts: &SimOptions,
) -> Result<TrajectoryRecord, EngineError> {
    let h = factor as f64 * store.h_fine();
    let steps_f = horizon / h;
    let n_steps = steps_f.round() as usize;
    if n_steps == 0 || (steps_f - n_steps as f64).abs() > 1e-9 {
        return Err(EngineError::BadHorizon { horizon, h });
    }
    if n_steps * factor > store.n_fine_steps() {
        return Err(EngineError::StoreTooShort {
            available: store.n_fine_steps(),
            needed: n_steps * factor,
        });
    }

    // Map checkpoint times to grid indices.
    let mut checkpoint_steps = Vec::with_capacity(opts.checkpoints.len());
    for &t in &opts.checkpoints {
        let idx = (t / h).round() as usize;
        if (idx as f64 * h - t).abs() > 1e-9 * t.abs().max(1.0) || idx > n_steps {
            return Err(EngineError::BadCheckpoint(t));
        }
        checkpoint_steps.push(idx);
    }

    let n = net.n_neurons;
    let mut state = match &opts.initial {
        Some((v, i)) => NetworkState {
            v: v.clone(),
            i: i.clone(),
            t: 0.0,
            spike_counts: vec![0; n],
        },
        None => NetworkState::rest(net),
    };
    state.check_finite()?;

    let mut times: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut speeds: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut snapshots = Vec::new();
    let mut checkpoints: Vec<Snapshot> = Vec::with_capacity(checkpoint_steps.len());
    let mut sup_abs_current = state.i.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let record_state = |state: &NetworkState, out: &mut Vec<Snapshot>| {
        out.push(Snapshot {
            t: state.t,
            v: state.v.clone(),
            i: state.i.clone(),
        });
    };

    if opts.snapshot_stride > 0 {
        record_state(&state, &mut snapshots);
    }
    for (ci, &cs) in checkpoint_steps.iter().enumerate() {
        if cs == 0 {
            checkpoints.push(Snapshot {
                t: 0.0,
                v: state.v.clone(),
                i: state.i.clone(),
            });
            let _ = ci;
        }
    }

    // Increments are fetched in windows so chunk regeneration is amortized.
    const WINDOW: usize = 512;
    let mut window: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut window_start = 0usize;

    let mut fired: Vec<(usize, f64)> = Vec::new();
    let mut v_new = vec![0.0; n];
    let mut incr = vec![0.0; n];

    for m in 0..n_steps {
        if m >= window_start + window[0].len() || window[0].is_empty() {
            window_start = m;
            let end = (m + WINDOW).min(n_steps);
            for (p, w) in window.iter_mut().enumerate() {
                *w = store.coarse_increments(factor, p, m..end)?;
            }
        }
        let off = m - window_start;
        for p in 0..n {
            incr[p] = window[p][off];
        }

        voltage_pass(net, &state.v, &state.i, h, &mut v_new, &mut fired);
        current_pass(net, &mut state.i, state.t, h, &incr);
        let spiking: Vec<(usize, u32)> = fired.iter().map(|&(p, _)| (p, 1u32)).collect();
        apply_spike_columns(net, &mut state.i, &spiking);
        std::mem::swap(&mut state.v, &mut v_new);
        state.t = (m + 1) as f64 * h;
        state.check_finite()?;

        let spike_time = state.t;
        for &(p, a) in &fired {
            state.spike_counts[p] += 1;
            times[p].push(spike_time);
            speeds[p].push(a);
        }
        for &x in &state.i {
            sup_abs_current = sup_abs_current.max(x.abs());
        }

        if opts.snapshot_stride > 0 && (m + 1) % opts.snapshot_stride == 0 {
            record_state(&state, &mut snapshots);
        }
        for &cs in &checkpoint_steps {
            if cs == m + 1 {
                record_state(&state, &mut checkpoints);
            }
        }
    }

    let spikes = times
        .into_iter()
        .zip(speeds)
        .enumerate()
        .map(|(p, (t, s))| SpikeTrain {
            neuron: p,
            times: t,
            speeds: Some(s),
        })
        .collect();

    Ok(TrajectoryRecord {
        scheme: SchemeTag::EmGrid,
        h,
        horizon,
        snapshots,
        checkpoints,
        spikes,
        final_state: state,
        sup_abs_current,
    })
}
