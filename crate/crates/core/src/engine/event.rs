//! Event-resolved integrator for noise-free networks.
//!
//! Between events the linear subthreshold dynamics is advanced exactly with
//! the closed-form propagator; threshold crossings are located by bisection;
//! resets and synaptic column jumps are applied at the located times.

use super::{EngineError, NetworkState, SchemeTag, Snapshot, TrajectoryRecord};
use crate::lyapunov::coupling_kernel;
use crate::model::{threshold_current, NetworkSpec};
use crate::spikes::SpikeTrain;

/// Options for [`deterministic_event_simulate`].
#[derive(Clone, Debug)]
pub struct EventOptions {
    /// Event-location bisection tolerance (time units).
    pub tol: f64,
    /// Crossings slower than this abort as degenerate; `None` selects
    /// `1e-8 * I_th` scaled up to `10 * tol`-resolvable speeds if needed.
    pub speed_floor: Option<f64>,
    /// Scan resolution for bracketing; `None` selects `min(tau_v, tau_c)/64`.
    pub scan_dt: Option<f64>,
    /// Record state snapshots on this uniform stride.
    pub record_dt: Option<f64>,
    /// Times at which full states are recorded.
    pub checkpoints: Vec<f64>,
    /// Start from this `(v, i)` instead of the rest state.
    pub initial: Option<(Vec<f64>, Vec<f64>)>,
    /// Safety cap on the number of events.
    pub max_events: usize,
}

impl Default for EventOptions {
    fn default() -> Self {
        EventOptions {
            tol: 1e-12,
            speed_floor: None,
            scan_dt: None,
            record_dt: None,
            checkpoints: Vec::new(),
            initial: None,
            max_events: 100_000_000,
        }
    }
}

/// Closed-form subthreshold state at lag `u` from `(v0, i0)` under constant
/// drive `b`.
fn propagate_one(
    v0: f64,
    i0: f64,
    b: f64,
    u: f64,
    tau_v: f64,
    tau_c: f64,
    v_r: f64,
) -> (f64, f64) {
    let ev = (-u / tau_v).exp();
    let ec = (-u / tau_c).exp();
    let i = b + (i0 - b) * ec;
    let v = v_r + (v0 - v_r) * ev + b * tau_v * (1.0 - ev) + (i0 - b) * coupling_kernel(u, tau_v, tau_c);
    (v, i)
}

struct NeuronCtx {
    tau_v: f64,
    tau_c: f64,
    v_th: f64,
    v_r: f64,
    i_th: f64,
}

/// First threshold crossing of one neuron within lag `(0, len]`, located to
/// `tol` by bisection between scan brackets. Cells whose endpoints come close
/// to threshold are sub-scanned so shallow interior maxima are not skipped.
fn first_crossing(
    ctx: &NeuronCtx,
    v0: f64,
    i0: f64,
    b: f64,
    len: f64,
    scan: f64,
    tol: f64,
) -> Option<f64> {
    debug_assert!(v0 < ctx.v_th);
    let value = |u: f64| propagate_one(v0, i0, b, u, ctx.tau_v, ctx.tau_c, ctx.v_r).0;
    let slope = |u: f64| {
        let (v, i) = propagate_one(v0, i0, b, u, ctx.tau_v, ctx.tau_c, ctx.v_r);
        -(v - ctx.v_r) / ctx.tau_v + i
    };
    let bisect = |mut lo: f64, mut hi: f64| {
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if value(mid) >= ctx.v_th {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };

    let mut u_prev = 0.0;
    let mut v_prev = v0;
    while u_prev < len {
        let u = (u_prev + scan).min(len);
        let v = value(u);
        if v >= ctx.v_th {
            return Some(bisect(u_prev, u));
        }
        // Near-miss guard: velocities bound how far above the endpoints the
        // cell interior can go.
        let margin = (u - u_prev) * slope(u_prev).abs().max(slope(u).abs());
        if v_prev.max(v) + margin >= ctx.v_th {
            let sub = (u - u_prev) / 16.0;
            let mut su_prev = u_prev;
            let mut sv_prev = v_prev;
            for k in 1..=16 {
                let su = u_prev + k as f64 * sub;
                let sv = value(su);
                if sv >= ctx.v_th {
                    return Some(bisect(su_prev, su));
                }
                su_prev = su;
                sv_prev = sv;
            }
            let _ = sv_prev;
        }
        u_prev = u;
        v_prev = v;
    }
    None
}

/// Integrate a noise-free network exactly between events up to `horizon`.
///
/// Near-simultaneous crossings (within `tol`) are applied in located-time
/// order with ties broken by ascending neuron index; in feedforward networks
/// the maps commute so the order is immaterial. A crossing speed below the
/// floor is a degenerate-crossing diagnostic, never silently passed.
pub fn deterministic_event_simulate(
    net: &NetworkSpec,
    horizon: f64,
    opts: &EventOptions,
) -> Result<TrajectoryRecord, EngineError> {
    if net.params.iter().any(|p| p.sigma != 0.0) {
        return Err(EngineError::NotDeterministic);
    }
    let n = net.n_neurons;
    let ctx: Vec<NeuronCtx> = net
        .params
        .iter()
        .map(|p| NeuronCtx {
            tau_v: p.tau_v,
            tau_c: p.tau_c,
            v_th: p.v_th,
            v_r: p.v_r,
            i_th: threshold_current(p),
        })
        .collect();
    let min_i_th = ctx.iter().map(|c| c.i_th).fold(f64::INFINITY, f64::min);
    let floor = opts
        .speed_floor
        .unwrap_or_else(|| (1e-8 * min_i_th).max(10.0 * opts.tol * min_i_th));
    let scan_default = net
        .params
        .iter()
        .map(|p| p.tau_v.min(p.tau_c))
        .fold(f64::INFINITY, f64::min)
        / 64.0;
    let scan = opts.scan_dt.unwrap_or(scan_default);

    let (mut v, mut i) = match &opts.initial {
        Some((v, i)) => (v.clone(), i.clone()),
        None => {
            let rest = NetworkState::rest(net);
            (rest.v, rest.i)
        }
    };
    for p in 0..n {
        if !v[p].is_finite() || !i[p].is_finite() {
            return Err(EngineError::NonFinite { t: 0.0, neuron: p });
        }
        if v[p] >= net.params[p].v_th {
            return Err(EngineError::InitialAboveThreshold(p));
        }
    }

    let mut t = 0.0f64;
    let mut spike_counts = vec![0u64; n];
    let mut times: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut speeds: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut snapshots = Vec::new();
    let mut checkpoints = Vec::new();
    let mut next_record = opts.record_dt;
    let mut pending_checkpoints: Vec<f64> = opts.checkpoints.clone();
    let mut sup_abs_current = i.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut n_events = 0usize;

    if opts.record_dt.is_some() {
        snapshots.push(Snapshot {
            t: 0.0,
            v: v.clone(),
            i: i.clone(),
        });
    }
    pending_checkpoints.retain(|&c| {
        if c <= 0.0 {
            checkpoints.push(Snapshot {
                t: 0.0,
                v: v.clone(),
                i: i.clone(),
            });
            false
        } else {
            true
        }
    });

    while t < horizon * (1.0 - 1e-15) {
        // Segment end: horizon or the next drive breakpoint of any neuron.
        let mut seg_end = horizon;
        for p in 0..n {
            if let Some(bp) = net.params[p].drive.next_breakpoint_after(t) {
                seg_end = seg_end.min(bp);
            }
        }
        let seg_len = seg_end - t;
        let drives: Vec<f64> = net.params.iter().map(|p| p.drive.value_at(t)).collect();

        // Earliest crossing of each neuron inside this segment.
        let mut crossings: Vec<(f64, usize)> = Vec::new();
        for p in 0..n {
            if let Some(u) = first_crossing(&ctx[p], v[p], i[p], drives[p], seg_len, scan, opts.tol)
            {
                crossings.push((t + u, p));
            }
        }

        let advance_to = |v: &mut [f64],
                          i: &mut [f64],
                          dt: f64,
                          drives: &[f64],
                          ctx: &[NeuronCtx]| {
            for p in 0..v.len() {
                let (vp, ip) = propagate_one(
                    v[p], i[p], drives[p], dt, ctx[p].tau_v, ctx[p].tau_c, ctx[p].v_r,
                );
                v[p] = vp;
                i[p] = ip;
            }
        };
        // Emits records strictly inside (t, stop]; the closed form is always
        // evaluated from the segment start so records are exact.
        let emit_records = |stop: f64,
                                v0: &[f64],
                                i0: &[f64],
                                next_record: &mut Option<f64>,
                                pending: &mut Vec<f64>,
                                snapshots: &mut Vec<Snapshot>,
                                checkpoints: &mut Vec<Snapshot>| {
            let eval = |at: f64| -> (Vec<f64>, Vec<f64>) {
                let mut vv = vec![0.0; n];
                let mut ii = vec![0.0; n];
                for p in 0..n {
                    let (a, b2) = propagate_one(
                        v0[p],
                        i0[p],
                        drives[p],
                        at - t,
                        ctx[p].tau_v,
                        ctx[p].tau_c,
                        ctx[p].v_r,
                    );
                    vv[p] = a;
                    ii[p] = b2;
                }
                (vv, ii)
            };
            if let Some(dt) = opts.record_dt {
                while let Some(r) = next_record {
                    if *r > stop + 1e-15 {
                        break;
                    }
                    let (vv, ii) = eval(*r);
                    snapshots.push(Snapshot {
                        t: *r,
                        v: vv,
                        i: ii,
                    });
                    *next_record = Some(*r + dt);
                }
            }
            pending.retain(|&c| {
                if c <= stop + 1e-15 {
                    let (vv, ii) = eval(c);
                    checkpoints.push(Snapshot { t: c, v: vv, i: ii });
                    false
                } else {
                    true
                }
            });
        };

        match crossings.iter().cloned().min_by(|a, b| {
            a.partial_cmp(b).unwrap()
        }) {
            None => {
                emit_records(
                    seg_end,
                    &v,
                    &i,
                    &mut next_record,
                    &mut pending_checkpoints,
                    &mut snapshots,
                    &mut checkpoints,
                );
                advance_to(&mut v, &mut i, seg_len, &drives, &ctx);
                t = seg_end;
            }
            Some((s, _)) => {
                emit_records(
                    s,
                    &v,
                    &i,
                    &mut next_record,
                    &mut pending_checkpoints,
                    &mut snapshots,
                    &mut checkpoints,
                );
                // Batch everything landing within tol of the earliest event.
                let mut batch: Vec<(f64, usize)> = crossings
                    .into_iter()
                    .filter(|&(u, _)| u <= s + opts.tol)
                    .collect();
                batch.sort_by(|a, b| a.partial_cmp(b).unwrap());

                advance_to(&mut v, &mut i, s - t, &drives, &ctx);
                for &(_, p) in &batch {
                    let a = i[p] - ctx[p].i_th;
                    if a < floor {
                        return Err(EngineError::Grazing {
                            t: s,
                            neuron: p,
                            speed: a,
                            floor,
                        });
                    }
                    spike_counts[p] += 1;
                    times[p].push(s);
                    speeds[p].push(a);
                    v[p] = ctx[p].v_r;
                    for q in 0..n {
                        let w = net.weights[q][p];
                        if w != 0.0 {
                            i[q] += w;
                        }
                    }
                    n_events += 1;
                    if n_events > opts.max_events {
                        return Err(EngineError::EventBudget(n_events));
                    }
                }
                t = s;
            }
        }
        for &x in &i {
            sup_abs_current = sup_abs_current.max(x.abs());
        }
    }

    let spikes = times
        .into_iter()
        .zip(speeds)
        .enumerate()
        .map(|(p, (ts, sp))| SpikeTrain {
            neuron: p,
            times: ts,
            speeds: Some(sp),
        })
        .collect();

    Ok(TrajectoryRecord {
        scheme: SchemeTag::DeterministicEvent,
        h: opts.record_dt.unwrap_or(0.0),
        horizon,
        snapshots,
        checkpoints,
        spikes,
        final_state: NetworkState {
            v,
            i,
            t: horizon,
            spike_counts,
        },
        sup_abs_current,
    })
}
