//! Independent brute-force and closed-form oracles used to validate the
//! engine and the statistics before trusting large experiments.

use crate::model::{threshold_current, NeuronParams};
use crate::spikes::SpikeTrain;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid catch-up problem: {0}")]
    InvalidProblem(String),
    #[error("constant current {0} never reaches threshold")]
    NeverSpikes(f64),
    #[error("event location failed: {0}")]
    EventLocation(String),
}

/// First-passage problem for the threshold-gap pair `(R, J)`:
/// `dR = (J - R/tau_v) du` from `R_0 = -d`, `J` an OU process reverting to
/// the crossing speed `a` from `J_0 = a`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CatchupProblem {
    pub d: f64,
    pub a: f64,
    pub sigma: f64,
    pub tau_v: f64,
    pub tau_c: f64,
    pub n_samples: usize,
    /// Inner Euler step; `None` selects `1e-3 * min(d/a, tau_v)`.
    pub inner_step: Option<f64>,
    /// Censoring horizon; `None` selects `1e3 * d/a`.
    pub cap_time: Option<f64>,
    pub seed: u64,
}

/// Monte Carlo estimate of the first two passage-time moments.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CatchupEstimate {
    pub m1: f64,
    pub m1_se: f64,
    pub m2: f64,
    pub m2_se: f64,
    pub censored: usize,
    pub n_samples: usize,
}

fn catchup_rng(seed: u64, sample: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(sample as u64).to_le_bytes());
    key[16..24].copy_from_slice(&0x4341_5443_4855_5055u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Estimate passage-time moments of the catch-up law by explicit Euler
/// simulation. Paths that run past the cap are censored at the cap value and
/// reported.
pub fn catchup_first_passage_mc(prob: &CatchupProblem) -> Result<CatchupEstimate, OracleError> {
    if prob.d < 0.0 || prob.a <= 0.0 || prob.tau_v <= 0.0 || prob.tau_c <= 0.0 {
        return Err(OracleError::InvalidProblem(
            "need d >= 0, a > 0, tau_v > 0, tau_c > 0".into(),
        ));
    }
    if prob.n_samples == 0 {
        return Err(OracleError::InvalidProblem("n_samples = 0".into()));
    }
    if prob.d == 0.0 {
        return Ok(CatchupEstimate {
            m1: 0.0,
            m1_se: 0.0,
            m2: 0.0,
            m2_se: 0.0,
            censored: 0,
            n_samples: prob.n_samples,
        });
    }
    let scale = prob.d / prob.a;
    let du = prob.inner_step.unwrap_or(1e-3 * scale.min(prob.tau_v));
    let cap = prob.cap_time.unwrap_or(1e3 * scale);
    if du <= 0.0 || cap <= du {
        return Err(OracleError::InvalidProblem("bad step/cap".into()));
    }
    let sq_du = du.sqrt();
    let noise = prob.sigma / prob.tau_c;

    let mut sum_t = 0.0;
    let mut sum_t2 = 0.0;
    let mut sum_t2_sq = 0.0; // for the SE of m2
    let mut sum_t_sq = 0.0;
    let mut censored = 0usize;

    for k in 0..prob.n_samples {
        let mut rng = catchup_rng(prob.seed, k);
        let mut r = -prob.d;
        let mut j = prob.a;
        let mut u = 0.0;
        let tau = loop {
            let r_next = r + du * (j - r / prob.tau_v);
            let z: f64 = StandardNormal.sample(&mut rng);
            let j_next = j + du * (-(j - prob.a) / prob.tau_c) + noise * sq_du * z;
            let u_next = u + du;
            if r_next >= 0.0 {
                // Linear interpolation of the crossing inside the step.
                let frac = if r_next > r { -r / (r_next - r) } else { 1.0 };
                break u + frac * du;
            }
            if u_next >= cap {
                censored += 1;
                break cap;
            }
            r = r_next;
            j = j_next;
            u = u_next;
        };
        sum_t += tau;
        sum_t_sq += tau * tau;
        sum_t2 += tau * tau;
        sum_t2_sq += tau * tau * tau * tau;
    }

    let n = prob.n_samples as f64;
    let m1 = sum_t / n;
    let m2 = sum_t2 / n;
    let var_t = (sum_t_sq / n - m1 * m1).max(0.0);
    let var_t2 = (sum_t2_sq / n - m2 * m2).max(0.0);
    Ok(CatchupEstimate {
        m1,
        m1_se: (var_t / n).sqrt(),
        m2,
        m2_se: (var_t2 / n).sqrt(),
        censored,
        n_samples: prob.n_samples,
    })
}

/// Exact first-passage time from reset under a constant current:
/// `tau_v ln(i0 / (i0 - I_th))`.
pub fn closed_form_spike_time(i0: f64, params: &NeuronParams) -> Result<f64, OracleError> {
    let i_th = threshold_current(params);
    if i0 <= i_th {
        return Err(OracleError::NeverSpikes(i0));
    }
    Ok(params.tau_v * (i0 / (i0 - i_th)).ln())
}

/// Options for the deterministic 1D integrate-and-fire warm-up integrator.
#[derive(Clone, Debug)]
pub struct IfWarmupOptions {
    /// RK4 step.
    pub step: f64,
    /// Event-location bisection tolerance.
    pub tol: f64,
}

impl Default for IfWarmupOptions {
    fn default() -> Self {
        IfWarmupOptions {
            step: 1e-3,
            tol: 1e-12,
        }
    }
}

/// Event-resolved trajectory of the normalized IF unit
/// `x' = f(x) + input(t)` on `[0, 1)` with reset to 0 at threshold 1.
///
/// `f` must be continuously differentiable and nonincreasing on `[0, 1]`;
/// `x0` must lie in `[0, 1)`. Crossings are located by bisection to `tol`,
/// re-integrating from the bracket start.
pub fn if_warmup_simulate(
    f: impl Fn(f64) -> f64,
    input: impl Fn(f64) -> f64,
    x0: f64,
    horizon: f64,
    opts: &IfWarmupOptions,
) -> Result<SpikeTrain, OracleError> {
    if !(0.0..1.0).contains(&x0) {
        return Err(OracleError::InvalidProblem("x0 must lie in [0,1)".into()));
    }
    if opts.step <= 0.0 || opts.tol <= 0.0 {
        return Err(OracleError::InvalidProblem("bad step/tol".into()));
    }

    let rk4 = |t: f64, x: f64, h: f64| -> f64 {
        let k1 = f(x) + input(t);
        let k2 = f(x + 0.5 * h * k1) + input(t + 0.5 * h);
        let k3 = f(x + 0.5 * h * k2) + input(t + 0.5 * h);
        let k4 = f(x + h * k3) + input(t + h);
        x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    // Value at t_prev + dt, integrating from (t_prev, x_prev) in substeps.
    let probe = |t_prev: f64, x_prev: f64, dt: f64| -> f64 {
        let n_sub = 4usize;
        let h = dt / n_sub as f64;
        let mut x = x_prev;
        let mut t = t_prev;
        for _ in 0..n_sub {
            x = rk4(t, x, h);
            t += h;
        }
        x
    };

    let mut t = 0.0;
    let mut x = x0;
    let mut times = Vec::new();
    let mut speeds = Vec::new();

    while t < horizon {
        let h = opts.step.min(horizon - t);
        let x_next = rk4(t, x, h);
        if x_next >= 1.0 {
            let mut lo = 0.0;
            let mut hi = h;
            while hi - lo > opts.tol {
                let mid = 0.5 * (lo + hi);
                if probe(t, x, mid) >= 1.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let s = t + hi;
            if !s.is_finite() {
                return Err(OracleError::EventLocation(format!(
                    "non-finite event near t={t}"
                )));
            }
            if s <= horizon {
                times.push(s);
                speeds.push(f(1.0) + input(s));
            }
            t = s;
            x = 0.0;
        } else {
            t += h;
            x = x_next;
        }
    }

    Ok(SpikeTrain {
        neuron: 0,
        times,
        speeds: Some(speeds),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Drive;
    use crate::spikes::interlacing_check;
    use rand::Rng;

    fn lif_params() -> NeuronParams {
        NeuronParams {
            tau_v: 1.0,
            tau_c: 1.0,
            v_th: 1.0,
            v_r: 0.0,
            sigma: 0.0,
            drive: Drive::Constant(0.0),
        }
    }

    #[test]
    fn closed_form_examples() {
        let p = lif_params();
        let t = closed_form_spike_time(2.0, &p).unwrap();
        assert!((t - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(closed_form_spike_time(1.0, &p).is_err());
        assert!(closed_form_spike_time(0.5, &p).is_err());
        // Slow-crossing blow-up near threshold current.
        let slow = closed_form_spike_time(1.0 + 1e-6, &p).unwrap();
        assert!((slow - (1e6f64 + 1.0).ln()).abs() / slow < 1e-6);
        // Large current limit.
        assert!(closed_form_spike_time(1e9, &p).unwrap() < 1e-8);
    }

    #[test]
    fn catchup_zero_gap() {
        let est = catchup_first_passage_mc(&CatchupProblem {
            d: 0.0,
            a: 1.0,
            sigma: 0.25,
            tau_v: 1.0,
            tau_c: 1.0,
            n_samples: 10,
            inner_step: None,
            cap_time: None,
            seed: 1,
        })
        .unwrap();
        assert_eq!(est.m1, 0.0);
        assert_eq!(est.m2, 0.0);
    }

    #[test]
    fn catchup_deterministic_small_gap() {
        // sigma = 0: passage solves the gap ODE, time ~ d/a up to O(d).
        let d = 0.01;
        let est = catchup_first_passage_mc(&CatchupProblem {
            d,
            a: 1.0,
            sigma: 0.0,
            tau_v: 1.0,
            tau_c: 1.0,
            n_samples: 4,
            inner_step: None,
            cap_time: None,
            seed: 3,
        })
        .unwrap();
        assert!((est.m1 - d).abs() / d < 0.02, "m1 {} vs {}", est.m1, d);
        assert_eq!(est.censored, 0);
    }

    #[test]
    fn catchup_reproducible() {
        let prob = CatchupProblem {
            d: 0.01,
            a: 0.5,
            sigma: 0.25,
            tau_v: 1.0,
            tau_c: 1.0,
            n_samples: 200,
            inner_step: None,
            cap_time: None,
            seed: 77,
        };
        let a = catchup_first_passage_mc(&prob).unwrap();
        let b = catchup_first_passage_mc(&prob).unwrap();
        assert_eq!(a.m1, b.m1);
        assert_eq!(a.m2, b.m2);
    }

    #[test]
    fn if_warmup_unit_speed() {
        let train = if_warmup_simulate(|_| 0.0, |_| 1.0, 0.0, 5.5, &IfWarmupOptions::default())
            .unwrap();
        assert_eq!(train.times.len(), 5);
        for (k, &s) in train.times.iter().enumerate() {
            assert!((s - (k + 1) as f64).abs() < 1e-9, "spike {k} at {s}");
        }
    }

    #[test]
    fn if_warmup_monotone_in_initial_condition() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let c: f64 = rng.random_range(0.0..1.5);
            let base: f64 = rng.random_range(1.2..2.5);
            let amp: f64 = rng.random_range(0.0..0.5);
            let freq: f64 = rng.random_range(0.5..3.0);
            let f = move |x: f64| -c * x;
            let input = move |t: f64| base + amp * (freq * t).sin();
            let x0: f64 = rng.random_range(0.0..0.5);
            let delta: f64 = rng.random_range(0.01..0.4);
            let lo = if_warmup_simulate(f, input, x0, 6.0, &IfWarmupOptions::default()).unwrap();
            let hi =
                if_warmup_simulate(f, input, x0 + delta, 6.0, &IfWarmupOptions::default()).unwrap();
            let k = lo.times.len().min(hi.times.len());
            for j in 0..k {
                assert!(
                    hi.times[j] <= lo.times[j] + 1e-9,
                    "monotonicity violated at spike {j}"
                );
            }
        }
    }

    #[test]
    fn if_warmup_spike_count_bound() {
        // N(T; x0) <= x0 + int (I + f(0))_+ for nonincreasing f.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let c: f64 = rng.random_range(0.0..1.0);
            let base: f64 = rng.random_range(0.8..2.0);
            let f = move |x: f64| -c * x;
            let input = move |_t: f64| base;
            let x0: f64 = rng.random_range(0.0..0.9);
            let horizon = 8.0;
            let train =
                if_warmup_simulate(f, input, x0, horizon, &IfWarmupOptions::default()).unwrap();
            let bound = x0 + horizon * (base + 0.0f64).max(0.0);
            assert!(
                (train.times.len() as f64) <= bound + 1e-9,
                "count {} vs bound {bound}",
                train.times.len()
            );
        }
    }

    #[test]
    fn if_warmup_interlacing_small_sample() {
        // Ordered initial data with common input interlace; the full 1000
        // instance sweep runs in the acceptance suite.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let c: f64 = rng.random_range(0.0..1.2);
            let base: f64 = rng.random_range(1.1..2.2);
            let amp: f64 = rng.random_range(0.0..0.4);
            let f = move |x: f64| -c * x;
            let input = move |t: f64| base + amp * (1.7 * t).cos();
            let a0: f64 = rng.random_range(0.0..0.95);
            let b0: f64 = rng.random_range(0.0..0.95);
            let ta = if_warmup_simulate(f, input, a0, 7.0, &IfWarmupOptions::default()).unwrap();
            let tb = if_warmup_simulate(f, input, b0, 7.0, &IfWarmupOptions::default()).unwrap();
            assert!(interlacing_check(&ta, &tb) <= 1);
        }
    }

    #[test]
    fn if_warmup_lipschitz_spike_time_bound() {
        // |s_k(x0 + d) - s_k(x0)| <= (1/a*) S*^{k-1} d in mean-driven runs.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let c: f64 = rng.random_range(0.0..0.8);
            let base: f64 = rng.random_range(1.3..2.0);
            let f = move |x: f64| -c * x;
            let input = move |_t: f64| base;
            let a_star = -c + base; // f(1) + inf I
            let s_star = base / a_star; // (f(0) + inf I) / (f(1) + inf I)
            assert!(a_star > 0.0);
            let x0: f64 = rng.random_range(0.0..0.5);
            let delta: f64 = rng.random_range(0.001..0.05);
            let lo = if_warmup_simulate(f, input, x0, 10.0, &IfWarmupOptions::default()).unwrap();
            let hi =
                if_warmup_simulate(f, input, x0 + delta, 10.0, &IfWarmupOptions::default())
                    .unwrap();
            let k = lo.times.len().min(hi.times.len());
            for j in 0..k {
                let gap = (hi.times[j] - lo.times[j]).abs();
                let bound = s_star.powi(j as i32) * delta / a_star;
                assert!(
                    gap <= bound * (1.0 + 1e-6) + 1e-9,
                    "spike {j}: gap {gap} > bound {bound}"
                );
            }
        }
    }
}
