//! Error statistics and diagnostics: spike-impact kernels, matched strong
//! error, paired weak bias, mismatch probabilities, crossing-speed flux
//! histograms, OU proxy scales and convergence-order fits.

use crate::engine::TrajectoryRecord;
use crate::model::NetworkSpec;
use crate::spikes::{SpikeMatch, SpikeTrain};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("negative argument {0} to psi")]
    NegativePsiArg(f64),
    #[error("no matched samples in the strong-error pool")]
    InsufficientMatchedPool,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("spike train {0} carries no crossing speeds")]
    MissingSpeeds(usize),
    #[error("sigma_eff must be > 0, got {0}")]
    NonPositiveSigma(f64),
    #[error("order fit needs >= 3 positive (h, error) pairs")]
    BadFitInput,
    #[error("empty histogram")]
    EmptyHistogram,
    #[error("layer {0} not present")]
    NoSuchLayer(usize),
}

/// Spike-impact kernel `psi(x) = (1 - exp(-x/tau_c))^2`, the squared
/// normalized L1 misalignment of an exponential synaptic kernel shifted by x.
pub fn psi(x: f64, tau_c: f64) -> Result<f64, AnalysisError> {
    if x < 0.0 {
        return Err(AnalysisError::NegativePsiArg(x));
    }
    let e = 1.0 - (-x / tau_c).exp();
    Ok(e * e)
}

/// Exact L1 misalignment of the exponential kernel under a time shift:
/// `2 tau_c (1 - exp(-|eps|/tau_c)) = 2 tau_c sqrt(psi(|eps|))`.
pub fn kernel_l1_misalignment(eps: f64, tau_c: f64) -> f64 {
    2.0 * tau_c * (1.0 - (-eps.abs() / tau_c).exp())
}

/// Terminal states and match record of one coupled sample, restricted to a
/// common prefix network.
pub struct StrongSample<'a> {
    pub coarse_v: &'a [f64],
    pub coarse_i: &'a [f64],
    pub reference_v: &'a [f64],
    pub reference_i: &'a [f64],
    pub spike_match: &'a SpikeMatch,
}

/// Matched strong-error statistics over a sample pool.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrongErrorStats {
    /// Mean over matched samples of the terminal sum-of-squares state gap.
    pub mse: f64,
    pub mse_se: f64,
    pub n_matched: usize,
    pub n_total: usize,
    pub matched_fraction: f64,
    /// Mean over matched samples of the spike-impact sum over matched spikes.
    pub impact_sum_mean: f64,
}

/// Strong MSE restricted to network-matched samples.
///
/// The state convention is an unnormalized sum of squares over the prefix
/// state vector (recorded as such in output metadata). An empty matched pool
/// is an explicit error, never a silent zero.
pub fn matched_strong_error(
    samples: &[StrongSample<'_>],
    tau_c: f64,
) -> Result<StrongErrorStats, AnalysisError> {
    let n_total = samples.len();
    let mut gaps = Vec::new();
    let mut impacts = Vec::new();
    for s in samples {
        if !s.spike_match.network_matched {
            continue;
        }
        let mut gap = 0.0;
        for k in 0..s.coarse_v.len() {
            let dv = s.coarse_v[k] - s.reference_v[k];
            let di = s.coarse_i[k] - s.reference_i[k];
            gap += dv * dv + di * di;
        }
        let mut impact = 0.0;
        for m in &s.spike_match.neurons {
            if let Some(ste) = &m.ste {
                for &e in ste {
                    impact += psi(e.abs(), tau_c)?;
                }
            }
        }
        gaps.push(gap);
        impacts.push(impact);
    }
    if gaps.is_empty() {
        return Err(AnalysisError::InsufficientMatchedPool);
    }
    let n = gaps.len() as f64;
    let mse = gaps.iter().sum::<f64>() / n;
    let mse_se = if gaps.len() > 1 {
        let s2 = gaps.iter().map(|g| (g - mse) * (g - mse)).sum::<f64>() / (n - 1.0);
        (s2 / n).sqrt()
    } else {
        0.0
    };
    Ok(StrongErrorStats {
        mse,
        mse_se,
        n_matched: gaps.len(),
        n_total,
        matched_fraction: gaps.len() as f64 / n_total.max(1) as f64,
        impact_sum_mean: impacts.iter().sum::<f64>() / n,
    })
}

/// Smooth readout of one layer at time `t_eval`:
/// `tanh(c_v vbar + c_I Ibar + c_r r)`, where `r` is the exponentially
/// filtered spike rate `sum_s exp(-(t-s)/tau_filter) / n_layer`.
pub fn readout_from_parts(
    v_layer: &[f64],
    i_layer: &[f64],
    spike_times: &[&[f64]],
    t_eval: f64,
    coefs: (f64, f64, f64),
    filter_tau: f64,
) -> f64 {
    let n = v_layer.len() as f64;
    let vbar = v_layer.iter().sum::<f64>() / n;
    let ibar = i_layer.iter().sum::<f64>() / n;
    let mut r = 0.0;
    for times in spike_times {
        for &s in times.iter() {
            if s <= t_eval {
                r += (-(t_eval - s) / filter_tau).exp();
            }
        }
    }
    r /= n;
    (coefs.0 * vbar + coefs.1 * ibar + coefs.2 * r).tanh()
}

/// Readout of the trajectory's terminal state on the last layer of depth
/// `layer` (0-based layer index).
pub fn readout_observable(
    traj: &TrajectoryRecord,
    net: &NetworkSpec,
    layer: usize,
    coefs: (f64, f64, f64),
    filter_tau: f64,
) -> Result<f64, AnalysisError> {
    let idx = net.neurons_in_layer(layer);
    if idx.is_empty() {
        return Err(AnalysisError::NoSuchLayer(layer));
    }
    let v: Vec<f64> = idx.iter().map(|&p| traj.final_state.v[p]).collect();
    let i: Vec<f64> = idx.iter().map(|&p| traj.final_state.i[p]).collect();
    let spikes: Vec<&[f64]> = idx.iter().map(|&p| traj.spikes[p].times.as_slice()).collect();
    Ok(readout_from_parts(
        &v,
        &i,
        &spikes,
        traj.horizon,
        coefs,
        filter_tau,
    ))
}

/// Readout evaluated at stored checkpoint `k` (states and spikes truncated to
/// the checkpoint time).
pub fn readout_at_checkpoint(
    traj: &TrajectoryRecord,
    net: &NetworkSpec,
    layer: usize,
    coefs: (f64, f64, f64),
    filter_tau: f64,
    checkpoint: usize,
) -> Result<f64, AnalysisError> {
    let snap = &traj.checkpoints[checkpoint];
    let idx = net.neurons_in_layer(layer);
    if idx.is_empty() {
        return Err(AnalysisError::NoSuchLayer(layer));
    }
    let v: Vec<f64> = idx.iter().map(|&p| snap.v[p]).collect();
    let i: Vec<f64> = idx.iter().map(|&p| snap.i[p]).collect();
    let spikes: Vec<&[f64]> = idx
        .iter()
        .map(|&p| {
            let times = &traj.spikes[p].times;
            let cut = times.partition_point(|&s| s <= snap.t);
            &times[..cut]
        })
        .collect();
    Ok(readout_from_parts(&v, &i, &spikes, snap.t, coefs, filter_tau))
}

/// Paired weak-bias estimate: mean of `coarse - reference` observable
/// differences with its standard error. Mismatched samples are included by
/// design; weak error cannot be controlled by pruning.
pub fn weak_bias(pairs: &[(f64, f64)]) -> Result<(f64, f64), AnalysisError> {
    if pairs.len() < 2 {
        return Err(AnalysisError::TooFewSamples {
            need: 2,
            got: pairs.len(),
        });
    }
    let n = pairs.len() as f64;
    let diffs: Vec<f64> = pairs.iter().map(|(c, r)| c - r).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let s2 = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (s2 / n).sqrt()))
}

/// Wilson 95% interval for a binomial proportion.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BinomialEstimate {
    pub p_hat: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

pub fn wilson_interval(successes: usize, n: usize) -> BinomialEstimate {
    let z = 1.959963984540054f64; // 97.5% normal quantile
    if n == 0 {
        return BinomialEstimate {
            p_hat: f64::NAN,
            lo: f64::NAN,
            hi: f64::NAN,
            n,
        };
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    BinomialEstimate {
        p_hat: p,
        lo: (center - half).max(0.0),
        hi: (center + half).min(1.0),
        n,
    }
}

/// Empirical horizon-mismatch frequencies.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MismatchStats {
    pub per_neuron: Vec<BinomialEstimate>,
    pub network: BinomialEstimate,
}

pub fn mismatch_probability(samples: &[SpikeMatch]) -> Result<MismatchStats, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::TooFewSamples { need: 1, got: 0 });
    }
    let n_neurons = samples[0].neurons.len();
    let mut neuron_mis = vec![0usize; n_neurons];
    let mut net_mis = 0usize;
    for s in samples {
        if !s.network_matched {
            net_mis += 1;
        }
        for (k, m) in s.neurons.iter().enumerate() {
            if m.horizon_mismatch {
                neuron_mis[k] += 1;
            }
        }
    }
    Ok(MismatchStats {
        per_neuron: neuron_mis
            .into_iter()
            .map(|c| wilson_interval(c, samples.len()))
            .collect(),
        network: wilson_interval(net_mis, samples.len()),
    })
}

/// Per-unit-time histogram of crossing speeds over an observation window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FluxHistogram {
    /// Bin edges, ascending; bin k covers `(edges[k], edges[k+1]]`.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
    /// Number of aggregated trajectories.
    pub n_samples: usize,
    pub horizon: f64,
}

impl FluxHistogram {
    /// Geometric edges on `(lo, hi]`.
    pub fn geometric_edges(lo: f64, hi: f64, n_bins: usize) -> Vec<f64> {
        let ratio = (hi / lo).powf(1.0 / n_bins as f64);
        let mut edges = Vec::with_capacity(n_bins + 1);
        let mut e = lo;
        for _ in 0..n_bins {
            edges.push(e);
            e *= ratio;
        }
        edges.push(hi);
        edges
    }

    /// Default edges: 64 geometric bins on `(1e-4 I_th, 10 I_th]`.
    pub fn default_edges(i_th: f64) -> Vec<f64> {
        Self::geometric_edges(1e-4 * i_th, 10.0 * i_th, 64)
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        0.5 * (self.edges[k] + self.edges[k + 1])
    }

    /// Expected crossings per unit time landing in bin k.
    pub fn bin_rate(&self, k: usize) -> f64 {
        self.counts[k] as f64 / (self.n_samples as f64 * self.horizon)
    }

    /// Total crossings per unit time inside the binned range.
    pub fn total_rate(&self) -> f64 {
        self.counts.iter().sum::<u64>() as f64 / (self.n_samples as f64 * self.horizon)
    }

    /// `int phi(a) dFlux(a)` per unit time, with `phi` evaluated at bin
    /// midpoints; equals `(1/T) E[sum_k phi(A_k)]` up to binning error.
    pub fn integrate(&self, phi: impl Fn(f64) -> f64) -> f64 {
        (0..self.n_bins())
            .map(|k| phi(self.midpoint(k)) * self.bin_rate(k))
            .sum()
    }
}

/// Aggregate the crossing speeds of reference trains into a flux histogram.
/// Trains must carry speeds.
pub fn crossing_speed_histogram(
    trains: &[&SpikeTrain],
    horizon: f64,
    n_samples: usize,
    edges: Vec<f64>,
) -> Result<FluxHistogram, AnalysisError> {
    if edges.len() < 2 {
        return Err(AnalysisError::EmptyHistogram);
    }
    let mut counts = vec![0u64; edges.len() - 1];
    let mut underflow = 0u64;
    let mut overflow = 0u64;
    for train in trains {
        let speeds = train
            .speeds
            .as_ref()
            .ok_or(AnalysisError::MissingSpeeds(train.neuron))?;
        for (&t, &a) in train.times.iter().zip(speeds) {
            if t > horizon {
                continue;
            }
            if a <= edges[0] {
                underflow += 1;
            } else if a > *edges.last().unwrap() {
                overflow += 1;
            } else {
                // First edge strictly below a.
                let k = edges.partition_point(|&e| e < a) - 1;
                counts[k.min(edges.len() - 2)] += 1;
            }
        }
    }
    Ok(FluxHistogram {
        edges,
        counts,
        underflow,
        overflow,
        n_samples,
        horizon,
    })
}

/// Stationary Gaussian suprema of the unconstrained OU surrogate, used only
/// as scale estimates for the boundary densities:
/// `rho_max ~ sqrt(tau_c)(tau_c+tau_v) / (pi sigma_eff^2 tau_v^{3/2})` and
/// `rho_V_max ~ sqrt(tau_c+tau_v) / (sqrt(pi) sigma_eff tau_v)`.
pub fn ou_proxy_scales(
    tau_v: f64,
    tau_c: f64,
    sigma_eff: f64,
) -> Result<(f64, f64), AnalysisError> {
    if sigma_eff <= 0.0 {
        return Err(AnalysisError::NonPositiveSigma(sigma_eff));
    }
    let rho_max = tau_c.sqrt() * (tau_c + tau_v)
        / (std::f64::consts::PI * sigma_eff * sigma_eff * tau_v.powf(1.5));
    let rho_v_max = (tau_c + tau_v).sqrt() / (std::f64::consts::PI.sqrt() * sigma_eff * tau_v);
    Ok((rho_max, rho_v_max))
}

/// Effective diffusion scale of the current under presynaptic Poisson-like
/// input: `sqrt(sigma_ext^2 + kappa tau_c^2 sum_j W_j^2 r_j)`.
pub fn effective_sigma(
    sigma_ext: f64,
    tau_c: f64,
    weights_row: &[f64],
    rates: &[f64],
    kappa: f64,
) -> f64 {
    let jump_var: f64 = weights_row
        .iter()
        .zip(rates)
        .map(|(w, r)| w * w * r)
        .sum();
    (sigma_ext * sigma_ext + kappa * tau_c * tau_c * jump_var).sqrt()
}

/// Least-squares fit of `log error` against `log h`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

pub fn fit_order(hs: &[f64], errors: &[f64]) -> Result<OrderFit, AnalysisError> {
    if hs.len() != errors.len() || hs.len() < 3 {
        return Err(AnalysisError::BadFitInput);
    }
    if hs.iter().chain(errors).any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(AnalysisError::BadFitInput);
    }
    let x: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let xbar = x.iter().sum::<f64>() / n;
    let ybar = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - xbar) * (xi - xbar)).sum();
    let sxy: f64 = x
        .iter()
        .zip(&y)
        .map(|(xi, yi)| (xi - xbar) * (yi - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let residuals = x
        .iter()
        .zip(&y)
        .map(|(xi, yi)| yi - (intercept + slope * xi))
        .collect();
    Ok(OrderFit {
        slope,
        intercept,
        residuals,
    })
}

/// Aggregated error statistics for one `(h, depth, T)` cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub h: f64,
    pub depth: usize,
    pub horizon: f64,
    pub strong: Option<StrongErrorStats>,
    pub mismatch: Option<MismatchStats>,
    pub weak: Option<(f64, f64)>,
    /// Polylogarithmic diagnostic `MSE / h`.
    pub mse_over_h: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spikes::{match_network, SpikeTrain};

    #[test]
    fn psi_examples() {
        assert_eq!(psi(0.0, 0.2).unwrap(), 0.0);
        let tau_c = 0.7;
        let x = tau_c * std::f64::consts::LN_2;
        assert!((psi(x, tau_c).unwrap() - 0.25).abs() < 1e-15);
        assert!((psi(1e9, tau_c).unwrap() - 1.0).abs() < 1e-12);
        assert!(psi(-0.1, tau_c).is_err());
    }

    #[test]
    fn psi_bounds() {
        let tau_c = 0.35;
        let mut x = 1e-6;
        while x < 50.0 {
            let v = psi(x, tau_c).unwrap();
            assert!((0.0..=1.0).contains(&v));
            assert!(v <= x * x / (tau_c * tau_c) + 1e-15);
            x *= 1.7;
        }
    }

    #[test]
    fn kernel_identity_with_psi() {
        let tau_c = 0.2;
        for &eps in &[0.0, 1e-4, 0.01, 0.3, 2.0, -0.5] {
            let lhs = kernel_l1_misalignment(eps, tau_c);
            let rhs = 2.0 * tau_c * psi(eps.abs(), tau_c).unwrap().sqrt();
            assert!((lhs - rhs).abs() < 1e-14);
        }
        assert_eq!(kernel_l1_misalignment(0.0, tau_c), 0.0);
        assert!((kernel_l1_misalignment(1e9, tau_c) - 2.0 * tau_c).abs() < 1e-12);
    }

    #[test]
    fn kernel_misalignment_matches_quadrature() {
        // Independent oracle: Simpson quadrature of the shifted-kernel L1
        // distance on a long window.
        let tau_c = 0.45;
        let eps = 0.17;
        let s = 1.0;
        let k = |t: f64, start: f64| {
            if t >= start {
                (-(t - start) / tau_c).exp()
            } else {
                0.0
            }
        };
        let f = |t: f64| (k(t, s) - k(t, s + eps)).abs();
        let (a, b) = (0.0, s + eps + 40.0 * tau_c);
        let n = 2_000_000usize; // even
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        let quad = acc * h / 3.0;
        let formula = kernel_l1_misalignment(eps, tau_c);
        assert!(
            (quad - formula).abs() < 1e-6,
            "quadrature {quad} vs formula {formula}"
        );
    }

    fn train(times: &[f64]) -> SpikeTrain {
        SpikeTrain {
            neuron: 0,
            times: times.to_vec(),
            speeds: None,
        }
    }

    #[test]
    fn strong_error_hand_built() {
        let e = [train(&[0.5])];
        let n = [train(&[0.5])];
        let m = match_network(&e, &n, 1.0);
        let sample = StrongSample {
            coarse_v: &[0.1],
            coarse_i: &[-0.1],
            reference_v: &[0.0],
            reference_i: &[0.0],
            spike_match: &m,
        };
        let stats = matched_strong_error(&[sample], 0.2).unwrap();
        assert!((stats.mse - 0.02).abs() < 1e-15);
        assert_eq!(stats.n_matched, 1);

        // Identical trajectories give zero.
        let zero = StrongSample {
            coarse_v: &[0.3],
            coarse_i: &[0.4],
            reference_v: &[0.3],
            reference_i: &[0.4],
            spike_match: &m,
        };
        assert_eq!(matched_strong_error(&[zero], 0.2).unwrap().mse, 0.0);
    }

    #[test]
    fn strong_error_empty_pool_is_an_error() {
        let e = [train(&[0.5])];
        let n = [train(&[])];
        let m = match_network(&e, &n, 1.0);
        let s = StrongSample {
            coarse_v: &[0.0],
            coarse_i: &[0.0],
            reference_v: &[0.0],
            reference_i: &[0.0],
            spike_match: &m,
        };
        assert!(matches!(
            matched_strong_error(&[s], 0.2),
            Err(AnalysisError::InsufficientMatchedPool)
        ));
    }

    #[test]
    fn weak_bias_examples() {
        let (m, se) = weak_bias(&[(0.3, 0.3), (0.7, 0.7)]).unwrap();
        assert_eq!(m, 0.0);
        assert_eq!(se, 0.0);
        let (m, se) = weak_bias(&[(1.0, 0.0), (0.0, 1.0)]).unwrap();
        assert_eq!(m, 0.0);
        assert!((se - 1.0).abs() < 1e-15);
        assert!(weak_bias(&[(1.0, 0.0)]).is_err());
    }

    #[test]
    fn weak_bias_constant_observable_is_zero() {
        let pairs: Vec<(f64, f64)> = (0..50).map(|_| (0.42, 0.42)).collect();
        let (m, se) = weak_bias(&pairs).unwrap();
        assert_eq!(m, 0.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn mismatch_probability_examples() {
        let e = [train(&[0.5])];
        let matched = match_network(&e, &[train(&[0.6])], 1.0);
        let mismatched = match_network(&e, &[train(&[])], 1.0);
        let all = mismatch_probability(&[matched.clone(), matched.clone()]).unwrap();
        assert_eq!(all.network.p_hat, 0.0);
        let half = mismatch_probability(&[matched, mismatched]).unwrap();
        assert_eq!(half.network.p_hat, 0.5);
        assert!(half.network.lo > 0.0 && half.network.hi < 1.0);
    }

    #[test]
    fn readout_zero_state_is_zero_and_bounded() {
        let v = [0.0; 4];
        let i = [0.0; 4];
        let spikes: Vec<&[f64]> = vec![&[]; 4];
        let r = readout_from_parts(&v, &i, &spikes, 1.0, (0.8, 0.5, 1.0), 0.35);
        assert_eq!(r, 0.0);

        let v = [5.0, 9.0, -3.0, 2.0];
        let i = [7.0, 1.0, 4.0, -8.0];
        let times = [0.1, 0.2, 0.9];
        let spikes: Vec<&[f64]> = vec![&times; 4];
        let r = readout_from_parts(&v, &i, &spikes, 1.0, (0.8, 0.5, 1.0), 0.35);
        assert!((-1.0..1.0).contains(&r));
    }

    #[test]
    fn flux_histogram_counts_and_rates() {
        let edges = FluxHistogram::geometric_edges(1e-4, 10.0, 64);
        assert_eq!(edges.len(), 65);
        let t = SpikeTrain {
            neuron: 0,
            times: vec![0.5, 1.0, 1.5],
            speeds: Some(vec![0.9, 1.1, 20.0]),
        };
        let h = crossing_speed_histogram(&[&t], 2.0, 1, edges).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 2);
        assert_eq!(h.overflow, 1);
        assert!((h.total_rate() - 1.0).abs() < 1e-12);

        let empty = SpikeTrain {
            neuron: 0,
            times: vec![],
            speeds: Some(vec![]),
        };
        let h0 =
            crossing_speed_histogram(&[&empty], 2.0, 1, FluxHistogram::default_edges(1.0)).unwrap();
        assert_eq!(h0.counts.iter().sum::<u64>(), 0);

        let no_speeds = SpikeTrain {
            neuron: 3,
            times: vec![0.1],
            speeds: None,
        };
        assert!(matches!(
            crossing_speed_histogram(&[&no_speeds], 1.0, 1, FluxHistogram::default_edges(1.0)),
            Err(AnalysisError::MissingSpeeds(3))
        ));
    }

    #[test]
    fn ou_proxy_examples() {
        let (rho, rho_v) = ou_proxy_scales(1.0, 1.0, 1.0).unwrap();
        assert!((rho - 2.0 / std::f64::consts::PI).abs() < 1e-12);
        assert!((rho_v - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        // Homogeneity in sigma_eff.
        let (r2, rv2) = ou_proxy_scales(1.0, 1.0, 2.0).unwrap();
        assert!((rho / r2 - 4.0).abs() < 1e-12);
        assert!((rho_v / rv2 - 2.0).abs() < 1e-12);
        assert!(ou_proxy_scales(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn effective_sigma_examples() {
        assert_eq!(effective_sigma(0.3, 1.0, &[1.0, 2.0], &[0.0, 0.0], 1.0), 0.3);
        assert_eq!(effective_sigma(0.0, 1.0, &[2.0], &[1.0], 1.0), 2.0);
        // Monotone in every rate.
        let lo = effective_sigma(0.1, 0.5, &[1.0, -0.5], &[0.2, 0.4], 1.0);
        let hi = effective_sigma(0.1, 0.5, &[1.0, -0.5], &[0.3, 0.4], 1.0);
        assert!(hi >= lo);
    }

    #[test]
    fn fit_order_recovers_exact_slopes() {
        let hs: Vec<f64> = (5..10).map(|e| 2f64.powi(-e)).collect();
        let e1: Vec<f64> = hs.iter().map(|h| 3.0 * h).collect();
        let f = fit_order(&hs, &e1).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        let e2: Vec<f64> = hs.iter().map(|h| 3.0 * h.sqrt()).collect();
        assert!((fit_order(&hs, &e2).unwrap().slope - 0.5).abs() < 1e-12);
        // Polylog factor drags the fitted slope slightly below one and the
        // MSE/h diagnostic grows.
        let e3: Vec<f64> = hs.iter().map(|h| h * (1.0 + h.recip().ln())).collect();
        let f3 = fit_order(&hs, &e3).unwrap();
        assert!(f3.slope < 1.0 && f3.slope > 0.7, "slope {}", f3.slope);
        let diag: Vec<f64> = e3.iter().zip(&hs).map(|(e, h)| e / h).collect();
        assert!(diag.windows(2).all(|w| w[1] > w[0]));

        assert!(fit_order(&hs[..2], &e1[..2]).is_err());
        assert!(fit_order(&[0.1, -0.2, 0.3], &[1.0, 1.0, 1.0]).is_err());
    }
}
