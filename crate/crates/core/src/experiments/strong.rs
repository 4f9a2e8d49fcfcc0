//! Strong-error experiment: coupled reference/coarse runs from one Brownian
//! path per sample, matched terminal MSE restricted to prefix depths.

use super::{sample_seed, ExperimentError};
use crate::analysis::{fit_order, wilson_interval, BinomialEstimate, OrderFit};
use crate::config::ScenarioConfig;
use crate::engine::{simulate, SimOptions};
use crate::model::NetworkSpec;
use crate::paths::BrownianStore;
use crate::spikes::match_network;
use rayon::prelude::*;
use serde::Serialize;

/// Aggregated statistics of one `(h, depth)` cell.
#[derive(Clone, Debug, Serialize)]
pub struct StrongCell {
    pub h: f64,
    pub depth: usize,
    pub horizon: f64,
    pub n_samples: usize,
    pub n_matched: usize,
    pub matched_fraction: f64,
    /// Mean terminal sum-of-squares gap over matched samples.
    pub mse: Option<f64>,
    pub mse_se: Option<f64>,
    /// Mean spike-impact sum over matched samples.
    pub impact_mean: Option<f64>,
    pub mismatch_network: BinomialEstimate,
    pub mismatch_per_neuron: Vec<BinomialEstimate>,
    pub mse_over_h: Option<f64>,
}

/// Raw per-sample row for the long CSV.
#[derive(Clone, Debug, Serialize)]
pub struct StrongSampleRow {
    pub sample: usize,
    pub h: f64,
    pub depth: usize,
    pub matched: bool,
    pub gap_sq: f64,
    pub impact: f64,
}

/// Pool adequacy diagnostics per coarse step, reported but never gated on:
/// mean reference spikes per neuron and the scarcest neuron's mean count of
/// reference spikes with crossing speed in `[0.5, 2] sqrt(h)`.
#[derive(Clone, Debug, Serialize)]
pub struct SpeedBandDiag {
    pub h: f64,
    pub mean_ref_spikes_per_neuron: f64,
    pub min_mean_band_count: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StrongOutcome {
    pub cells: Vec<StrongCell>,
    /// Log-log MSE slope per depth over the ladder.
    pub slopes: Vec<(usize, OrderFit)>,
    pub diagnostics: Vec<SpeedBandDiag>,
    pub rows: Vec<StrongSampleRow>,
    pub n_samples: usize,
    pub seeds: Vec<u64>,
}

struct PerH {
    neuron_mismatch: Vec<bool>,
    band_counts: Vec<u32>,
    /// `(matched, gap_sq, impact)` per requested depth.
    per_depth: Vec<(bool, f64, f64)>,
}

struct SampleResult {
    per_h: Vec<PerH>,
    ref_counts: Vec<u32>,
}

fn run_sample(
    cfg: &ScenarioConfig,
    net: &NetworkSpec,
    depths: &[usize],
    prefix_sets: &[Vec<usize>],
    horizon: f64,
    sample: usize,
) -> Result<SampleResult, ExperimentError> {
    let h_ref = cfg.grid.h_ref();
    let n_fine = (horizon / h_ref).round() as usize;
    let store = BrownianStore::new(
        sample_seed(cfg.seeds.master, sample),
        h_ref,
        n_fine,
        net.n_neurons,
    );
    let opts = SimOptions::default();
    let reference = simulate(net, &store, 1, horizon, &opts)?;
    let tau_c = cfg.network.tau_c;

    let ref_counts: Vec<u32> = reference
        .spikes
        .iter()
        .map(|t| t.times.len() as u32)
        .collect();

    let mut per_h = Vec::with_capacity(cfg.grid.coarse_exps.len());
    for &factor in &cfg.grid.coarse_factors() {
        let coarse = simulate(net, &store, factor, horizon, &opts)?;
        let h = factor as f64 * h_ref;
        let m = match_network(&reference.spikes, &coarse.spikes, horizon);

        let band_lo = 0.5 * h.sqrt();
        let band_hi = 2.0 * h.sqrt();
        let band_counts: Vec<u32> = reference
            .spikes
            .iter()
            .map(|t| {
                t.speeds
                    .as_ref()
                    .map(|s| {
                        s.iter().filter(|&&a| a >= band_lo && a <= band_hi).count() as u32
                    })
                    .unwrap_or(0)
            })
            .collect();

        let mut per_depth = Vec::with_capacity(depths.len());
        for prefix in prefix_sets {
            let matched = prefix.iter().all(|&p| m.neurons[p].matched);
            let mut gap_sq = 0.0;
            let mut impact = 0.0;
            for &p in prefix {
                let dv = coarse.final_state.v[p] - reference.final_state.v[p];
                let di = coarse.final_state.i[p] - reference.final_state.i[p];
                gap_sq += dv * dv + di * di;
                if matched {
                    if let Some(ste) = &m.neurons[p].ste {
                        for &e in ste {
                            let x = 1.0 - (-e.abs() / tau_c).exp();
                            impact += x * x;
                        }
                    }
                }
            }
            per_depth.push((matched, gap_sq, impact));
        }

        per_h.push(PerH {
            neuron_mismatch: m.neurons.iter().map(|nm| nm.horizon_mismatch).collect(),
            band_counts,
            per_depth,
        });
    }

    Ok(SampleResult { per_h, ref_counts })
}

/// Run the coupled strong-error experiment over the config's ladder and the
/// given prefix depths. Reference and coarse trajectories of one sample share
/// one Brownian path; shallow results are views of the full-depth run. The
/// pool grows until every cell has `matched_floor` matched samples or the
/// maximum pool size is exhausted.
pub fn run_strong_experiment(
    cfg: &ScenarioConfig,
    depths: &[usize],
) -> Result<StrongOutcome, ExperimentError> {
    let net = cfg.build_network()?;
    let horizon = cfg.grid.snapped_horizon();
    let prefix_sets: Vec<Vec<usize>> = depths.iter().map(|&d| net.prefix_neurons(d)).collect();
    let factors = cfg.grid.coarse_factors();
    let hs = cfg.grid.coarse_hs();

    let mut results: Vec<SampleResult> = Vec::new();
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
        let batch: Result<Vec<SampleResult>, ExperimentError> = (n_samples..n_samples + want)
            .into_par_iter()
            .map(|k| run_sample(cfg, &net, depths, &prefix_sets, horizon, k))
            .collect();
        results.extend(batch?);
        n_samples += want;

        let floor_met = (0..factors.len()).all(|hi| {
            (0..depths.len()).all(|di| {
                let matched = results
                    .iter()
                    .filter(|r| r.per_h[hi].per_depth[di].0)
                    .count();
                matched >= cfg.pools.matched_floor
            })
        });
        if floor_met || n_samples >= cfg.pools.max_samples {
            if !floor_met {
                // Identify the worst cell for the diagnostic.
                for (hi, &h) in hs.iter().enumerate() {
                    for (di, &depth) in depths.iter().enumerate() {
                        let matched = results
                            .iter()
                            .filter(|r| r.per_h[hi].per_depth[di].0)
                            .count();
                        if matched < cfg.pools.matched_floor {
                            return Err(ExperimentError::PoolFloor {
                                h,
                                depth,
                                got: matched,
                                floor: cfg.pools.matched_floor,
                                n_samples,
                            });
                        }
                    }
                }
            }
            break;
        }
    }

    // Sequential aggregation in sample order.
    let mut cells = Vec::new();
    let mut rows = Vec::new();
    for (hi, &h) in hs.iter().enumerate() {
        for (di, &depth) in depths.iter().enumerate() {
            let prefix = &prefix_sets[di];
            let mut gaps = Vec::new();
            let mut impacts = Vec::new();
            let mut net_mis = 0usize;
            let mut neuron_mis = vec![0usize; prefix.len()];
            for (s, r) in results.iter().enumerate() {
                let (matched, gap_sq, impact) = r.per_h[hi].per_depth[di];
                rows.push(StrongSampleRow {
                    sample: s,
                    h,
                    depth,
                    matched,
                    gap_sq,
                    impact,
                });
                if matched {
                    gaps.push(gap_sq);
                    impacts.push(impact);
                } else {
                    net_mis += 1;
                }
                for (j, &p) in prefix.iter().enumerate() {
                    if r.per_h[hi].neuron_mismatch[p] {
                        neuron_mis[j] += 1;
                    }
                }
            }
            let n_matched = gaps.len();
            let (mse, mse_se, impact_mean) = if n_matched > 0 {
                let nm = n_matched as f64;
                let mean = gaps.iter().sum::<f64>() / nm;
                let se = if n_matched > 1 {
                    let s2 =
                        gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (nm - 1.0);
                    Some((s2 / nm).sqrt())
                } else {
                    None
                };
                (
                    Some(mean),
                    se,
                    Some(impacts.iter().sum::<f64>() / nm),
                )
            } else {
                (None, None, None)
            };
            cells.push(StrongCell {
                h,
                depth,
                horizon,
                n_samples,
                n_matched,
                matched_fraction: n_matched as f64 / n_samples.max(1) as f64,
                mse,
                mse_se,
                impact_mean,
                mismatch_network: wilson_interval(net_mis, n_samples),
                mismatch_per_neuron: neuron_mis
                    .into_iter()
                    .map(|c| wilson_interval(c, n_samples))
                    .collect(),
                mse_over_h: mse.map(|m| m / h),
            });
        }
    }

    let mut slopes = Vec::new();
    for &depth in depths {
        let pts: Vec<(f64, f64)> = cells
            .iter()
            .filter(|c| c.depth == depth)
            .filter_map(|c| c.mse.map(|m| (c.h, m)))
            .collect();
        if pts.len() >= 3 && pts.iter().all(|p| p.1 > 0.0) {
            let (hv, ev): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            if let Ok(fit) = fit_order(&hv, &ev) {
                slopes.push((depth, fit));
            }
        }
    }

    let diagnostics = hs
        .iter()
        .enumerate()
        .map(|(hi, &h)| {
            let n = results.len().max(1) as f64;
            let n_neurons = net.n_neurons;
            let mean_ref = results
                .iter()
                .map(|r| r.ref_counts.iter().map(|&c| c as f64).sum::<f64>())
                .sum::<f64>()
                / (n * n_neurons as f64);
            let min_band = (0..n_neurons)
                .map(|p| {
                    results
                        .iter()
                        .map(|r| r.per_h[hi].band_counts[p] as f64)
                        .sum::<f64>()
                        / n
                })
                .fold(f64::INFINITY, f64::min);
            SpeedBandDiag {
                h,
                mean_ref_spikes_per_neuron: mean_ref,
                min_mean_band_count: min_band,
            }
        })
        .collect();

    let seeds = (0..n_samples)
        .map(|k| sample_seed(cfg.seeds.master, k))
        .collect();

    Ok(StrongOutcome {
        cells,
        slopes,
        diagnostics,
        rows,
        n_samples,
        seeds,
    })
}
