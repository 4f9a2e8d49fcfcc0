//! Spike-train data model, exact/numerical matching and mismatch events.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpikeError {
    #[error("spike times must be strictly increasing (neuron {0})")]
    NonMonotone(usize),
    #[error("speeds length {got} != times length {want} (neuron {neuron})")]
    SpeedsLength {
        neuron: usize,
        got: usize,
        want: usize,
    },
}

/// Spike times of one neuron, optionally annotated with the pre-spike
/// crossing speeds `A^k = I(s^-) - I_th`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SpikeTrain {
    pub neuron: usize,
    pub times: Vec<f64>,
    pub speeds: Option<Vec<f64>>,
}

impl SpikeTrain {
    pub fn new(neuron: usize, times: Vec<f64>, speeds: Option<Vec<f64>>) -> Result<Self, SpikeError> {
        let t = SpikeTrain {
            neuron,
            times,
            speeds,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), SpikeError> {
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SpikeError::NonMonotone(self.neuron));
        }
        if let Some(s) = &self.speeds {
            if s.len() != self.times.len() {
                return Err(SpikeError::SpeedsLength {
                    neuron: self.neuron,
                    got: s.len(),
                    want: self.times.len(),
                });
            }
        }
        Ok(())
    }

    /// Number of spikes with `s <= t`.
    pub fn count_up_to(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }
}

/// Per-neuron outcome of horizon matching.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NeuronMatch {
    pub neuron: usize,
    /// Counts up to the horizon agree.
    pub matched: bool,
    pub horizon_mismatch: bool,
    /// Index-paired spike-time errors `eps_k = s_hat_k - s_k`; present only
    /// when matched.
    pub ste: Option<Vec<f64>>,
    pub exact_count: usize,
    pub numerical_count: usize,
}

/// Network-level match record: one entry per neuron plus the conjunction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpikeMatch {
    pub neurons: Vec<NeuronMatch>,
    pub network_matched: bool,
}

/// Pair exact and numerical spikes of one neuron by index.
///
/// If the spike counts up to `horizon` agree, spikes are paired in order and
/// the spike-time errors are returned; otherwise the horizon-mismatch flag is
/// set and no errors are produced. Empty trains with equal (zero) counts are
/// matched with an empty error list.
pub fn match_trains(exact: &SpikeTrain, numerical: &SpikeTrain, horizon: f64) -> NeuronMatch {
    let ne = exact.count_up_to(horizon);
    let nn = numerical.count_up_to(horizon);
    if ne == nn {
        let ste = exact.times[..ne]
            .iter()
            .zip(&numerical.times[..nn])
            .map(|(s, sh)| sh - s)
            .collect();
        NeuronMatch {
            neuron: exact.neuron,
            matched: true,
            horizon_mismatch: false,
            ste: Some(ste),
            exact_count: ne,
            numerical_count: nn,
        }
    } else {
        NeuronMatch {
            neuron: exact.neuron,
            matched: false,
            horizon_mismatch: true,
            ste: None,
            exact_count: ne,
            numerical_count: nn,
        }
    }
}

/// Match every neuron of a network; trains must be index-aligned.
pub fn match_network(exact: &[SpikeTrain], numerical: &[SpikeTrain], horizon: f64) -> SpikeMatch {
    debug_assert_eq!(exact.len(), numerical.len());
    let neurons: Vec<NeuronMatch> = exact
        .iter()
        .zip(numerical)
        .map(|(e, n)| match_trains(e, n, horizon))
        .collect();
    let network_matched = neurons.iter().all(|m| m.matched);
    SpikeMatch {
        neurons,
        network_matched,
    }
}

/// True iff some grid step `[t_m, t_{m+1})` contains different spike counts.
pub fn stepwise_mismatch(exact: &SpikeTrain, numerical: &SpikeTrain, h: f64, horizon: f64) -> bool {
    let n_steps = (horizon / h).round() as usize;
    let bin = |t: f64| -> Option<usize> {
        let m = (t / h).floor() as usize;
        (m < n_steps).then_some(m)
    };
    let mut counts = vec![(0u32, 0u32); n_steps];
    for &t in exact.times.iter().take_while(|&&t| t < horizon) {
        if let Some(m) = bin(t) {
            counts[m].0 += 1;
        }
    }
    for &t in numerical.times.iter().take_while(|&&t| t < horizon) {
        if let Some(m) = bin(t) {
            counts[m].1 += 1;
        }
    }
    counts.iter().any(|&(a, b)| a != b)
}

/// Supremum over event times of the spike-count difference `|N_a(t) - N_b(t)|`.
///
/// Events at identical times are applied together before the difference is
/// evaluated.
pub fn interlacing_check(train_a: &SpikeTrain, train_b: &SpikeTrain) -> u64 {
    let (a, b) = (&train_a.times, &train_b.times);
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut ca, mut cb) = (0i64, 0i64);
    let mut max_diff = 0i64;
    while ia < a.len() || ib < b.len() {
        let ta = a.get(ia).copied().unwrap_or(f64::INFINITY);
        let tb = b.get(ib).copied().unwrap_or(f64::INFINITY);
        let t = ta.min(tb);
        while ia < a.len() && a[ia] == t {
            ca += 1;
            ia += 1;
        }
        while ib < b.len() && b[ib] == t {
            cb += 1;
            ib += 1;
        }
        max_diff = max_diff.max((ca - cb).abs());
    }
    max_diff as u64
}

/// The canonical matching scale `delta_h = kappa * sqrt(h log(1/h))`.
pub fn delta_h(h: f64, kappa: f64) -> f64 {
    kappa * (h * (1.0 / h).ln()).sqrt()
}

/// Auxiliary events of the count-mismatch decomposition at scale `delta`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DecompositionFlags {
    /// An exact spike falls within `delta` of the horizon.
    pub boundary: bool,
    /// Two exact spikes within `2 delta` of each other up to `horizon + delta`.
    pub dense: bool,
    /// Some index-paired spike-time error up to `horizon + delta` exceeds
    /// `delta` (set conservatively when pairing over the extended window is
    /// impossible).
    pub err: bool,
    /// Horizon count mismatch at `horizon`.
    pub mismatch: bool,
}

impl DecompositionFlags {
    pub fn any_auxiliary(&self) -> bool {
        self.boundary || self.dense || self.err
    }
}

/// Evaluate the auxiliary events `B_boundary`, `B_dense`, `B_err` and the
/// horizon mismatch for one neuron pair. The decomposition lemma asserts
/// `mismatch` implies one of the auxiliaries.
pub fn decomposition_flags(
    exact: &SpikeTrain,
    numerical: &SpikeTrain,
    horizon: f64,
    delta: f64,
) -> DecompositionFlags {
    let boundary = exact
        .times
        .iter()
        .any(|&s| s > horizon - delta && s <= horizon + delta);
    let dense = exact
        .times
        .windows(2)
        .any(|w| w[0] <= horizon + delta && w[1] - w[0] <= 2.0 * delta);

    let ne = exact.count_up_to(horizon + delta);
    let nn = numerical.count_up_to(horizon + delta);
    let err = if ne == nn {
        exact.times[..ne]
            .iter()
            .zip(&numerical.times[..nn])
            .any(|(s, sh)| (sh - s).abs() > delta)
    } else {
        true
    };

    let mismatch = exact.count_up_to(horizon) != numerical.count_up_to(horizon);
    DecompositionFlags {
        boundary,
        dense,
        err,
        mismatch,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train(neuron: usize, times: &[f64]) -> SpikeTrain {
        SpikeTrain::new(neuron, times.to_vec(), None).unwrap()
    }

    #[test]
    fn matching_pairs_by_index() {
        let e = train(0, &[0.5, 1.2]);
        let n = train(0, &[0.53125, 1.21875]);
        let m = match_trains(&e, &n, 2.0);
        assert!(m.matched);
        let ste = m.ste.unwrap();
        assert!((ste[0] - 0.03125).abs() < 1e-15);
        assert!((ste[1] - (1.21875 - 1.2)).abs() < 1e-12);
    }

    #[test]
    fn missing_spike_is_horizon_mismatch() {
        let e = train(0, &[0.5]);
        let n = train(0, &[]);
        let m = match_trains(&e, &n, 1.0);
        assert!(!m.matched);
        assert!(m.horizon_mismatch);
        assert!(m.ste.is_none());
    }

    #[test]
    fn boundary_layer_counts_as_mismatch() {
        // Exact spike just inside the horizon, numerical just outside.
        let e = train(0, &[0.99]);
        let n = train(0, &[1.01]);
        let m = match_trains(&e, &n, 1.0);
        assert!(m.horizon_mismatch);
    }

    #[test]
    fn empty_trains_match() {
        let m = match_trains(&train(0, &[]), &train(0, &[]), 5.0);
        assert!(m.matched);
        assert_eq!(m.ste.unwrap().len(), 0);
    }

    #[test]
    fn matching_symmetry_up_to_sign() {
        let e = train(0, &[0.4, 0.9, 1.5]);
        let n = train(0, &[0.45, 0.95, 1.4]);
        let fwd = match_trains(&e, &n, 2.0).ste.unwrap();
        let bwd = match_trains(&n, &e, 2.0).ste.unwrap();
        for (a, b) in fwd.iter().zip(&bwd) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn stepwise_mismatch_binning() {
        let e = train(0, &[0.49]);
        let n = train(0, &[0.5]);
        assert!(stepwise_mismatch(&e, &n, 0.25, 1.0));

        let e = train(0, &[0.30]);
        let n = train(0, &[0.40]);
        assert!(!stepwise_mismatch(&e, &n, 0.25, 1.0));

        let same = train(0, &[0.25, 0.75]);
        assert!(!stepwise_mismatch(&same, &same.clone(), 0.25, 1.0));
    }

    #[test]
    fn stepwise_match_implies_horizon_match_at_grid_times() {
        // Random instances: equal bin counts force equal cumulative counts at
        // every grid time.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let h = 0.125;
            let horizon = 2.0;
            let mut et = Vec::new();
            let mut nt = Vec::new();
            let mut t = 0.0f64;
            while t < horizon {
                t += rng.random_range(0.05..0.4);
                if t >= horizon {
                    break;
                }
                et.push(t);
                // Numerical spike in the same bin.
                let bin = (t / h).floor();
                let lo = bin * h;
                let hi = lo + h;
                nt.push(rng.random_range(lo..hi));
            }
            nt.sort_by(|a, b| a.partial_cmp(b).unwrap());
            nt.dedup();
            let e = train(0, &et);
            let n = train(0, &nt);
            if stepwise_mismatch(&e, &n, h, horizon) {
                continue; // dedup may have dropped one
            }
            for m in 0..=((horizon / h) as usize) {
                let tm = m as f64 * h;
                assert_eq!(
                    e.count_up_to(tm - 1e-12),
                    n.count_up_to(tm - 1e-12),
                    "counts diverge at grid time {tm}"
                );
            }
        }
    }

    #[test]
    fn interlacing_examples() {
        let a = train(0, &[1.0, 3.0]);
        let b = train(0, &[2.0, 4.0]);
        assert_eq!(interlacing_check(&a, &b), 1);
        assert_eq!(interlacing_check(&a, &a.clone()), 0);
        let c = train(0, &[1.0, 2.0, 3.0]);
        let d = train(0, &[10.0]);
        assert_eq!(interlacing_check(&c, &d), 3);
    }

    #[test]
    fn decomposition_flags_basics() {
        let e = train(0, &[0.3, 0.8]);
        let n = train(0, &[0.31, 0.81]);
        let f = decomposition_flags(&e, &n, 2.0, 0.05);
        assert!(!f.boundary && !f.dense && !f.err && !f.mismatch);

        // Spike near the horizon trips the boundary auxiliary.
        let e = train(0, &[1.99]);
        let n = train(0, &[2.01]);
        let f = decomposition_flags(&e, &n, 2.0, 0.05);
        assert!(f.boundary);
        assert!(f.mismatch);
    }

    #[test]
    fn train_validation() {
        assert!(SpikeTrain::new(0, vec![1.0, 1.0], None).is_err());
        assert!(SpikeTrain::new(0, vec![1.0, 0.5], None).is_err());
        assert!(SpikeTrain::new(0, vec![1.0], Some(vec![0.1, 0.2])).is_err());
    }
}
