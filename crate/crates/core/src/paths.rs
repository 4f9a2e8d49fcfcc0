//! Coupled Brownian increments on a fine grid.
//!
//! All step sizes in a ladder share one underlying path: coarse increments
//! are exact block sums of fine ones. Increments are regenerated on demand
//! from a counter-keyed generator instead of stored, so memory stays flat for
//! long horizons while every `(neuron, step)` value is bit-reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("step range {0}..{1} outside 0..{2}")]
    OutOfRange(usize, usize, usize),
    #[error("coarsening factor {0} must be a power of two dividing {1}")]
    BadFactor(usize, usize),
}

/// Fine steps generated per keyed stream; one stream is keyed by
/// `(seed, neuron, chunk)`.
const CHUNK: usize = 1024;
/// Domain tag keeping these streams disjoint from other seeded uses.
const STREAM_TAG: u64 = 0x4c49_465f_4252_4f57;

/// Deterministic Gaussian increment source on a fine grid.
///
/// `increment(neuron, m)` is N(0, h_fine), independent across `(neuron, m)`
/// pairs and reproducible for a fixed seed.
#[derive(Clone, Debug)]
pub struct BrownianStore {
    seed: u64,
    h_fine: f64,
    n_fine_steps: usize,
    n_neurons: usize,
}

impl BrownianStore {
    pub fn new(seed: u64, h_fine: f64, n_fine_steps: usize, n_neurons: usize) -> Self {
        assert!(h_fine > 0.0 && h_fine.is_finite());
        BrownianStore {
            seed,
            h_fine,
            n_fine_steps,
            n_neurons,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn h_fine(&self) -> f64 {
        self.h_fine
    }

    pub fn n_fine_steps(&self) -> usize {
        self.n_fine_steps
    }

    pub fn n_neurons(&self) -> usize {
        self.n_neurons
    }

    fn chunk_rng(&self, neuron: usize, chunk: usize) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(neuron as u64).to_le_bytes());
        key[16..24].copy_from_slice(&(chunk as u64).to_le_bytes());
        key[24..32].copy_from_slice(&STREAM_TAG.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }

    fn fill_chunk(&self, neuron: usize, chunk: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), CHUNK);
        let mut rng = self.chunk_rng(neuron, chunk);
        let scale = self.h_fine.sqrt();
        for slot in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *slot = scale * z;
        }
    }

    /// Fine increments for `neuron` over `range`, in step order.
    pub fn fine_increments(&self, neuron: usize, range: Range<usize>) -> Result<Vec<f64>, PathError> {
        if range.end > self.n_fine_steps || range.start > range.end {
            return Err(PathError::OutOfRange(
                range.start,
                range.end,
                self.n_fine_steps,
            ));
        }
        let mut out = Vec::with_capacity(range.len());
        let mut buf = [0.0; CHUNK];
        let mut m = range.start;
        while m < range.end {
            let chunk = m / CHUNK;
            self.fill_chunk(neuron, chunk, &mut buf);
            let lo = m - chunk * CHUNK;
            let hi = CHUNK.min(lo + (range.end - m));
            out.extend_from_slice(&buf[lo..hi]);
            m += hi - lo;
        }
        Ok(out)
    }

    fn check_factor(&self, factor: usize) -> Result<(), PathError> {
        if factor == 0 || !factor.is_power_of_two() || self.n_fine_steps % factor != 0 {
            return Err(PathError::BadFactor(factor, self.n_fine_steps));
        }
        Ok(())
    }

    /// Coarse increment for step size `factor * h_fine`: the exact
    /// left-to-right sum of the corresponding fine block.
    pub fn coarsen(&self, factor: usize, neuron: usize, coarse_step: usize) -> Result<f64, PathError> {
        self.check_factor(factor)?;
        let start = coarse_step * factor;
        let fine = self.fine_increments(neuron, start..start + factor)?;
        Ok(fine.iter().fold(0.0, |acc, &x| acc + x))
    }

    /// Coarse increments for a contiguous range of coarse steps.
    pub fn coarse_increments(
        &self,
        factor: usize,
        neuron: usize,
        coarse_range: Range<usize>,
    ) -> Result<Vec<f64>, PathError> {
        self.check_factor(factor)?;
        let fine = self.fine_increments(
            neuron,
            coarse_range.start * factor..coarse_range.end * factor,
        )?;
        Ok(fine
            .chunks_exact(factor)
            .map(|block| block.iter().fold(0.0, |acc, &x| acc + x))
            .collect())
    }
}
