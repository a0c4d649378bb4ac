//! Seedable, platform-independent random numbers.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::NumError;

/// Means at or above this are split into independent chunks for sampling.
const POISSON_CHUNK: f64 = 30.0;

/// ChaCha8 stream; equal `(seed, stream)` pairs give equal outputs everywhere.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent generator for worker or replication `stream` under `master_seed`.
    pub fn derived(master_seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Exact Poisson sample by sequential-search inversion, splitting large
    /// means into a sum of independent chunks of mean at most 30.
    pub fn poisson(&mut self, mean: f64) -> Result<u64, NumError> {
        if !mean.is_finite() || mean < 0.0 {
            return Err(NumError::InvalidMean(mean));
        }
        if mean == 0.0 {
            return Ok(0);
        }
        if mean < POISSON_CHUNK {
            return Ok(self.poisson_inversion(mean));
        }
        let chunks = (mean / POISSON_CHUNK).ceil();
        let part = mean / chunks;
        Ok((0..chunks as u64).map(|_| self.poisson_inversion(part)).sum())
    }

    fn poisson_inversion(&mut self, mean: f64) -> u64 {
        let u = self.uniform();
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            let next = cdf + p;
            // cdf saturated below u through rounding
            if next == cdf {
                break;
            }
            cdf = next;
        }
        k
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
