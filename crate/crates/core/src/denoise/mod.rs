//! Variational Poisson denoising under multiscale likelihood-ratio constraints.
//!
//! Internally the iterate is the expected count per pixel, `μ = s·u`, so that
//! NADAM steps and the termination tolerance act on count-sized numbers.

pub mod boxes;
pub mod gradient;
pub mod kl;
pub mod nadam;
pub mod pipeline;
pub mod sobolev;
pub mod synthetic;

pub use boxes::{estimate_quantile, penalty_pen, rhs_r, BoxSystem, MultiscaleFamily, PenaltyConvention, QuantileEstimate};
pub use gradient::{constraint_subgradient_b, stochastic_al_gradient, DenoiseProblem, GradientCounters};
pub use kl::{kl_divergence, lrt_statistic};
pub use nadam::nadam_minimize;
pub use pipeline::{build_system, denoise, denoise_observed, DenoiseConfig, DenoiseOutcome, DenoiseRunError, IterationMetrics};
pub use sobolev::{sobolev_value_grad, SobolevPenalty};
pub use synthetic::SyntheticImage;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{NumError, Rng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DenoiseError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient entry at pixel {index} in NADAM iteration {iteration}")]
    NonFiniteGradient { iteration: usize, index: usize },
    #[error(transparent)]
    Num(#[from] NumError),
}

fn check_side(n: usize, len: usize) -> Result<(), DenoiseError> {
    if n == 0 || !n.is_power_of_two() {
        return Err(DenoiseError::InvalidGrid(format!("side {n} is not a power of two")));
    }
    if len != n * n {
        return Err(DenoiseError::InvalidGrid(format!("expected {} values, got {len}", n * n)));
    }
    Ok(())
}

/// Intensity per unit area on an `n × n` pixel grid of `(0,1)²`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityGrid {
    n: usize,
    values: Vec<f64>,
}

impl IntensityGrid {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self, DenoiseError> {
        check_side(n, values.len())?;
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(DenoiseError::InvalidGrid(format!(
                "pixel {i} has value {}, intensities must be finite and nonnegative",
                values[i]
            )));
        }
        Ok(Self { n, values })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self, DenoiseError> {
        Self::new(n, vec![value; n * n])
    }

    /// From expected counts per pixel.
    pub fn from_pixel_means(n: usize, means: Vec<f64>) -> Result<Self, DenoiseError> {
        let scale = (n * n) as f64;
        Self::new(n, means.into_iter().map(|m| m * scale).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pixel_area(&self) -> f64 {
        1.0 / (self.n * self.n) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `s·u_i`
    pub fn pixel_means(&self) -> Vec<f64> {
        let s = self.pixel_area();
        self.values.iter().map(|v| v * s).collect()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Observed photon counts per pixel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsGrid {
    n: usize,
    counts: Vec<u64>,
}

impl CountsGrid {
    pub fn new(n: usize, counts: Vec<u64>) -> Result<Self, DenoiseError> {
        check_side(n, counts.len())?;
        Ok(Self { n, counts })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `Z/s`, the observation read as an intensity.
    pub fn to_intensity(&self) -> IntensityGrid {
        let scale = (self.n * self.n) as f64;
        IntensityGrid {
            n: self.n,
            values: self.counts.iter().map(|&c| c as f64 * scale).collect(),
        }
    }
}

/// Independent Poisson counts with mean `s·u_i` in every pixel.
pub fn simulate_counts(truth: &IntensityGrid, rng: &mut Rng) -> CountsGrid {
    let counts = truth
        .pixel_means()
        .into_iter()
        .map(|m| rng.poisson(m).expect("validated intensities are finite and nonnegative"))
        .collect();
    CountsGrid { n: truth.n, counts }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(IntensityGrid::new(3, vec![0.0; 9]).is_err());
        assert!(IntensityGrid::new(2, vec![0.0; 3]).is_err());
        assert!(IntensityGrid::new(2, vec![0.0, 1.0, -1.0, 0.0]).is_err());
        assert!(IntensityGrid::new(2, vec![0.0, 1.0, f64::NAN, 0.0]).is_err());
        assert!(CountsGrid::new(4, vec![0; 16]).is_ok());
    }

    #[test]
    fn zero_intensity_gives_zero_counts() {
        let truth = IntensityGrid::constant(16, 0.0).unwrap();
        let z = simulate_counts(&truth, &mut Rng::new(0));
        assert_eq!(z.total(), 0);
    }

    #[test]
    fn total_count_mean_and_disjoint_independence() {
        let c = 20.0;
        let truth = IntensityGrid::constant(64, c).unwrap();
        let reps = 1000;
        let totals: Vec<f64> = (0..reps)
            .map(|r| simulate_counts(&truth, &mut Rng::new(r)).total() as f64)
            .collect();
        let mean = totals.iter().sum::<f64>() / reps as f64;
        assert!((mean - c).abs() <= 4.0 * (c / reps as f64).sqrt(), "{mean}");

        let truth = IntensityGrid::constant(8, 64.0 * 3.0).unwrap();
        let reps = 10_000;
        let mut sums = (0.0, 0.0, 0.0);
        let mut pairs = Vec::with_capacity(reps);
        for r in 0..reps {
            let z = simulate_counts(&truth, &mut Rng::derived(5, r as u64));
            let a: u64 = z.counts()[0..4].iter().sum();
            let b: u64 = z.counts()[60..64].iter().sum();
            pairs.push((a as f64, b as f64));
            sums.0 += a as f64;
            sums.1 += b as f64;
        }
        let (ma, mb) = (sums.0 / reps as f64, sums.1 / reps as f64);
        for (a, b) in &pairs {
            sums.2 += (a - ma) * (b - mb);
        }
        let cov = sums.2 / (reps - 1) as f64;
        // Var of the product of two independent Poisson(12) deviations is 144.
        assert!(cov.abs() <= 4.0 * (144.0 / reps as f64).sqrt(), "{cov}");
    }

    #[test]
    fn intensity_conversions() {
        let z = CountsGrid::new(2, vec![1, 0, 2, 3]).unwrap();
        let u = z.to_intensity();
        assert_eq!(u.values(), &[4.0, 0.0, 8.0, 12.0]);
        assert_eq!(u.pixel_means(), vec![1.0, 0.0, 2.0, 3.0]);
    }
}
