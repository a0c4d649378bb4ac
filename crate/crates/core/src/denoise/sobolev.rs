//! Sobolev-type smoothness functional evaluated through the 2-D FFT.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::numkit::fft::real_to_complex;
use crate::numkit::{fft2, ifft2};

use super::{DenoiseError, IntensityGrid};

/// `F(μ) = n⁻² Σ_ζ (1 + ‖ζ‖²)^s |DFT μ(ζ)|²` on pixel means; equals the
/// functional `s_pix Σ (1 + ‖ζ‖²)^s |û|²` of the intensity `u = μ/s_pix`.
#[derive(Debug, Clone)]
pub struct SobolevPenalty {
    n: usize,
    weights: Vec<f64>,
}

fn symmetric_frequency(j: usize, n: usize) -> f64 {
    if j < n / 2 {
        j as f64
    } else {
        j as f64 - n as f64
    }
}

impl SobolevPenalty {
    pub fn new(n: usize, exponent: f64) -> Result<Self, DenoiseError> {
        if n == 0 || !n.is_power_of_two() {
            return Err(DenoiseError::InvalidGrid(format!("side {n} is not a power of two")));
        }
        if !(exponent >= 0.0) || !exponent.is_finite() {
            return Err(DenoiseError::InvalidConfig(format!("Sobolev exponent must be >= 0, got {exponent}")));
        }
        let mut weights = Vec::with_capacity(n * n);
        for k1 in 0..n {
            let a = symmetric_frequency(k1, n);
            for k2 in 0..n {
                let b = symmetric_frequency(k2, n);
                weights.push((1.0 + 4.0 * PI * PI * (a * a + b * b)).powf(exponent));
            }
        }
        Ok(Self { n, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn transform(&self, mu: &[f64]) -> Vec<Complex64> {
        let mut spec = real_to_complex(mu);
        fft2(&mut spec, self.n).expect("penalty side validated");
        spec
    }

    pub fn value(&self, mu: &[f64]) -> f64 {
        let spec = self.transform(mu);
        let total: f64 = spec.iter().zip(&self.weights).map(|(c, w)| w * c.norm_sqr()).sum();
        total / (self.n * self.n) as f64
    }

    pub fn value_grad(&self, mu: &[f64]) -> (f64, Vec<f64>) {
        let mut spec = self.transform(mu);
        let n2 = (self.n * self.n) as f64;
        let mut total = 0.0;
        for (c, w) in spec.iter_mut().zip(&self.weights) {
            total += w * c.norm_sqr();
            *c *= *w;
        }
        ifft2(&mut spec, self.n).expect("penalty side validated");
        let grad = spec.iter().map(|c| 2.0 * c.re / n2).collect();
        (total / n2, grad)
    }
}

/// Value and gradient with respect to the intensity `u`.
pub fn sobolev_value_grad(u: &IntensityGrid, exponent: f64) -> Result<(f64, Vec<f64>), DenoiseError> {
    let pen = SobolevPenalty::new(u.n(), exponent)?;
    let s = u.pixel_area();
    let (value, grad_mu) = pen.value_grad(&u.pixel_means());
    Ok((value, grad_mu.into_iter().map(|g| g * s).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    #[test]
    fn zero_input() {
        let u = IntensityGrid::constant(8, 0.0).unwrap();
        let (v, g) = sobolev_value_grad(&u, 0.01).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn parseval_at_zero_exponent() {
        let mut rng = Rng::new(2);
        let mu: Vec<f64> = (0..256).map(|_| rng.uniform()).collect();
        let pen = SobolevPenalty::new(16, 0.0).unwrap();
        let (v, g) = pen.value_grad(&mu);
        let sq: f64 = mu.iter().map(|x| x * x).sum();
        assert!((v - sq).abs() <= 1e-12 * sq);
        for (gi, xi) in g.iter().zip(&mu) {
            assert!((gi - 2.0 * xi).abs() <= 1e-12);
        }
    }

    #[test]
    fn constant_image_sees_only_zero_frequency() {
        let pen = SobolevPenalty::new(8, 0.5).unwrap();
        let v = pen.value(&vec![2.0; 64]);
        assert!((v - 4.0 * 64.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = Rng::new(11);
        let values: Vec<f64> = (0..64).map(|_| 1.0 + 64.0 * rng.uniform()).collect();
        let u = IntensityGrid::new(8, values.clone()).unwrap();
        let (_, grad) = sobolev_value_grad(&u, 0.01).unwrap();
        let f = |x: &[f64]| sobolev_value_grad(&IntensityGrid::new(8, x.to_vec()).unwrap(), 0.01).unwrap().0;
        for _ in 0..20 {
            let d: Vec<f64> = (0..64).map(|_| rng.standard_normal()).collect();
            let h = 1e-3;
            let plus: Vec<f64> = values.iter().zip(&d).map(|(a, b)| a + h * b).collect();
            let minus: Vec<f64> = values.iter().zip(&d).map(|(a, b)| a - h * b).collect();
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            let an: f64 = grad.iter().zip(&d).map(|(a, b)| a * b).sum();
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-12), "{fd} vs {an}");
        }
    }
}
