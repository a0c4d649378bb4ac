//! Nesterov-accelerated Adam with projection onto the nonnegative orthant.

use crate::numkit::Rng;

use super::DenoiseError;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const OFFSET: f64 = 1e-8;

/// Runs `iterations` NADAM steps from `x0` with constant `stepsize`, setting
/// negative entries to zero after each step. `gradient` receives the current
/// point and the generator, so it can draw its own random subsets.
pub fn nadam_minimize<G>(
    x0: Vec<f64>,
    iterations: usize,
    stepsize: f64,
    rng: &mut Rng,
    mut gradient: G,
) -> Result<Vec<f64>, DenoiseError>
where
    G: FnMut(&[f64], &mut Rng) -> Vec<f64>,
{
    if iterations == 0 || !(stepsize > 0.0) {
        return Err(DenoiseError::InvalidConfig(format!(
            "NADAM needs iterations >= 1 and a positive stepsize, got {iterations} and {stepsize}"
        )));
    }
    let mut x = x0;
    let mut m = vec![0.0; x.len()];
    let mut s = vec![0.0; x.len()];
    let mut b1t = 1.0;
    let mut b2t = 1.0;
    for it in 0..iterations {
        let g = gradient(&x, rng);
        if g.len() != x.len() {
            return Err(DenoiseError::InvalidConfig(format!(
                "gradient has length {}, iterate has {}",
                g.len(),
                x.len()
            )));
        }
        if let Some(index) = g.iter().position(|v| !v.is_finite()) {
            return Err(DenoiseError::NonFiniteGradient { iteration: it, index });
        }
        b1t *= BETA1;
        b2t *= BETA2;
        let b1_next = b1t * BETA1;
        for i in 0..x.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
            s[i] = BETA2 * s[i] + (1.0 - BETA2) * g[i] * g[i];
            let m_hat = BETA1 * m[i] / (1.0 - b1_next) + (1.0 - BETA1) * g[i] / (1.0 - b1t);
            let s_hat = s[i] / (1.0 - b2t);
            x[i] = (x[i] - stepsize * m_hat / (s_hat.sqrt() + OFFSET)).max(0.0);
        }
    }
    Ok(x)
}
