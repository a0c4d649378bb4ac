//! Kullback-Leibler discrepancy and the local likelihood ratio statistic.

/// `b − a + a ln(a/b)` for `a, b > 0`; `b` for `a = 0 ≤ b`; `+∞` otherwise.
#[inline]
pub fn kl_divergence(a: f64, b: f64) -> f64 {
    if a > 0.0 && b > 0.0 {
        b - a + a * (a / b).ln()
    } else if a == 0.0 && b >= 0.0 {
        b
    } else {
        f64::INFINITY
    }
}

/// `sqrt(2 |B| η(Z_B, u_B))`
pub fn lrt_statistic(z_mean: f64, u_mean: f64, size: f64) -> f64 {
    debug_assert!(size > 0.0);
    (2.0 * size * kl_divergence(z_mean, u_mean)).sqrt()
}
