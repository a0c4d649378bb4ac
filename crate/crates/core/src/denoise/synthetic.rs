//! Synthetic ground-truth intensities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DenoiseError, IntensityGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticImage {
    /// Constant brightness.
    Flat,
    /// Two rectangles of brightness 1.0 and 0.6 on a 0.2 background.
    Blocks,
    /// Linear ramp from 0.1 at the left edge to 1.0 at the right.
    Ramp,
}

impl SyntheticImage {
    pub const ALL: [SyntheticImage; 3] = [Self::Flat, Self::Blocks, Self::Ramp];

    /// Relative brightness in `[0, 1]` at `(x, y) ∈ (0,1)²`.
    pub fn shape(self, x: f64, y: f64) -> f64 {
        match self {
            Self::Flat => 1.0,
            Self::Blocks => {
                if (0.15..0.45).contains(&x) && (0.2..0.7).contains(&y) {
                    1.0
                } else if (0.55..0.85).contains(&x) && (0.5..0.85).contains(&y) {
                    0.6
                } else {
                    0.2
                }
            }
            Self::Ramp => 0.1 + 0.9 * x,
        }
    }

    /// Samples the shape at pixel centres, scaled so the brightest pixel
    /// expects `peak_count` photons.
    pub fn render(self, n: usize, peak_count: f64) -> Result<IntensityGrid, DenoiseError> {
        if !(peak_count >= 0.0) || !peak_count.is_finite() {
            return Err(DenoiseError::InvalidConfig(format!("peak count must be finite and >= 0, got {peak_count}")));
        }
        let mut means = Vec::with_capacity(n * n);
        for i in 0..n {
            let y = (i as f64 + 0.5) / n as f64;
            for j in 0..n {
                let x = (j as f64 + 0.5) / n as f64;
                means.push(peak_count * self.shape(x, y));
            }
        }
        IntensityGrid::from_pixel_means(n, means)
    }
}

impl fmt::Display for SyntheticImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Flat => "flat",
            Self::Blocks => "blocks",
            Self::Ramp => "ramp",
        })
    }
}

impl FromStr for SyntheticImage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|img| img.to_string() == s)
            .ok_or_else(|| format!("unknown synthetic image '{s}' (expected flat, blocks or ramp)"))
    }
}
