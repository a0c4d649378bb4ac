//! The multiscale family of sub-squares, its penalties and right-hand sides,
//! and Monte-Carlo calibration of the quantile.

use serde::{Deserialize, Serialize};

use crate::numkit::{Rng, SummedAreaTable};

use super::DenoiseError;

/// Which size enters the scale penalty `pen = sqrt(2(ln(n²/size) + 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyConvention {
    /// `size = #B`, the pixel count.
    #[default]
    PixelCount,
    /// `size = |B| = s #B`, the area in the unit square.
    ContinuousSize,
}

pub fn penalty_pen(n: usize, pixel_count: usize, convention: PenaltyConvention) -> f64 {
    let n2 = (n * n) as f64;
    let size = match convention {
        PenaltyConvention::PixelCount => pixel_count as f64,
        PenaltyConvention::ContinuousSize => pixel_count as f64 / n2,
    };
    (2.0 * ((n2 / size).ln() + 1.0)).sqrt()
}

/// `(q̃ + pen)² / (2|B|) + r_shift` in intensity units.
pub fn rhs_r(q_tilde: f64, pen: f64, size: f64, r_shift: f64) -> f64 {
    (q_tilde + pen).powi(2) / (2.0 * size) + r_shift
}

/// All sub-squares with side lengths in `scales`, together with one penalty per scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiscaleFamily {
    n: usize,
    scales: Vec<usize>,
    pen: Vec<f64>,
    offsets: Vec<usize>,
}

impl MultiscaleFamily {
    pub fn new(n: usize, scales: Vec<usize>, convention: PenaltyConvention) -> Result<Self, DenoiseError> {
        let pen = scales
            .iter()
            .map(|&l| penalty_pen(n, l * l, convention))
            .collect();
        Self::with_penalties(n, scales, pen)
    }

    /// Side lengths `1..=min(max_scale, n/4)`.
    pub fn standard(n: usize, max_scale: usize, convention: PenaltyConvention) -> Result<Self, DenoiseError> {
        let top = max_scale.min(n / 4).max(1);
        Self::new(n, (1..=top).collect(), convention)
    }

    pub fn with_penalties(n: usize, scales: Vec<usize>, pen: Vec<f64>) -> Result<Self, DenoiseError> {
        if scales.is_empty() || pen.len() != scales.len() {
            return Err(DenoiseError::InvalidConfig("scale list and penalties must be nonempty and aligned".into()));
        }
        if let Some(&l) = scales.iter().find(|&&l| l == 0 || l > n) {
            return Err(DenoiseError::InvalidConfig(format!("scale {l} does not fit an {n}x{n} grid")));
        }
        let mut offsets = Vec::with_capacity(scales.len() + 1);
        let mut total = 0;
        offsets.push(0);
        for &l in &scales {
            total += (n - l + 1) * (n - l + 1);
            offsets.push(total);
        }
        Ok(Self {
            n,
            scales,
            pen,
            offsets,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scales(&self) -> &[usize] {
        &self.scales
    }

    pub fn pen(&self, scale_index: usize) -> f64 {
        self.pen[scale_index]
    }

    /// Number of boxes, `Σ_L (n − L + 1)²`.
    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of the first box of scale `scale_index`; boxes of one scale
    /// are stored row-major by top-left corner.
    pub fn offset(&self, scale_index: usize) -> usize {
        self.offsets[scale_index]
    }

    /// Positions per side for scale `scale_index`.
    pub fn positions(&self, scale_index: usize) -> usize {
        self.n - self.scales[scale_index] + 1
    }
}

/// The constraint family with right-hand sides, stored per scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSystem {
    pub family: MultiscaleFamily,
    pub q_tilde: f64,
    pub r_shift: f64,
    /// `r` in intensity units.
    r: Vec<f64>,
}

impl BoxSystem {
    pub fn new(family: MultiscaleFamily, q_tilde: f64, r_shift: f64) -> Result<Self, DenoiseError> {
        let s = 1.0 / (family.n * family.n) as f64;
        let mut r = Vec::with_capacity(family.scales.len());
        for (i, &l) in family.scales.iter().enumerate() {
            let pen = family.pen[i];
            if !(q_tilde + pen > 0.0) {
                return Err(DenoiseError::InvalidConfig(format!(
                    "q_tilde + pen must be positive, got {} at scale {l}",
                    q_tilde + pen
                )));
            }
            let value = rhs_r(q_tilde, pen, s * (l * l) as f64, r_shift);
            if !(value > 0.0) {
                return Err(DenoiseError::InvalidConfig(format!(
                    "right-hand side {value} at scale {l} is not positive"
                )));
            }
            r.push(value);
        }
        Ok(Self {
            family,
            q_tilde,
            r_shift,
            r,
        })
    }

    pub fn n(&self) -> usize {
        self.family.n
    }

    pub fn len(&self) -> usize {
        self.family.len()
    }

    pub fn is_empty(&self) -> bool {
        self.family.is_empty()
    }

    pub fn r(&self, scale_index: usize) -> f64 {
        self.r[scale_index]
    }

    /// `s · r`, the bound on `η` of mean pixel counts.
    pub fn r_counts(&self, scale_index: usize) -> f64 {
        self.r[scale_index] / (self.family.n * self.family.n) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub q: f64,
    pub alpha: f64,
    /// One `M_n` value per replication, in replication order.
    pub samples: Vec<f64>,
}

/// `max_B [ (#B)^{-1/2} |Σ_{i∈B} X_i| − pen_B ]` for one field of normals.
pub fn multiscale_max(family: &MultiscaleFamily, normals: &[f64]) -> f64 {
    let n = family.n;
    let sat = SummedAreaTable::new(n, n, normals);
    let mut best = f64::NEG_INFINITY;
    for (si, &l) in family.scales.iter().enumerate() {
        let m = family.positions(si);
        let mut widest: f64 = 0.0;
        for t in 0..m {
            for c in 0..m {
                widest = widest.max(sat.rect_sum(t, c, t + l, c + l).abs());
            }
        }
        best = best.max(widest / l as f64 - family.pen[si]);
    }
    best
}

/// Empirical `(1−α)`-quantile of `M_n`; replication `i` uses the stream `(seed, i)`.
pub fn estimate_quantile(
    family: &MultiscaleFamily,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<QuantileEstimate, DenoiseError> {
    if samples < 100 {
        return Err(DenoiseError::InvalidConfig(format!(
            "at least 100 Monte-Carlo samples are required, got {samples}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DenoiseError::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let n = family.n;
    let mut normals = vec![0.0; n * n];
    let values: Vec<f64> = (0..samples)
        .map(|i| {
            let mut rng = Rng::derived(seed, i as u64);
            normals.iter_mut().for_each(|x| *x = rng.standard_normal());
            multiscale_max(family, &normals)
        })
        .collect();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let rank = ((1.0 - alpha) * samples as f64).ceil() as usize;
    Ok(QuantileEstimate {
        q: sorted[rank.clamp(1, samples) - 1],
        alpha,
        samples: values,
    })
}
