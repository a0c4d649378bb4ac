//! Constraint values and the scale-subsampled gradient of the augmented Lagrangian.

use crate::numkit::SummedAreaTable;

use super::boxes::BoxSystem;
use super::kl::kl_divergence;
use super::sobolev::SobolevPenalty;
use super::{CountsGrid, DenoiseError};

/// `b_ρ` of one box: the weight its constraint puts on every pixel it covers.
pub fn constraint_subgradient_b(
    z_mean: f64,
    u_mean: f64,
    pixel_count: usize,
    v: f64,
    rho: f64,
    r: f64,
    boundary_slope: f64,
) -> f64 {
    if u_mean > 0.0 {
        let g = kl_divergence(z_mean, u_mean) - r;
        (v + rho * g).max(0.0) * (1.0 - z_mean / u_mean) / pixel_count as f64
    } else if z_mean > 0.0 {
        boundary_slope
    } else {
        0.0
    }
}

/// Work done by gradient evaluations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GradientCounters {
    pub box_evaluations: u64,
    pub pixel_updates: u64,
}

/// Observed counts, constraint family and smoothness functional, all in pixel-count units.
#[derive(Debug, Clone)]
pub struct DenoiseProblem {
    pub system: BoxSystem,
    pub counts: CountsGrid,
    count_table: SummedAreaTable<i64>,
    sobolev: SobolevPenalty,
    pub boundary_slope: f64,
}

struct MeanTables<'a> {
    mu: &'a [f64],
    n: usize,
    sums: SummedAreaTable<f64>,
    positive: SummedAreaTable<i64>,
}

impl<'a> MeanTables<'a> {
    fn new(mu: &'a [f64], n: usize) -> Self {
        let positive: Vec<i64> = mu.iter().map(|&x| i64::from(x > 0.0)).collect();
        Self {
            mu,
            n,
            sums: SummedAreaTable::new(n, n, mu),
            positive: SummedAreaTable::new(n, n, &positive),
        }
    }

    /// Mean over the `side × side` box at `(top, left)`; exactly zero when the
    /// box holds no positive pixel.
    fn mean(&self, top: usize, left: usize, side: usize) -> f64 {
        if self.positive.rect_sum(top, left, top + side, left + side) == 0 {
            return 0.0;
        }
        let mut sum = self.sums.rect_sum(top, left, top + side, left + side);
        if sum <= 0.0 {
            sum = (top..top + side)
                .flat_map(|i| self.mu[i * self.n + left..i * self.n + left + side].iter())
                .sum();
        }
        sum / (side * side) as f64
    }
}

impl DenoiseProblem {
    pub fn new(
        counts: CountsGrid,
        system: BoxSystem,
        sobolev_exponent: f64,
        boundary_slope: f64,
    ) -> Result<Self, DenoiseError> {
        let n = counts.n();
        if system.n() != n {
            return Err(DenoiseError::InvalidGrid(format!(
                "box system is for side {}, counts have side {n}",
                system.n()
            )));
        }
        if !(boundary_slope < 0.0) {
            return Err(DenoiseError::InvalidConfig(format!(
                "boundary slope must be negative, got {boundary_slope}"
            )));
        }
        let as_int: Vec<i64> = counts.counts().iter().map(|&c| c as i64).collect();
        Ok(Self {
            count_table: SummedAreaTable::new(n, n, &as_int),
            sobolev: SobolevPenalty::new(n, sobolev_exponent)?,
            system,
            counts,
            boundary_slope,
        })
    }

    pub fn n(&self) -> usize {
        self.counts.n()
    }

    pub fn constraint_count(&self) -> usize {
        self.system.len()
    }

    /// Mean observed count over a box.
    pub fn count_mean(&self, top: usize, left: usize, side: usize) -> f64 {
        self.count_table.rect_sum(top, left, top + side, left + side) as f64 / (side * side) as f64
    }

    pub fn objective(&self, mu: &[f64]) -> f64 {
        self.sobolev.value(mu)
    }

    /// `g_B(μ) = η(Z_B, μ_B) − r_B` for every box, in the family's flat order.
    pub fn constraints(&self, mu: &[f64]) -> Vec<f64> {
        let n = self.n();
        let tables = MeanTables::new(mu, n);
        let family = &self.system.family;
        let mut g = Vec::with_capacity(family.len());
        for (si, &l) in family.scales().iter().enumerate() {
            let r = self.system.r_counts(si);
            let m = family.positions(si);
            for t in 0..m {
                for c in 0..m {
                    g.push(kl_divergence(self.count_mean(t, c, l), tables.mean(t, c, l)) - r);
                }
            }
        }
        g
    }

    /// Gradient of the smoothness term plus the constraint terms of the scales
    /// listed in `scale_subset` (indices into the family), accumulated in
    /// ascending order of appearance.
    pub fn stochastic_gradient(
        &self,
        mu: &[f64],
        v: &[f64],
        rho: f64,
        scale_subset: &[usize],
        counters: &mut GradientCounters,
    ) -> Vec<f64> {
        let n = self.n();
        let (_, mut grad) = self.sobolev.value_grad(mu);
        let tables = MeanTables::new(mu, n);
        let family = &self.system.family;
        let mut b = Vec::new();
        for &si in scale_subset {
            let l = family.scales()[si];
            let m = family.positions(si);
            let r = self.system.r_counts(si);
            let offset = family.offset(si);
            b.clear();
            for t in 0..m {
                for c in 0..m {
                    b.push(constraint_subgradient_b(
                        self.count_mean(t, c, l),
                        tables.mean(t, c, l),
                        l * l,
                        v[offset + t * m + c],
                        rho,
                        r,
                        self.boundary_slope,
                    ));
                }
            }
            let spread = SummedAreaTable::new(m, m, &b);
            for i in 0..n {
                let (t0, t1) = (i.saturating_sub(l - 1), i.min(m - 1) + 1);
                for j in 0..n {
                    let (c0, c1) = (j.saturating_sub(l - 1), j.min(m - 1) + 1);
                    grad[i * n + j] += spread.rect_sum(t0, c0, t1, c1);
                }
            }
            counters.box_evaluations += (m * m) as u64;
            counters.pixel_updates += (n * n) as u64;
        }
        grad
    }
}

/// Gradient of `L_ρ(·, v)` restricted to the scales in `scale_subset`.
pub fn stochastic_al_gradient(
    problem: &DenoiseProblem,
    mu: &[f64],
    v: &[f64],
    rho: f64,
    scale_subset: &[usize],
) -> Vec<f64> {
    problem.stochastic_gradient(mu, v, rho, scale_subset, &mut GradientCounters::default())
}
