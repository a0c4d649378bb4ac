//! End-to-end denoising: calibration, constraint setup and the ALM loop with
//! NADAM subproblems.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alm::{
    feasibility_measure, run_alm, AlmConfig, AlmError, AlmStart, InnerTolerance, ProblemEval, SubproblemOutcome,
    SubproblemRequest, SubproblemSolver, Termination, TraceRow,
};
use crate::numkit::Rng;

use super::boxes::{estimate_quantile, BoxSystem, MultiscaleFamily, PenaltyConvention, QuantileEstimate};
use super::gradient::{DenoiseProblem, GradientCounters};
use super::nadam::nadam_minimize;
use super::{CountsGrid, DenoiseError, IntensityGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiseConfig {
    pub alpha: f64,
    /// Quantile `q̃`; estimated by Monte Carlo when absent.
    pub q_tilde: Option<f64>,
    pub sobolev_s: f64,
    pub boundary_slope: f64,
    pub nadam_iterations: usize,
    pub initial_scales: usize,
    /// Stepsize at outer iteration `k` is `max(step_floor, step_decay^k)`.
    pub step_floor: f64,
    pub step_decay: f64,
    pub max_scale: usize,
    pub r_shift: f64,
    pub penalty_convention: PenaltyConvention,
    pub mc_samples: usize,
    /// Expected count given to pixels that observed photons but ended a
    /// subproblem at zero, keeping every constraint finite.
    pub pixel_floor: f64,
    pub seed: u64,
    pub alm: AlmConfig,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            q_tilde: None,
            sobolev_s: 0.01,
            boundary_slope: -10.0,
            nadam_iterations: 300,
            initial_scales: 10,
            step_floor: 0.005,
            step_decay: 0.8,
            max_scale: 64,
            r_shift: 0.0,
            penalty_convention: PenaltyConvention::PixelCount,
            mc_samples: 1000,
            pixel_floor: 1e-6,
            seed: 0,
            alm: AlmConfig {
                rho0: 4.0,
                tau: 0.9,
                gamma: 4.0,
                v_max: 1e8,
                w_max: 1e8,
                eps_abs: 1e-2,
                max_outer_iterations: 100,
                inner_tolerance: InnerTolerance::Fixed(0.0),
            },
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<(), DenoiseError> {
        let bad = |msg: String| Err(DenoiseError::InvalidConfig(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.sobolev_s >= 0.0) {
            return bad(format!("sobolev_s must be >= 0, got {}", self.sobolev_s));
        }
        if !(self.boundary_slope < 0.0) {
            return bad(format!("boundary_slope must be negative, got {}", self.boundary_slope));
        }
        if self.nadam_iterations == 0 || self.initial_scales == 0 || self.max_scale == 0 {
            return bad("nadam_iterations, initial_scales and max_scale must be positive".into());
        }
        if !(self.step_floor > 0.0) || !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return bad(format!(
                "stepsize rule needs step_floor > 0 and step_decay in (0, 1], got {} and {}",
                self.step_floor, self.step_decay
            ));
        }
        if !(self.pixel_floor > 0.0) {
            return bad(format!("pixel_floor must be positive, got {}", self.pixel_floor));
        }
        if self.q_tilde.is_none() && self.mc_samples < 100 {
            return bad(format!("mc_samples must be at least 100, got {}", self.mc_samples));
        }
        self.alm.validate().map_err(|e| DenoiseError::InvalidConfig(e.to_string()))
    }

    pub fn stepsize(&self, k: usize) -> f64 {
        self.step_floor.max(self.step_decay.powi(k as i32))
    }
}

#[derive(Debug, Error)]
pub enum DenoiseRunError {
    #[error(transparent)]
    Setup(#[from] DenoiseError),
    #[error(transparent)]
    Alm(#[from] AlmError<DenoiseError>),
}

/// The quantities tracked after every outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub k: usize,
    pub f: f64,
    /// Share of boxes with `η(Z_B, u_B) > r_B`.
    pub violated_fraction: f64,
    /// `max_B (η − r_B)/r_B`
    pub max_rel_violation: f64,
    /// Mean of `max(0, η − r_B)/r_B`.
    pub mean_rel_violation: f64,
    #[serde(rename = "V")]
    pub feasibility: f64,
    pub rho: f64,
    pub scales_used: usize,
    pub stepsize: f64,
}

#[derive(Debug, Clone)]
pub struct DenoiseOutcome {
    pub reconstruction: IntensityGrid,
    pub q_tilde: f64,
    pub quantile: Option<QuantileEstimate>,
    pub constraint_count: usize,
    /// `f(x⁰)` at the observation.
    pub f_initial: f64,
    pub trace: Vec<TraceRow>,
    pub metrics: Vec<IterationMetrics>,
    pub termination: Termination,
    pub counters: GradientCounters,
}

struct NadamSubproblems<'a> {
    problem: &'a DenoiseProblem,
    config: &'a DenoiseConfig,
    metrics: Vec<IterationMetrics>,
    counters: GradientCounters,
    observer: &'a mut dyn FnMut(&IterationMetrics),
}

fn summarize(problem: &DenoiseProblem, g: &[f64]) -> (f64, f64, f64) {
    let family = &problem.system.family;
    let mut violated = 0usize;
    let mut max_rel = f64::NEG_INFINITY;
    let mut sum_rel = 0.0;
    for si in 0..family.scales().len() {
        let r = problem.system.r_counts(si);
        let start = family.offset(si);
        for &gi in &g[start..family.offset(si + 1)] {
            let rel = gi / r;
            if gi > 0.0 {
                violated += 1;
                sum_rel += rel;
            }
            max_rel = max_rel.max(rel);
        }
    }
    let total = g.len() as f64;
    (violated as f64 / total, max_rel, sum_rel / total)
}

impl SubproblemSolver for NadamSubproblems<'_> {
    type Iterate = Vec<f64>;
    type Error = DenoiseError;

    fn solve(&mut self, req: SubproblemRequest<'_, Vec<f64>>) -> Result<SubproblemOutcome<Vec<f64>>, DenoiseError> {
        let nscales = self.problem.system.family.scales().len();
        let used = (self.config.initial_scales + req.k).min(nscales);
        let stepsize = self.config.stepsize(req.k);
        let mut rng = Rng::derived(self.config.seed, u64::MAX - req.k as u64);
        let problem = self.problem;
        let counters = &mut self.counters;
        let mut mu = nadam_minimize(
            req.warm_start.clone(),
            self.config.nadam_iterations,
            stepsize,
            &mut rng,
            |x, rng| {
                let mut subset = sample(rng, nscales, used).into_vec();
                subset.sort_unstable();
                problem.stochastic_gradient(x, req.v, req.rho, &subset, counters)
            },
        )?;
        for (m, &z) in mu.iter_mut().zip(problem.counts.counts()) {
            if z > 0 && *m == 0.0 {
                *m = self.config.pixel_floor;
            }
        }
        let g = problem.constraints(&mu);
        let f = problem.objective(&mu);
        let (violated_fraction, max_rel_violation, mean_rel_violation) = summarize(problem, &g);
        let eval = ProblemEval::new(f, g, vec![]);
        let row = IterationMetrics {
            k: req.k,
            f,
            violated_fraction,
            max_rel_violation,
            mean_rel_violation,
            feasibility: feasibility_measure(&eval, req.v, req.rho),
            rho: req.rho,
            scales_used: used,
            stepsize,
        };
        (self.observer)(&row);
        self.metrics.push(row);
        Ok(SubproblemOutcome {
            iterate: mu,
            eval,
            inner_iterations: self.config.nadam_iterations,
        })
    }
}

/// Builds the constraint family for side `n`, estimating `q̃` when the
/// configuration does not fix it.
pub fn build_system(n: usize, config: &DenoiseConfig) -> Result<(BoxSystem, Option<QuantileEstimate>), DenoiseError> {
    config.validate()?;
    let family = MultiscaleFamily::standard(n, config.max_scale, config.penalty_convention)?;
    let (q, estimate) = match config.q_tilde {
        Some(q) => (q, None),
        None => {
            let est = estimate_quantile(&family, config.alpha, config.mc_samples, config.seed)?;
            (est.q, Some(est))
        }
    };
    Ok((BoxSystem::new(family, q, config.r_shift)?, estimate))
}

pub fn denoise(counts: &CountsGrid, config: &DenoiseConfig) -> Result<DenoiseOutcome, DenoiseRunError> {
    denoise_observed(counts, config, &mut |_| {})
}

/// As [`denoise`], handing each iteration's metrics to `observer` as soon as they are known.
pub fn denoise_observed(
    counts: &CountsGrid,
    config: &DenoiseConfig,
    observer: &mut dyn FnMut(&IterationMetrics),
) -> Result<DenoiseOutcome, DenoiseRunError> {
    let n = counts.n();
    let (system, quantile) = build_system(n, config)?;
    let q_tilde = system.q_tilde;
    let problem = DenoiseProblem::new(counts.clone(), system, config.sobolev_s, config.boundary_slope)?;
    let x0: Vec<f64> = counts.counts().iter().map(|&c| c as f64).collect();
    let f_initial = problem.objective(&x0);
    let m = problem.constraint_count();
    let mut solver = NadamSubproblems {
        problem: &problem,
        config,
        metrics: Vec::new(),
        counters: GradientCounters::default(),
        observer,
    };
    let out = run_alm(AlmStart::with_zero_multipliers(x0, m, 0), &mut solver, &config.alm)?;
    let metrics = std::mem::take(&mut solver.metrics);
    Ok(DenoiseOutcome {
        reconstruction: IntensityGrid::from_pixel_means(n, out.state.iterate)?,
        q_tilde,
        quantile,
        constraint_count: m,
        f_initial,
        trace: out.state.trace,
        metrics,
        termination: out.termination,
        counters: solver.counters,
    })
}
