//! Safeguarded augmented Lagrangian outer loop.
//!
//! Problems have the form
//!
//! ```text
//! min f(x)  s.t.  g(x) <= 0 (m inequalities),  h(x) = 0,  x in C,
//! ```
//!
//! where `f` and `g` may take the value `+inf`, `h` maps into a finite
//! dimensional Euclidean space and the abstract set `C` is handled entirely by
//! the subproblem solver. The engine never evaluates the problem itself: the
//! solver returns a [`ProblemEval`] alongside each new iterate.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::sparse::norm2;

/// Values of `f`, `g` and `h` at one iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemEval {
    pub f: f64,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl ProblemEval {
    pub fn new(f: f64, g: Vec<f64>, h: Vec<f64>) -> Self {
        Self { f, g, h }
    }

    /// `f` and all `g_i` are finite or `+inf`, and `h` is finite.
    pub fn is_well_formed(&self) -> bool {
        let extended_ok = |v: f64| !v.is_nan() && v != f64::NEG_INFINITY;
        extended_ok(self.f)
            && self.g.iter().all(|&v| extended_ok(v))
            && self.h.iter().all(|v| v.is_finite())
    }
}

/// How the per-iteration inner tolerance `eps_k` is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InnerTolerance {
    Fixed(f64),
    /// `initial * ratio^k`
    Geometric { initial: f64, ratio: f64 },
}

impl InnerTolerance {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            InnerTolerance::Fixed(eps) => eps,
            InnerTolerance::Geometric { initial, ratio } => initial * ratio.powi(k as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmConfig {
    pub rho0: f64,
    pub tau: f64,
    pub gamma: f64,
    /// Upper end of the safeguarding box `[0, v_max]` for inequality multipliers.
    pub v_max: f64,
    /// Half-width of the box `[-w_max, w_max]` for equality multipliers.
    pub w_max: f64,
    pub eps_abs: f64,
    pub max_outer_iterations: usize,
    pub inner_tolerance: InnerTolerance,
}

impl Default for AlmConfig {
    fn default() -> Self {
        Self {
            rho0: 1.0,
            tau: 0.5,
            gamma: 10.0,
            v_max: 1e8,
            w_max: 1e8,
            eps_abs: 1e-6,
            max_outer_iterations: 100,
            inner_tolerance: InnerTolerance::Fixed(1e-8),
        }
    }
}

impl AlmConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(ConfigError::Rho0(self.rho0));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(ConfigError::Tau(self.tau));
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(ConfigError::Gamma(self.gamma));
        }
        if !(self.v_max > 0.0) || !(self.w_max > 0.0) {
            return Err(ConfigError::MultiplierBox);
        }
        if !(self.eps_abs >= 0.0) {
            return Err(ConfigError::Tolerance(self.eps_abs));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("rho0 must be positive and finite, got {0}")]
    Rho0(f64),
    #[error("tau must lie in (0, 1), got {0}")]
    Tau(f64),
    #[error("gamma must exceed 1, got {0}")]
    Gamma(f64),
    #[error("multiplier boxes must have positive size")]
    MultiplierBox,
    #[error("termination tolerance must be nonnegative, got {0}")]
    Tolerance(f64),
}

/// `f + (1/2ρ) Σ (max²(0, v_i + ρ g_i) − v_i²) + <w, h> + (ρ/2)‖h‖²`, or `+inf`
/// whenever `f` or some `g_i` is infinite.
pub fn augmented_lagrangian_value(
    eval: &ProblemEval,
    v: &[f64],
    w: &[f64],
    rho: f64,
) -> Result<f64, AlmError<std::convert::Infallible>> {
    if !(rho > 0.0) {
        return Err(AlmError::NonPositivePenalty(rho));
    }
    check_len("v", eval.g.len(), v.len())?;
    check_len("w", eval.h.len(), w.len())?;
    if eval.f == f64::INFINITY || eval.g.iter().any(|&gi| gi == f64::INFINITY) {
        return Ok(f64::INFINITY);
    }
    let ineq: f64 = eval
        .g
        .iter()
        .zip(v)
        .map(|(&gi, &vi)| {
            let shifted = (vi + rho * gi).max(0.0);
            shifted * shifted - vi * vi
        })
        .sum();
    let lin: f64 = w.iter().zip(&eval.h).map(|(a, b)| a * b).sum();
    let h2: f64 = eval.h.iter().map(|x| x * x).sum();
    Ok(eval.f + ineq / (2.0 * rho) + lin + 0.5 * rho * h2)
}

/// `max(‖max(g, −v/ρ)‖_∞, ‖h‖₂)`, or `+inf` outside the domain of `g`.
pub fn feasibility_measure(eval: &ProblemEval, v: &[f64], rho: f64) -> f64 {
    debug_assert!(rho > 0.0);
    debug_assert_eq!(eval.g.len(), v.len());
    let mut worst = 0.0_f64;
    for (&gi, &vi) in eval.g.iter().zip(v) {
        if gi == f64::INFINITY {
            return f64::INFINITY;
        }
        worst = worst.max(gi.max(-vi / rho).abs());
    }
    worst.max(norm2(&eval.h))
}

/// `λ⁺ = max(0, v + ρ g)`, `μ⁺ = w + ρ h`.
pub fn update_multipliers(
    eval: &ProblemEval,
    v: &[f64],
    w: &[f64],
    rho: f64,
) -> Result<(Vec<f64>, Vec<f64>), AlmError<std::convert::Infallible>> {
    check_len("v", eval.g.len(), v.len())?;
    check_len("w", eval.h.len(), w.len())?;
    let mut lambda = Vec::with_capacity(v.len());
    for (i, (&gi, &vi)) in eval.g.iter().zip(v).enumerate() {
        if !gi.is_finite() {
            return Err(AlmError::InfiniteConstraint { index: i });
        }
        lambda.push((vi + rho * gi).max(0.0));
    }
    let mu = w.iter().zip(&eval.h).map(|(wi, hi)| wi + rho * hi).collect();
    Ok((lambda, mu))
}

/// Projects `λ` onto `[0, v_max]^m` and `μ` onto `[−w_max, w_max]^p`.
pub fn safeguard(lambda: &[f64], mu: &[f64], config: &AlmConfig) -> (Vec<f64>, Vec<f64>) {
    let v = lambda.iter().map(|l| l.clamp(0.0, config.v_max)).collect();
    let w = mu
        .iter()
        .map(|m| m.clamp(-config.w_max, config.w_max))
        .collect();
    (v, w)
}

/// Keeps `ρ` when `k = 0` or `V_now ≤ τ V_prev`, otherwise multiplies it by `γ`.
pub fn update_penalty(v_now: f64, v_prev: f64, rho: f64, k: usize, config: &AlmConfig) -> f64 {
    if k == 0 || v_now <= config.tau * v_prev {
        rho
    } else {
        config.gamma * rho
    }
}

/// What the engine hands to the subproblem solver at outer iteration `k`.
#[derive(Debug)]
pub struct SubproblemRequest<'a, X> {
    pub k: usize,
    pub v: &'a [f64],
    pub w: &'a [f64],
    pub rho: f64,
    pub warm_start: &'a X,
    pub inner_tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct SubproblemOutcome<X> {
    pub iterate: X,
    pub eval: ProblemEval,
    pub inner_iterations: usize,
}

/// Approximately minimizes `L_ρ(·, v, w)` over the application's set `C`.
///
/// Returned iterates must lie in `C`, and their `g` values should be finite
/// (the multiplier update rejects infinite constraint values).
pub trait SubproblemSolver {
    type Iterate: Clone;
    type Error: std::error::Error + 'static;

    fn solve(
        &mut self,
        request: SubproblemRequest<'_, Self::Iterate>,
    ) -> Result<SubproblemOutcome<Self::Iterate>, Self::Error>;
}

/// Starting point `(x⁰, λ⁰, μ⁰)`.
#[derive(Debug, Clone)]
pub struct AlmStart<X> {
    pub iterate: X,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl<X> AlmStart<X> {
    /// Zero multipliers for `m` inequalities and `p` equality components.
    pub fn with_zero_multipliers(iterate: X, m: usize, p: usize) -> Self {
        Self {
            iterate,
            lambda: vec![0.0; m],
            mu: vec![0.0; p],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub inner_iterations: usize,
    /// `ρ_k` used for the subproblem.
    pub rho: f64,
    /// `V_{ρ_k}(x^{k+1}, v^k)`.
    pub feasibility: f64,
    pub f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxIterations,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Converged => write!(f, "converged"),
            Termination::MaxIterations => write!(f, "max_outer_iterations"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlmState<X> {
    pub iterate: X,
    pub eval: Option<ProblemEval>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub rho: f64,
    pub k: usize,
    /// Last recorded `V`, `+inf` before the first subproblem.
    pub v_prev_measure: f64,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone)]
pub struct AlmOutcome<X> {
    pub state: AlmState<X>,
    pub termination: Termination,
}

#[derive(Debug, Error)]
pub enum AlmError<E: std::error::Error + 'static> {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("penalty parameter must be positive, got {0}")]
    NonPositivePenalty(f64),
    #[error("{name} has length {found}, expected {expected}")]
    Length {
        name: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("constraint {index} is infinite at the returned iterate (subproblem solver contract violated)")]
    InfiniteConstraint { index: usize },
    #[error("malformed evaluation returned by the subproblem solver at outer iteration {k}")]
    MalformedEval { k: usize },
    #[error("subproblem solver failed at outer iteration {k}: {source}")]
    Solver {
        k: usize,
        #[source]
        source: E,
    },
}

impl AlmError<std::convert::Infallible> {
    fn widen<E: std::error::Error + 'static>(self) -> AlmError<E> {
        match self {
            AlmError::Config(c) => AlmError::Config(c),
            AlmError::NonPositivePenalty(r) => AlmError::NonPositivePenalty(r),
            AlmError::Length {
                name,
                expected,
                found,
            } => AlmError::Length {
                name,
                expected,
                found,
            },
            AlmError::InfiniteConstraint { index } => AlmError::InfiniteConstraint { index },
            AlmError::MalformedEval { k } => AlmError::MalformedEval { k },
            AlmError::Solver { source, .. } => match source {},
        }
    }
}

fn check_len(
    name: &'static str,
    expected: usize,
    found: usize,
) -> Result<(), AlmError<std::convert::Infallible>> {
    if expected == found {
        Ok(())
    } else {
        Err(AlmError::Length {
            name,
            expected,
            found,
        })
    }
}

/// Runs the safeguarded ALM until `V_{ρ_{k−1}}(x^k, v^{k−1}) ≤ eps_abs` for some
/// `k ≥ 1`, or until `max_outer_iterations` subproblems have been solved.
pub fn run_alm<S: SubproblemSolver>(
    start: AlmStart<S::Iterate>,
    solver: &mut S,
    config: &AlmConfig,
) -> Result<AlmOutcome<S::Iterate>, AlmError<S::Error>> {
    config.validate()?;
    if start.lambda.iter().any(|&l| !(l >= 0.0)) {
        return Err(AlmError::Length {
            name: "nonnegative lambda0",
            expected: start.lambda.len(),
            found: start.lambda.iter().filter(|&&l| l >= 0.0).count(),
        });
    }
    let (v, w) = safeguard(&start.lambda, &start.mu, config);
    let mut state = AlmState {
        iterate: start.iterate,
        eval: None,
        lambda: start.lambda,
        mu: start.mu,
        v,
        w,
        rho: config.rho0,
        k: 0,
        v_prev_measure: f64::INFINITY,
        trace: Vec::new(),
    };
    loop {
        if state.k >= 1 && state.v_prev_measure <= config.eps_abs {
            return Ok(AlmOutcome {
                state,
                termination: Termination::Converged,
            });
        }
        if state.k >= config.max_outer_iterations {
            return Ok(AlmOutcome {
                state,
                termination: Termination::MaxIterations,
            });
        }
        let k = state.k;
        let rho = state.rho;
        let outcome = solver
            .solve(SubproblemRequest {
                k,
                v: &state.v,
                w: &state.w,
                rho,
                warm_start: &state.iterate,
                inner_tolerance: config.inner_tolerance.at(k),
            })
            .map_err(|source| AlmError::Solver { k, source })?;
        let eval = outcome.eval;
        if !eval.is_well_formed() {
            return Err(AlmError::MalformedEval { k });
        }
        let (lambda, mu) =
            update_multipliers(&eval, &state.v, &state.w, rho).map_err(AlmError::widen)?;
        let measure = feasibility_measure(&eval, &state.v, rho);
        state.trace.push(TraceRow {
            k,
            inner_iterations: outcome.inner_iterations,
            rho,
            feasibility: measure,
            f: eval.f,
        });
        state.rho = update_penalty(measure, state.v_prev_measure, rho, k, config);
        state.v_prev_measure = measure;
        let (v, w) = safeguard(&lambda, &mu, config);
        state.lambda = lambda;
        state.mu = mu;
        state.v = v;
        state.w = w;
        state.iterate = outcome.iterate;
        state.eval = Some(eval);
        state.k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::convert::Infallible;

    fn eval(f: f64, g: &[f64], h: &[f64]) -> ProblemEval {
        ProblemEval::new(f, g.to_vec(), h.to_vec())
    }

    #[test]
    fn lagrangian_examples() {
        let l = |e: ProblemEval, v: &[f64], w: &[f64], rho| {
            augmented_lagrangian_value(&e, v, w, rho).unwrap()
        };
        assert_eq!(l(eval(0.0, &[-1.0], &[]), &[0.0], &[], 2.0), 0.0);
        assert_eq!(l(eval(4.0, &[1.0], &[]), &[1.0], &[], 2.0), 6.0);
        assert_eq!(l(eval(1.0, &[-2.0], &[]), &[3.0], &[], 1.0), -3.0);
        assert_eq!(l(eval(0.0, &[], &[2.0]), &[], &[1.0], 1.0), 4.0);
        assert_eq!(l(eval(0.0, &[f64::INFINITY], &[]), &[1.0], &[], 1.0), f64::INFINITY);
        assert_eq!(l(eval(f64::INFINITY, &[], &[]), &[], &[], 1.0), f64::INFINITY);
        assert!(matches!(
            augmented_lagrangian_value(&eval(0.0, &[], &[]), &[], &[], 0.0),
            Err(AlmError::NonPositivePenalty(_))
        ));
    }

    #[test]
    fn feasibility_examples() {
        assert_eq!(feasibility_measure(&eval(0.0, &[-1.0], &[]), &[0.0], 3.0), 0.0);
        assert_eq!(feasibility_measure(&eval(0.0, &[-1.0], &[]), &[2.0], 1.0), 1.0);
        assert_eq!(feasibility_measure(&eval(0.0, &[0.5], &[0.2]), &[0.0], 4.0), 0.5);
        assert_eq!(
            feasibility_measure(&eval(0.0, &[f64::INFINITY, -1.0], &[]), &[0.0, 0.0], 1.0),
            f64::INFINITY
        );
    }

    #[test]
    fn multiplier_examples() {
        let (l, _) = update_multipliers(&eval(0.0, &[-3.0], &[]), &[1.0], &[], 2.0).unwrap();
        assert_eq!(l, vec![0.0]);
        let (l, _) = update_multipliers(&eval(0.0, &[1.0], &[]), &[1.0], &[], 2.0).unwrap();
        assert_eq!(l, vec![3.0]);
        let (_, m) = update_multipliers(&eval(0.0, &[], &[0.25]), &[], &[0.5], 4.0).unwrap();
        assert_eq!(m, vec![1.5]);
        assert!(matches!(
            update_multipliers(&eval(0.0, &[f64::INFINITY], &[]), &[0.0], &[], 1.0),
            Err(AlmError::InfiniteConstraint { index: 0 })
        ));
    }

    #[test]
    fn safeguard_examples() {
        let cfg = AlmConfig {
            v_max: 1e8,
            ..AlmConfig::default()
        };
        let (v, _) = safeguard(&[-1.0, 5.0, 2e8], &[], &cfg);
        assert_eq!(v, vec![0.0, 5.0, 1e8]);
        let (_, w) = safeguard(&[], &[-3e8, 0.5], &cfg);
        assert_eq!(w, vec![-1e8, 0.5]);
    }

    #[test]
    fn penalty_examples() {
        let cfg = AlmConfig {
            tau: 0.1,
            gamma: 2.0,
            ..AlmConfig::default()
        };
        assert_eq!(update_penalty(5.0, 1.0, 3.0, 0, &cfg), 3.0);
        assert_eq!(update_penalty(0.5, 1.0, 3.0, 1, &cfg), 6.0);
        assert_eq!(update_penalty(0.05, 1.0, 3.0, 1, &cfg), 3.0);
        assert_eq!(update_penalty(1e300, f64::INFINITY, 3.0, 4, &cfg), 3.0);
        assert_eq!(update_penalty(2.0, 1.0, 3.0, 4, &cfg), 6.0);
    }

    #[test]
    fn config_validation() {
        let base = AlmConfig::default();
        assert!(base.validate().is_ok());
        for bad in [
            AlmConfig { rho0: 0.0, ..base.clone() },
            AlmConfig { tau: 1.0, ..base.clone() },
            AlmConfig { tau: 0.0, ..base.clone() },
            AlmConfig { gamma: 1.0, ..base.clone() },
            AlmConfig { v_max: 0.0, ..base.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    /// min x² s.t. 1 − x ≤ 0, with the subproblem minimized in closed form.
    struct ScalarQuadratic;

    impl SubproblemSolver for ScalarQuadratic {
        type Iterate = f64;
        type Error = Infallible;

        fn solve(
            &mut self,
            req: SubproblemRequest<'_, f64>,
        ) -> Result<SubproblemOutcome<f64>, Infallible> {
            let (v, rho) = (req.v[0], req.rho);
            // stationarity of x² + (1/2ρ) max²(0, v + ρ(1−x))
            let x = if v + rho > 0.0 { (v + rho) / (2.0 + rho) } else { 0.0 };
            let x = if v + rho * (1.0 - x) > 0.0 { x } else { 0.0 };
            Ok(SubproblemOutcome {
                iterate: x,
                eval: ProblemEval::new(x * x, vec![1.0 - x], vec![]),
                inner_iterations: 1,
            })
        }
    }

    #[test]
    fn scalar_problem_reaches_kkt_point() {
        let cfg = AlmConfig {
            rho0: 1.0,
            tau: 0.5,
            gamma: 2.0,
            eps_abs: 1e-10,
            max_outer_iterations: 50,
            ..AlmConfig::default()
        };
        let out = run_alm(AlmStart::with_zero_multipliers(0.0, 1, 0), &mut ScalarQuadratic, &cfg)
            .unwrap();
        assert_eq!(out.termination, Termination::Converged);
        assert!((out.state.iterate - 1.0).abs() <= 1e-8);
        assert!((out.state.lambda[0] - 2.0).abs() <= 1e-7);
    }

    #[test]
    fn complementary_start_stops_after_one_subproblem() {
        let cfg = AlmConfig {
            eps_abs: 0.0,
            ..AlmConfig::default()
        };
        let start = AlmStart {
            iterate: 1.0,
            lambda: vec![2.0],
            mu: vec![],
        };
        let out = run_alm(start, &mut ScalarQuadratic, &cfg).unwrap();
        assert_eq!(out.termination, Termination::Converged);
        assert_eq!(out.state.trace.len(), 1);
        assert_eq!(out.state.trace[0].feasibility, 0.0);
        assert_eq!(out.state.iterate, 1.0);
    }

    #[test]
    fn penalty_stays_bounded_on_convex_problem() {
        let cfg = AlmConfig {
            rho0: 1.0,
            tau: 0.5,
            gamma: 2.0,
            eps_abs: 1e-12,
            max_outer_iterations: 200,
            ..AlmConfig::default()
        };
        let out = run_alm(AlmStart::with_zero_multipliers(0.0, 1, 0), &mut ScalarQuadratic, &cfg)
            .unwrap();
        // Closed form: V_k = 2/(ρ+2) · V_{k−1}, so ρ doubles only while 2/(ρ+2) > τ, i.e. until ρ ≥ 2.
        let max_rho = out.state.trace.iter().map(|r| r.rho).fold(0.0, f64::max);
        assert!(max_rho <= 4.0, "rho grew to {max_rho}");
        assert_trace_penalty_rule(&out.state.trace, &cfg);
    }

    fn assert_trace_penalty_rule(trace: &[TraceRow], cfg: &AlmConfig) {
        for pair in trace.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            assert!(b.rho >= a.rho);
            let expected = update_penalty(
                a.feasibility,
                if a.k == 0 {
                    f64::INFINITY
                } else {
                    trace[a.k - 1].feasibility
                },
                a.rho,
                a.k,
                cfg,
            );
            assert_eq!(b.rho, expected);
        }
    }

    struct Unconstrained;

    impl SubproblemSolver for Unconstrained {
        type Iterate = f64;
        type Error = Infallible;

        fn solve(
            &mut self,
            _req: SubproblemRequest<'_, f64>,
        ) -> Result<SubproblemOutcome<f64>, Infallible> {
            Ok(SubproblemOutcome {
                iterate: 0.0,
                eval: ProblemEval::new(0.0, vec![], vec![]),
                inner_iterations: 3,
            })
        }
    }

    #[test]
    fn no_constraints_means_single_subproblem() {
        let out = run_alm(
            AlmStart::with_zero_multipliers(5.0, 0, 0),
            &mut Unconstrained,
            &AlmConfig::default(),
        )
        .unwrap();
        assert_eq!(out.state.trace.len(), 1);
        assert_eq!(out.state.trace[0].feasibility, 0.0);
        assert_eq!(out.termination, Termination::Converged);
    }

    #[derive(Debug, Error)]
    #[error("boom")]
    struct Boom;

    struct Failing;

    impl SubproblemSolver for Failing {
        type Iterate = f64;
        type Error = Boom;

        fn solve(&mut self, req: SubproblemRequest<'_, f64>) -> Result<SubproblemOutcome<f64>, Boom> {
            if req.k == 2 {
                return Err(Boom);
            }
            Ok(SubproblemOutcome {
                iterate: 0.0,
                eval: ProblemEval::new(0.0, vec![1.0], vec![]),
                inner_iterations: 1,
            })
        }
    }

    #[test]
    fn solver_errors_carry_iteration() {
        let err = run_alm(
            AlmStart::with_zero_multipliers(0.0, 1, 0),
            &mut Failing,
            &AlmConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, AlmError::Solver { k: 2, .. }));
    }

    #[test]
    fn iteration_cap_reported() {
        let cfg = AlmConfig {
            max_outer_iterations: 2,
            ..AlmConfig::default()
        };
        struct Stuck;
        impl SubproblemSolver for Stuck {
            type Iterate = f64;
            type Error = Infallible;
            fn solve(
                &mut self,
                _req: SubproblemRequest<'_, f64>,
            ) -> Result<SubproblemOutcome<f64>, Infallible> {
                Ok(SubproblemOutcome {
                    iterate: 0.0,
                    eval: ProblemEval::new(0.0, vec![1.0], vec![]),
                    inner_iterations: 1,
                })
            }
        }
        let out = run_alm(AlmStart::with_zero_multipliers(0.0, 1, 0), &mut Stuck, &cfg).unwrap();
        assert_eq!(out.termination, Termination::MaxIterations);
        assert_eq!(out.state.trace.len(), 2);
        assert_eq!(out.state.trace[1].rho, cfg.rho0);
        assert_eq!(out.state.rho, cfg.rho0 * cfg.gamma);
    }

    fn bundle() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64, f64)> {
        (1usize..6).prop_flat_map(|m| {
            (
                prop::collection::vec(-10.0f64..=0.0, m),
                prop::collection::vec(0.0f64..10.0, m),
                1e-3f64..100.0,
                -50.0f64..50.0,
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn lagrangian_never_exceeds_f_at_feasible_points((g, v, rho, f) in bundle()) {
            let e = ProblemEval::new(f, g, vec![0.0; 2]);
            let l = augmented_lagrangian_value(&e, &v, &[0.3, -0.7], rho).unwrap();
            prop_assert!(l <= f);
        }
    }

    proptest! {

        #[test]
        fn zero_measure_iff_complementary(
            g in prop::collection::vec(-2.0f64..2.0, 1..5),
            rho in 0.1f64..10.0,
            seed in any::<u64>(),
        ) {
            // Build v complementary to g where g ≤ 0, then possibly break it.
            let mut v: Vec<f64> = g.iter().map(|&gi| if gi < 0.0 { 0.0 } else { 1.0 }).collect();
            if seed % 3 == 0 {
                v[0] += 0.5;
            }
            let e = ProblemEval::new(0.0, g.clone(), vec![]);
            let measure = feasibility_measure(&e, &v, rho);
            let comp = g.iter().all(|&x| x <= 0.0)
                && v.iter().all(|&x| x >= 0.0)
                && g.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() == 0.0;
            prop_assert_eq!(measure == 0.0, comp);
        }

        #[test]
        fn safeguard_idempotent_and_nonexpansive(
            a in prop::collection::vec(-1e9f64..1e9, 1..8),
            d in prop::collection::vec(-1e3f64..1e3, 8),
        ) {
            let cfg = AlmConfig { v_max: 1e8, ..AlmConfig::default() };
            let (v1, _) = safeguard(&a, &[], &cfg);
            let (v2, _) = safeguard(&v1, &[], &cfg);
            prop_assert_eq!(&v1, &v2);
            let b: Vec<f64> = a.iter().zip(&d).map(|(x, y)| x + y).collect();
            let (vb, _) = safeguard(&b, &[], &cfg);
            let lhs = v1.iter().zip(&vb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let rhs = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(lhs <= rhs);
        }
    }
}
