//! Augmented Lagrangian treatment of the `L¹` budget with semismooth Newton subproblems.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alm::{
    run_alm, AlmConfig, AlmError, AlmStart, InnerTolerance, ProblemEval, SubproblemOutcome,
    SubproblemRequest, SubproblemSolver, Termination, TraceRow,
};
use crate::numkit::sparse::{dot, norm2};
use crate::numkit::sparse_solve;

use super::fem::FemSystem;
use super::ssn::{ssn_solve, ControlIterate, SubproblemParams};
use super::ControlError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub cells_per_side: usize,
    pub sigma: f64,
    pub beta0: f64,
    pub ssn_max_iterations: usize,
    /// Lower bound on the Newton tolerance; the residual cannot drop much below round-off.
    pub ssn_tolerance_floor: f64,
    pub alm: AlmConfig,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            cells_per_side: 32,
            sigma: 1e-2,
            beta0: 1e-6,
            ssn_max_iterations: 50,
            ssn_tolerance_floor: 1e-13,
            alm: AlmConfig {
                rho0: 1e-4,
                tau: 0.1,
                gamma: 2.0,
                v_max: 1e8,
                w_max: 1e8,
                eps_abs: 1e-6,
                max_outer_iterations: 200,
                inner_tolerance: InnerTolerance::Geometric {
                    initial: 1e-6,
                    ratio: 0.5,
                },
            },
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Setup(#[from] ControlError),
    #[error(transparent)]
    Alm(#[from] AlmError<ControlError>),
}

#[derive(Debug, Clone)]
pub struct ControlSolution {
    pub fem: FemSystem,
    pub kappa: f64,
    pub sigma: f64,
    pub iterate: ControlIterate,
    /// Final multiplier `λ` of the budget constraint.
    pub multiplier: f64,
    pub termination: Termination,
    pub trace: Vec<TraceRow>,
    /// SSN residual norms of every subproblem, in outer-iteration order.
    pub ssn_histories: Vec<Vec<f64>>,
    /// Parameters of the last subproblem solved.
    pub last_params: SubproblemParams,
    /// Starting point handed to the last subproblem.
    pub last_start: ControlIterate,
}

impl ControlSolution {
    pub fn objective(&self) -> f64 {
        objective(&self.fem, &self.iterate, self.sigma)
    }
}

/// `½(y − y_d)ᵀM(y − y_d) + σ/2 uᵀM_L u`
pub fn objective(fem: &FemSystem, z: &ControlIterate, sigma: f64) -> f64 {
    let diff: Vec<f64> = z.y.iter().zip(&fem.y_desired).map(|(a, b)| a - b).collect();
    let tracking = 0.5 * dot(&diff, &fem.mass.mul_vec(&diff));
    let reg: f64 = fem
        .lumped
        .iter()
        .zip(&z.u)
        .map(|(w, u)| w * u * u)
        .sum();
    tracking + 0.5 * sigma * reg
}

struct NewtonSubproblems<'a> {
    fem: &'a FemSystem,
    kappa: f64,
    sigma: f64,
    max_iterations: usize,
    tolerance_floor: f64,
    histories: Vec<Vec<f64>>,
    last: Option<(SubproblemParams, ControlIterate)>,
}

impl SubproblemSolver for NewtonSubproblems<'_> {
    type Iterate = ControlIterate;
    type Error = ControlError;

    fn solve(
        &mut self,
        req: SubproblemRequest<'_, ControlIterate>,
    ) -> Result<SubproblemOutcome<ControlIterate>, ControlError> {
        let params = SubproblemParams {
            rho: req.rho,
            v: req.v[0],
            kappa: self.kappa,
            sigma: self.sigma,
        };
        let out = ssn_solve(
            req.warm_start,
            &params,
            self.fem,
            req.inner_tolerance.max(self.tolerance_floor),
            self.max_iterations,
        )?;
        self.histories.push(out.residual_history);
        self.last = Some((params, req.warm_start.clone()));
        let z = out.iterate;
        let eval = ProblemEval::new(
            objective(self.fem, &z, self.sigma),
            vec![self.fem.l1_norm(&z.u) - self.kappa],
            vec![],
        );
        Ok(SubproblemOutcome {
            iterate: z,
            eval,
            inner_iterations: out.iterations,
        })
    }
}

/// `y⁰ = 0`, `p⁰` the adjoint of `y⁰`, and `u⁰ = S_σ(p⁰, β₀)`.
pub fn initial_iterate(fem: &FemSystem, sigma: f64, beta0: f64) -> Result<ControlIterate, ControlError> {
    let rhs = fem.mass.mul_vec(&fem.y_desired);
    let p = sparse_solve(&fem.stiffness, &rhs)?;
    Ok(ControlIterate::new(vec![0.0; fem.n()], p, beta0, sigma))
}

pub fn solve_sparse_control(kappa: f64, config: &ControlConfig) -> Result<ControlSolution, SolveError> {
    let fem = FemSystem::standard(config.cells_per_side)?;
    solve_on_mesh(fem, kappa, config)
}

pub fn solve_on_mesh(
    fem: FemSystem,
    kappa: f64,
    config: &ControlConfig,
) -> Result<ControlSolution, SolveError> {
    if !(kappa > 0.0) || !(config.sigma > 0.0) {
        return Err(ControlError::InvalidParams(format!("kappa={kappa}, sigma={}", config.sigma)).into());
    }
    let z0 = initial_iterate(&fem, config.sigma, config.beta0)?;
    let mut solver = NewtonSubproblems {
        fem: &fem,
        kappa,
        sigma: config.sigma,
        max_iterations: config.ssn_max_iterations,
        tolerance_floor: config.ssn_tolerance_floor,
        histories: Vec::new(),
        last: None,
    };
    let out = run_alm(AlmStart::with_zero_multipliers(z0, 1, 0), &mut solver, &config.alm)?;
    let (last_params, last_start) = solver.last.take().expect("at least one subproblem is solved");
    let ssn_histories = std::mem::take(&mut solver.histories);
    Ok(ControlSolution {
        kappa,
        sigma: config.sigma,
        iterate: out.state.iterate,
        multiplier: out.state.lambda[0],
        termination: out.termination,
        trace: out.state.trace,
        ssn_histories,
        last_params,
        last_start,
        fem,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    pub multiplier: f64,
    /// `max_i (|p_i − σu_i| − β̄)`
    pub dual_bound_excess: f64,
    /// `max |p_i − σu_i − β̄ sign(u_i)|` over `|u_i| > tol`
    pub support_gap: f64,
    pub state_residual: f64,
    pub adjoint_residual: f64,
    /// `eᵀM_L|u| − κ`
    pub budget_excess: f64,
    pub violations: Vec<String>,
}

impl KktReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the discrete optimality conditions with multiplier `β̄`.
pub fn verify_kkt(
    z: &ControlIterate,
    multiplier: f64,
    kappa: f64,
    sigma: f64,
    fem: &FemSystem,
    tol: f64,
) -> KktReport {
    let beta = multiplier;
    let mut bound: f64 = f64::NEG_INFINITY;
    let mut support: f64 = 0.0;
    for (&p, &u) in z.p.iter().zip(&z.u) {
        let gap = p - sigma * u;
        bound = bound.max(gap.abs() - beta);
        if u.abs() > tol {
            support = support.max((gap - beta * u.signum()).abs());
        }
    }
    let mut state = fem.stiffness.mul_vec(&z.y);
    for ((s, w), u) in state.iter_mut().zip(&fem.lumped).zip(&z.u) {
        *s -= w * u;
    }
    let diff: Vec<f64> = fem.y_desired.iter().zip(&z.y).map(|(a, b)| a - b).collect();
    let mut adjoint = fem.stiffness.mul_vec(&z.p);
    for (a, m) in adjoint.iter_mut().zip(fem.mass.mul_vec(&diff)) {
        *a -= m;
    }
    let report_state = norm2(&state);
    let report_adjoint = norm2(&adjoint);
    let budget = fem.l1_norm(&z.u) - kappa;
    let mut violations = Vec::new();
    if bound > tol {
        violations.push(format!("|p - sigma u| exceeds the multiplier by {bound:e}"));
    }
    if support > tol {
        violations.push(format!("sign condition on the support off by {support:e}"));
    }
    if report_state > tol {
        violations.push(format!("state equation residual {report_state:e}"));
    }
    if report_adjoint > tol {
        violations.push(format!("adjoint equation residual {report_adjoint:e}"));
    }
    if budget > tol {
        violations.push(format!("L1 budget exceeded by {budget:e}"));
    }
    KktReport {
        multiplier,
        dual_bound_excess: bound,
        support_gap: support,
        state_residual: report_state,
        adjoint_residual: report_adjoint,
        budget_excess: budget,
        violations,
    }
}
