//! Semismooth Newton solver for one augmented Lagrangian subproblem.

use serde::{Deserialize, Serialize};

use crate::numkit::sparse::{norm2, norm_inf};
use crate::numkit::{sparse_solve, SparseMatrix, TripletBuilder};

use super::fem::FemSystem;
use super::ControlError;

/// `max(0, (a − b₊)/σ) + min(0, (a + b₊)/σ)`.
#[inline]
pub fn shrinkage(a: f64, b: f64, sigma: f64) -> f64 {
    let bp = b.max(0.0);
    ((a - bp) / sigma).max(0.0) + ((a + bp) / sigma).min(0.0)
}

pub fn shrink_all(p: &[f64], beta: f64, sigma: f64) -> Vec<f64> {
    p.iter().map(|&a| shrinkage(a, beta, sigma)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubproblemParams {
    pub rho: f64,
    pub v: f64,
    pub kappa: f64,
    pub sigma: f64,
}

impl SubproblemParams {
    pub fn validate(&self) -> Result<(), ControlError> {
        let ok = self.rho > 0.0 && self.v >= 0.0 && self.kappa > 0.0 && self.sigma > 0.0;
        if ok && self.rho.is_finite() && self.v.is_finite() && self.sigma.is_finite() {
            Ok(())
        } else {
            Err(ControlError::InvalidParams(format!("{self:?}")))
        }
    }
}

/// State, control, adjoint and the scalar `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlIterate {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub beta: f64,
}

impl ControlIterate {
    /// Sets `u := S_σ(p, β)`.
    pub fn new(y: Vec<f64>, p: Vec<f64>, beta: f64, sigma: f64) -> Self {
        let u = shrink_all(&p, beta, sigma);
        Self { y, u, p, beta }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivePattern {
    /// `p_i − β₊ > 0`
    pub upper: Vec<bool>,
    /// `p_i + β₊ < 0`
    pub lower: Vec<bool>,
    pub theta1: bool,
    pub theta2: bool,
}

impl ActivePattern {
    pub fn new(z: &ControlIterate, params: &SubproblemParams, fem: &FemSystem) -> Self {
        let bp = z.beta.max(0.0);
        let upper = z.p.iter().map(|&p| p - bp > 0.0).collect();
        let lower = z.p.iter().map(|&p| p + bp < 0.0).collect();
        Self {
            upper,
            lower,
            theta1: z.beta >= 0.0,
            theta2: multiplier_argument(z, params, fem) >= 0.0,
        }
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.upper[i] || self.lower[i]
    }

    /// `χ_{I1} − χ_{I2}` at node `i`.
    pub fn side(&self, i: usize) -> f64 {
        if self.upper[i] {
            1.0
        } else if self.lower[i] {
            -1.0
        } else {
            0.0
        }
    }

    pub fn active_count(&self) -> usize {
        (0..self.upper.len()).filter(|&i| self.is_active(i)).count()
    }
}

/// `v + ρ(eᵀM_L|u| − κ)`
fn multiplier_argument(z: &ControlIterate, params: &SubproblemParams, fem: &FemSystem) -> f64 {
    params.v + params.rho * (fem.l1_norm(&z.u) - params.kappa)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub state_adjoint: Vec<f64>,
    pub state: Vec<f64>,
    pub multiplier: f64,
    pub norm: f64,
}

impl Residual {
    /// Stacked `(r₁, r₂, r₃)`.
    pub fn stacked(&self) -> Vec<f64> {
        let mut r = Vec::with_capacity(2 * self.state.len() + 1);
        r.extend_from_slice(&self.state_adjoint);
        r.extend_from_slice(&self.state);
        r.push(self.multiplier);
        r
    }
}

/// `r₁ = Kp + M(y − y_d)`, `r₂ = Ky − M_L u`, `r₃ = β − max(0, v + ρ(eᵀM_L|u| − κ))`.
pub fn residual(z: &ControlIterate, params: &SubproblemParams, fem: &FemSystem) -> Residual {
    let diff: Vec<f64> = z.y.iter().zip(&fem.y_desired).map(|(a, b)| a - b).collect();
    let mut r1 = fem.stiffness.mul_vec(&z.p);
    for (r, m) in r1.iter_mut().zip(fem.mass.mul_vec(&diff)) {
        *r += m;
    }
    let mut r2 = fem.stiffness.mul_vec(&z.y);
    for ((r, w), u) in r2.iter_mut().zip(&fem.lumped).zip(&z.u) {
        *r -= w * u;
    }
    let r3 = z.beta - multiplier_argument(z, params, fem).max(0.0);
    let norm = (norm2(&r1).powi(2) + norm2(&r2).powi(2) + r3 * r3).sqrt();
    Residual {
        state_adjoint: r1,
        state: r2,
        multiplier: r3,
        norm,
    }
}

/// Reduced generalized derivative over `(δy, δp, δβ)`, of size `2N + 1`.
pub fn newton_system(
    z: &ControlIterate,
    pattern: &ActivePattern,
    params: &SubproblemParams,
    fem: &FemSystem,
) -> SparseMatrix {
    let n = fem.n();
    let si = 1.0 / params.sigma;
    let t1 = if pattern.theta1 { 1.0 } else { 0.0 };
    let t2 = if pattern.theta2 { 1.0 } else { 0.0 };
    let dim = 2 * n + 1;
    let cap = 2 * fem.mass.nnz() + 2 * fem.stiffness.nnz() + 4 * n + 1;
    let mut b = TripletBuilder::with_capacity(dim, dim, cap);
    fem.mass.scatter_into(&mut b, 0, 0, 1.0);
    fem.stiffness.scatter_into(&mut b, 0, n, 1.0);
    fem.stiffness.scatter_into(&mut b, n, 0, 1.0);
    let mut active_mass = 0.0;
    for i in 0..n {
        if !pattern.is_active(i) {
            continue;
        }
        let w = fem.lumped[i];
        active_mass += w;
        b.push(n + i, n + i, -si * w);
        if t1 != 0.0 {
            b.push(n + i, 2 * n, si * t1 * w * pattern.side(i));
        }
        if t2 != 0.0 {
            b.push(2 * n, n + i, -params.rho * t2 * si * w * sign(z.u[i]));
        }
    }
    b.push(2 * n, 2 * n, delta_beta_coefficient(pattern, params, active_mass));
    b.build()
}

/// `1 + ρ θ̃₂ θ₁ σ⁻¹ Σ_{i∈I} (M_L)_ii`
fn delta_beta_coefficient(pattern: &ActivePattern, params: &SubproblemParams, active_mass: f64) -> f64 {
    if pattern.theta1 && pattern.theta2 {
        1.0 + params.rho * active_mass / params.sigma
    } else {
        1.0
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonStep {
    pub dy: Vec<f64>,
    pub du: Vec<f64>,
    pub dp: Vec<f64>,
    pub dbeta: f64,
}

/// Solves the reduced system and recovers `δu` from the linearized shrinkage.
pub fn reduced_step(
    z: &ControlIterate,
    params: &SubproblemParams,
    fem: &FemSystem,
) -> Result<NewtonStep, ControlError> {
    let n = fem.n();
    let pattern = ActivePattern::new(z, params, fem);
    let a = newton_system(z, &pattern, params, fem);
    let rhs: Vec<f64> = residual(z, params, fem).stacked().iter().map(|r| -r).collect();
    let d = sparse_solve(&a, &rhs)?;
    let dy = d[..n].to_vec();
    let dp = d[n..2 * n].to_vec();
    let dbeta = d[2 * n];
    let du = linearized_control(&pattern, &dp, dbeta, params.sigma);
    Ok(NewtonStep { dy, du, dp, dbeta })
}

/// `σ⁻¹ D_I δp − σ⁻¹ θ₁ δβ (χ_{I1} − χ_{I2})`
fn linearized_control(pattern: &ActivePattern, dp: &[f64], dbeta: f64, sigma: f64) -> Vec<f64> {
    let t1 = if pattern.theta1 { 1.0 } else { 0.0 };
    (0..dp.len())
        .map(|i| {
            if pattern.is_active(i) {
                (dp[i] - t1 * dbeta * pattern.side(i)) / sigma
            } else {
                0.0
            }
        })
        .collect()
}

/// Solves the unreduced four-block system over `(δy, δu, δp, δβ)`.
pub fn full_step(
    z: &ControlIterate,
    params: &SubproblemParams,
    fem: &FemSystem,
) -> Result<NewtonStep, ControlError> {
    let n = fem.n();
    let pattern = ActivePattern::new(z, params, fem);
    let si = 1.0 / params.sigma;
    let t1 = if pattern.theta1 { 1.0 } else { 0.0 };
    let t2 = if pattern.theta2 { 1.0 } else { 0.0 };
    let dim = 3 * n + 1;
    let (oy, ou, op, ob) = (0, n, 2 * n, 3 * n);
    let mut b = TripletBuilder::new(dim, dim);
    fem.mass.scatter_into(&mut b, oy, oy, 1.0);
    fem.stiffness.scatter_into(&mut b, oy, op, 1.0);
    for i in 0..n {
        b.push(ou + i, ou + i, 1.0);
        if pattern.is_active(i) {
            b.push(ou + i, op + i, -si);
            if t1 != 0.0 {
                b.push(ou + i, ob, si * t1 * pattern.side(i));
            }
        }
    }
    fem.stiffness.scatter_into(&mut b, 2 * n, oy, 1.0);
    for i in 0..n {
        b.push(2 * n + i, ou + i, -fem.lumped[i]);
        let s = sign(z.u[i]);
        if t2 != 0.0 && s != 0.0 {
            b.push(ob, ou + i, -params.rho * t2 * fem.lumped[i] * s);
        }
    }
    b.push(ob, ob, 1.0);
    let a = b.build();

    let r = residual(z, params, fem);
    let shrink_gap: Vec<f64> = z
        .u
        .iter()
        .zip(&z.p)
        .map(|(&u, &p)| u - shrinkage(p, z.beta, params.sigma))
        .collect();
    let mut rhs = Vec::with_capacity(dim);
    rhs.extend(r.state_adjoint.iter().map(|v| -v));
    rhs.extend(shrink_gap.iter().map(|v| -v));
    rhs.extend(r.state.iter().map(|v| -v));
    rhs.push(-r.multiplier);
    let d = sparse_solve(&a, &rhs)?;
    Ok(NewtonStep {
        dy: d[oy..ou].to_vec(),
        du: d[ou..op].to_vec(),
        dp: d[op..ob].to_vec(),
        dbeta: d[ob],
    })
}

/// Largest discrepancy between the reduced and the full Newton step, together
/// with how far the full `δu` is from the control recovered by linearized shrinkage.
pub fn step_equivalence_deviation(
    z: &ControlIterate,
    params: &SubproblemParams,
    fem: &FemSystem,
) -> Result<f64, ControlError> {
    let reduced = reduced_step(z, params, fem)?;
    let full = full_step(z, params, fem)?;
    let pattern = ActivePattern::new(z, params, fem);
    let diff = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };
    let recovered = linearized_control(&pattern, &full.dp, full.dbeta, params.sigma);
    Ok(diff(&reduced.dy, &full.dy)
        .max(diff(&reduced.dp, &full.dp))
        .max((reduced.dbeta - full.dbeta).abs())
        .max(diff(&full.du, &recovered)))
}

#[derive(Debug, Clone)]
pub struct SsnOutcome {
    pub iterate: ControlIterate,
    pub iterations: usize,
    /// Residual norms `‖F(z^ℓ)‖` for `ℓ = 0..=iterations`.
    pub residual_history: Vec<f64>,
}

/// Local semismooth Newton iteration started from `(y⁰, p⁰, β₀)` with
/// `u⁰ = S_σ(p⁰, β₀)`; the control supplied in `start` is ignored.
pub fn ssn_solve(
    start: &ControlIterate,
    params: &SubproblemParams,
    fem: &FemSystem,
    eps: f64,
    max_iterations: usize,
) -> Result<SsnOutcome, ControlError> {
    params.validate()?;
    let n = fem.n();
    if start.y.len() != n || start.p.len() != n {
        return Err(ControlError::DimensionMismatch {
            expected: n,
            found: start.y.len().min(start.p.len()),
        });
    }
    let mut z = ControlIterate::new(start.y.clone(), start.p.clone(), start.beta, params.sigma);
    let mut history = Vec::new();
    for iterations in 0.. {
        let r = residual(&z, params, fem);
        history.push(r.norm);
        if r.norm <= eps {
            return Ok(SsnOutcome {
                iterate: z,
                iterations,
                residual_history: history,
            });
        }
        if iterations >= max_iterations || !r.norm.is_finite() {
            return Err(ControlError::SsnIterationCap {
                iterations,
                residual: r.norm,
            });
        }
        let step = reduced_step(&z, params, fem)?;
        let y: Vec<f64> = z.y.iter().zip(&step.dy).map(|(a, b)| a + b).collect();
        let p: Vec<f64> = z.p.iter().zip(&step.dp).map(|(a, b)| a + b).collect();
        z = ControlIterate::new(y, p, z.beta + step.dbeta, params.sigma);
        debug_assert!(norm_inf(&step.dy).is_finite());
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    #[test]
    fn shrinkage_examples() {
        assert_eq!(shrinkage(2.0, 1.0, 1.0), 1.0);
        assert_eq!(shrinkage(0.5, 1.0, 1.0), 0.0);
        assert_eq!(shrinkage(-4.0, 1.0, 2.0), -1.5);
        for a in [-3.0, -0.1, 0.0, 0.7, 5.0] {
            assert_eq!(shrinkage(a, -2.0, 4.0), a / 4.0);
        }
    }

    fn params() -> SubproblemParams {
        SubproblemParams {
            rho: 0.5,
            v: 0.3,
            kappa: 0.05,
            sigma: 1e-2,
        }
    }

    fn random_iterate(fem: &FemSystem, rng: &mut Rng, beta: f64, sigma: f64) -> ControlIterate {
        let n = fem.n();
        let y = (0..n).map(|_| rng.standard_normal()).collect();
        let p = (0..n).map(|_| 0.02 * rng.standard_normal()).collect();
        ControlIterate::new(y, p, beta, sigma)
    }

    #[test]
    fn zero_start_residual() {
        let fem = FemSystem::standard(6).unwrap();
        let n = fem.n();
        let z = ControlIterate::new(vec![0.0; n], vec![0.0; n], 0.0, 1e-2);
        let par = SubproblemParams { v: 0.0, ..params() };
        let r = residual(&z, &par, &fem);
        assert_eq!(r.multiplier, 0.0);
        assert!(r.state.iter().all(|&v| v == 0.0));
        let expected = fem.mass.mul_vec(&fem.y_desired);
        for (a, b) in r.state_adjoint.iter().zip(&expected) {
            assert!((a + b).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_affine_in_desired_state() {
        let mut fem = FemSystem::standard(5).unwrap();
        let mut rng = Rng::new(3);
        let z = random_iterate(&fem, &mut rng, 0.01, 1e-2);
        let par = params();
        let r0 = residual(&z, &par, &fem);
        let shift: Vec<f64> = (0..fem.n()).map(|_| rng.standard_normal()).collect();
        for (a, s) in fem.y_desired.iter_mut().zip(&shift) {
            *a += s;
        }
        let r1 = residual(&z, &par, &fem);
        let ms = fem.mass.mul_vec(&shift);
        for i in 0..fem.n() {
            assert!((r1.state_adjoint[i] - r0.state_adjoint[i] + ms[i]).abs() < 1e-12);
        }
        assert_eq!(r0.state, r1.state);
        assert_eq!(r0.multiplier, r1.multiplier);
    }

    #[test]
    fn smooth_branch_matches_direct_solve() {
        let fem = FemSystem::standard(8).unwrap();
        let n = fem.n();
        let sigma = 1e-2;
        // β = 0 and κ huge: u = p/σ, so [M K; K −σ⁻¹M_L][y; p] = [M y_d; 0]
        let mut b = TripletBuilder::new(2 * n, 2 * n);
        fem.mass.scatter_into(&mut b, 0, 0, 1.0);
        fem.stiffness.scatter_into(&mut b, 0, n, 1.0);
        fem.stiffness.scatter_into(&mut b, n, 0, 1.0);
        for i in 0..n {
            b.push(n + i, n + i, -fem.lumped[i] / sigma);
        }
        let mut rhs = fem.mass.mul_vec(&fem.y_desired);
        rhs.extend(std::iter::repeat(0.0).take(n));
        let x = sparse_solve(&b.build(), &rhs).unwrap();
        let z = ControlIterate::new(x[..n].to_vec(), x[n..].to_vec(), 0.0, sigma);
        let par = SubproblemParams {
            rho: 1e-4,
            v: 0.0,
            kappa: 1e6,
            sigma,
        };
        assert!(residual(&z, &par, &fem).norm <= 1e-10);
        let out = ssn_solve(&z, &par, &fem, 1e-9, 50).unwrap();
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn large_budget_converges_in_two_steps() {
        let fem = FemSystem::standard(16).unwrap();
        let n = fem.n();
        let par = SubproblemParams {
            rho: 1e-4,
            v: 0.0,
            kappa: 1e6,
            sigma: 1e-2,
        };
        let start = ControlIterate::new(vec![0.0; n], vec![0.0; n], 1e-6, par.sigma);
        let out = ssn_solve(&start, &par, &fem, 1e-10, 50).unwrap();
        assert!(out.iterations <= 2, "{} iterations", out.iterations);
    }

    #[test]
    fn decoupled_pattern_gives_minus_r3() {
        let fem = FemSystem::standard(4).unwrap();
        let n = fem.n();
        let par = SubproblemParams {
            rho: 1.0,
            v: 0.0,
            kappa: 10.0,
            sigma: 1.0,
        };
        // |p| < β everywhere: I empty, and v + ρ(0 − κ) < 0 gives θ̃₂ = 0
        let z = ControlIterate::new(vec![0.1; n], vec![0.2; n], 0.5, par.sigma);
        let pattern = ActivePattern::new(&z, &par, &fem);
        assert_eq!(pattern.active_count(), 0);
        assert!(!pattern.theta2);
        let a = newton_system(&z, &pattern, &par, &fem);
        let last: Vec<(usize, f64)> = a.row(2 * n).filter(|&(_, v)| v != 0.0).collect();
        assert_eq!(last, vec![(2 * n, 1.0)]);
        let r3 = residual(&z, &par, &fem).multiplier;
        let red = reduced_step(&z, &par, &fem).unwrap();
        let full = full_step(&z, &par, &fem).unwrap();
        assert_eq!(red.dbeta, -r3);
        assert_eq!(full.dbeta, -r3);
    }

    #[test]
    fn sign_condition_holds_after_shrinkage() {
        let fem = FemSystem::standard(6).unwrap();
        let mut rng = Rng::new(5);
        for beta in [-0.01, 0.0, 0.005, 0.02] {
            let z = random_iterate(&fem, &mut rng, beta, 1e-2);
            let pattern = ActivePattern::new(&z, &params(), &fem);
            for i in 0..fem.n() {
                assert!(!(pattern.upper[i] && pattern.lower[i]));
                if pattern.upper[i] {
                    assert!(z.u[i] > 0.0);
                } else if pattern.lower[i] {
                    assert!(z.u[i] < 0.0);
                } else {
                    assert_eq!(z.u[i], 0.0);
                }
            }
        }
    }

    #[test]
    fn matches_dense_hand_assembly() {
        let fem = FemSystem::standard(3).unwrap();
        let n = fem.n();
        let mut rng = Rng::new(11);
        let par = SubproblemParams {
            rho: 2.0,
            v: 1.0,
            kappa: 1e-3,
            sigma: 0.5,
        };
        let z = ControlIterate::new(vec![0.0; n], (0..n).map(|_| rng.standard_normal()).collect(), 0.3, par.sigma);
        let pattern = ActivePattern::new(&z, &par, &fem);
        assert!(pattern.theta1 && pattern.theta2 && pattern.active_count() > 0);
        let dim = 2 * n + 1;
        let k = fem.stiffness.to_dense();
        let m = fem.mass.to_dense();
        let mut dense = vec![0.0; dim * dim];
        for i in 0..n {
            for j in 0..n {
                dense[i * dim + j] = m[i * n + j];
                dense[i * dim + n + j] = k[i * n + j];
                dense[(n + i) * dim + j] = k[i * n + j];
            }
            let chi = if pattern.is_active(i) { 1.0 } else { 0.0 };
            dense[(n + i) * dim + n + i] = -chi * fem.lumped[i] / par.sigma;
            dense[(n + i) * dim + 2 * n] = pattern.side(i) * fem.lumped[i] / par.sigma;
            dense[2 * n * dim + n + i] =
                -par.rho / par.sigma * chi * fem.lumped[i] * z.u[i].signum() * (z.u[i] != 0.0) as u8 as f64;
        }
        let active: f64 = (0..n).filter(|&i| pattern.is_active(i)).map(|i| fem.lumped[i]).sum();
        dense[dim * dim - 1] = 1.0 + par.rho / par.sigma * active;
        let assembled = newton_system(&z, &pattern, &par, &fem).to_dense();
        for (a, b) in assembled.iter().zip(&dense) {
            assert!((a - b).abs() <= 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn reduced_and_full_steps_agree() {
        for (m, seed) in (0..10u64).map(|s| ([4, 6, 8][s as usize % 3], s)) {
            let fem = FemSystem::standard(m).unwrap();
            let mut rng = Rng::new(100 + seed);
            let beta = 0.01 * rng.uniform();
            let z = random_iterate(&fem, &mut rng, beta, 1e-2);
            let par = SubproblemParams {
                rho: 0.1 + rng.uniform(),
                v: rng.uniform(),
                kappa: 0.01,
                sigma: 1e-2,
            };
            let dev = step_equivalence_deviation(&z, &par, &fem).unwrap();
            assert!(dev <= 1e-10, "mesh {m} seed {seed}: {dev}");
        }
    }

    #[test]
    fn delta_beta_coefficient_at_least_one() {
        let fem = FemSystem::standard(5).unwrap();
        let mut rng = Rng::new(21);
        for _ in 0..20 {
            let beta = 0.02 * rng.standard_normal();
            let z = random_iterate(&fem, &mut rng, beta, 1e-2);
            let par = SubproblemParams {
                rho: 10.0 * rng.uniform() + 1e-6,
                v: rng.uniform(),
                kappa: 0.01,
                sigma: 1e-2,
            };
            let pattern = ActivePattern::new(&z, &par, &fem);
            let a = newton_system(&z, &pattern, &par, &fem);
            assert!(a.get(2 * fem.n(), 2 * fem.n()) >= 1.0);
        }
    }

    #[test]
    fn iteration_cap_is_reported() {
        let fem = FemSystem::standard(8).unwrap();
        let n = fem.n();
        let par = SubproblemParams {
            rho: 1.0,
            v: 0.0,
            kappa: 0.1,
            sigma: 1e-2,
        };
        let start = ControlIterate::new(vec![0.0; n], vec![0.0; n], 1e-6, par.sigma);
        let err = ssn_solve(&start, &par, &fem, 1e-30, 1).unwrap_err();
        assert!(matches!(err, ControlError::SsnIterationCap { iterations: 1, .. }));
    }
}
