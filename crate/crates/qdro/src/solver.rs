//! Outer solver for the reformulated robust smoothing problem, plus the
//! optimality certificates: KKT residuals on the smooth exponent range and
//! duality gaps against the worst-case oracle everywhere.
//!
//! For q strictly between 1 and infinity the multipliers of the
//! nonnegativity constraints vanish at the optimum, so the primary path
//! minimizes the regularized objective over `(x, beta)` by projected
//! gradient with backtracking and then polishes the stationarity system
//! with a damped Newton method. The boundary exponents are nonsmooth;
//! there the solver runs subgradient descent over the full variable block
//! `(x, lambda, beta)` with diminishing steps and finishes with an exact
//! structural refinement (a single water-filling level for q = inf, a pair
//! of clamping levels for q = 1).

use crate::adversary::{worst_case, AdversaryError};
use crate::core::{
    floored_ln, Distribution, Instance, QExponent, Solution, SolverStatus, Tolerances,
};
use crate::laplace::{laplace_smooth, Pseudocount};
use crate::norms::{dual_norm, q_norm, signed_power, v_vector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const NEWTON_RESERVE: usize = 80;
const NEWTON_MAX: usize = 60;
const SUBGRADIENT_CAP: usize = 2_000;
const REFINE_MIN_BUDGET: usize = 10;
const POSITIVITY_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPolicy {
    #[default]
    FixedBacktracking,
    Diminishing,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tolerances: Tolerances,
    pub max_iterations: usize,
    pub step_policy: StepPolicy,
    pub symmetrize: bool,
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerances: Tolerances::default(),
            max_iterations: 25_000,
            step_policy: StepPolicy::FixedBacktracking,
            symmetrize: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("a zero robustness radius requires a strictly positive empirical distribution")]
    EpsilonZeroWithZeros,
    #[error("dual-norm value {t:.3e} is at or below the degeneracy tolerance; the stationarity system is undefined there")]
    DegenerateNorm { t: f64 },
    #[error("KKT residuals require an exponent strictly between 1 and infinity, got q = {q}")]
    NonSmoothExponent { q: QExponent },
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
}

/// Residuals of the stationarity system at a candidate solution, with the
/// reconstructed multipliers `gamma` (simplex constraint) and `xi`
/// (multipliers of `lambda >= 0`).
#[derive(Clone, Debug, Serialize)]
pub struct KktReport {
    pub stationarity_x: Vec<f64>,
    pub stationarity_lambda: Vec<f64>,
    pub stationarity_beta: f64,
    pub complementarity: Vec<f64>,
    pub gamma: f64,
    pub xi: Vec<f64>,
    pub max_residual: f64,
}

impl KktReport {
    /// At a true optimum the simplex multiplier equals one.
    pub fn gamma_deviation(&self) -> f64 {
        (self.gamma - 1.0).abs()
    }

    /// At a true optimum the multipliers of `lambda >= 0` equal `x`.
    pub fn xi_deviation(&self, x: &Distribution) -> f64 {
        self.xi
            .iter()
            .zip(x.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A solution together with its certificates, in the on-disk layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertifiedSolution {
    #[serde(flatten)]
    pub solution: Solution,
    pub kkt_max_residual: Option<f64>,
    pub duality_gap: f64,
}

/// Summary of every certificate attached to a solution.
#[derive(Clone, Debug, Serialize)]
pub struct CertificationReport {
    pub assumption1: bool,
    pub recomputed_t: f64,
    pub t_consistent: bool,
    pub kkt_max_residual: Option<f64>,
    pub gamma_deviation: Option<f64>,
    pub xi_deviation: Option<f64>,
    pub lambda_max: f64,
    pub duality_gap: f64,
    pub certified: bool,
}

/// Objective of the reformulated problem:
/// `sum_j p_hat_j (-ln x_j + lambda_j) + eps ||-ln x - beta 1 + lambda||*`.
pub fn objective_full(x: &Distribution, lambda: &[f64], beta: f64, inst: &Instance) -> f64 {
    assert_eq!(x.len(), inst.n(), "dimension mismatch");
    assert_eq!(lambda.len(), inst.n(), "dimension mismatch");
    let p_hat = inst.p_hat.probs();
    let mut acc = 0.0;
    let mut y = vec![0.0; x.len()];
    for j in 0..x.len() {
        let u = -floored_ln(x.get(j));
        acc += p_hat[j] * (u + lambda[j]);
        y[j] = u - beta + lambda[j];
    }
    acc + inst.epsilon * dual_norm(&y, inst.q).value
}

/// The regularized form: cross-entropy against the empirical distribution
/// plus eps times the dual norm of the deviations of `-ln x` from the
/// baseline. Identical to [`objective_full`] with zero multipliers.
pub fn objective_regularized(x: &Distribution, beta: f64, inst: &Instance) -> f64 {
    objective_full(x, &vec![0.0; x.len()], beta, inst)
}

/// True when the uniform distribution lies inside the ambiguity set, which
/// is exactly the degenerate regime where the optimum is uniform.
fn uniform_is_feasible(inst: &Instance, feas_tol: f64) -> bool {
    let n = inst.n() as f64;
    let e: Vec<f64> = inst.p_hat.iter().map(|&p| 1.0 / n - p).collect();
    q_norm(&e, inst.q) <= inst.epsilon + feas_tol
}

fn degenerate_solution(n: usize, iterations: usize) -> Solution {
    Solution {
        x: Distribution::uniform(n),
        beta: (n as f64).ln(),
        lambda: vec![0.0; n],
        objective: (n as f64).ln(),
        t: 0.0,
        degenerate: true,
        iterations,
        status: SolverStatus::Degenerate,
    }
}

/// Minimizer of `beta -> ||u - beta 1||*` for the dual norm selected by `q`.
fn best_beta(u: &[f64], q: QExponent) -> f64 {
    let umin = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let umax = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if umax - umin <= 0.0 {
        return umin;
    }
    match q {
        // dual norm is the max-norm: midrange
        QExponent::One => 0.5 * (umin + umax),
        // dual norm is the 1-norm: median (interval midpoint for even n)
        QExponent::Infinity => {
            let mut s = u.to_vec();
            s.sort_by(|a, b| a.total_cmp(b));
            let n = s.len();
            if n % 2 == 1 {
                s[n / 2]
            } else {
                0.5 * (s[n / 2 - 1] + s[n / 2])
            }
        }
        QExponent::Finite(_) => {
            let qs = q.dual().value();
            let total = |beta: f64| -> f64 {
                u.iter().map(|&uj| signed_power(uj - beta, qs)).sum()
            };
            let (mut lo, mut hi) = (umin, umax);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if total(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    }
}

/// Empirical passthrough for a zero radius: the worst case collapses to the
/// empirical distribution, so the estimator is the empirical distribution
/// itself when it is strictly positive.
fn passthrough_solution(inst: &Instance, tol: &Tolerances) -> Result<Solution, SolverError> {
    if !inst.p_hat.is_strictly_positive(0.0) {
        return Err(SolverError::EpsilonZeroWithZeros);
    }
    let u = inst.p_hat.neg_log();
    let beta = best_beta(&u, inst.q);
    let n = inst.n();
    Ok(finalize(
        inst,
        inst.p_hat.probs().to_vec(),
        beta,
        vec![0.0; n],
        0,
        SolverStatus::Converged,
        tol,
    ))
}

/// Average estimator components over groups of exactly equal empirical
/// probabilities; the optimum is symmetric, this removes iteration dust.
fn symmetrize_groups(x: &mut [f64], p_hat: &[f64]) {
    let n = p_hat.len();
    let mut handled = vec![false; n];
    for j in 0..n {
        if handled[j] {
            continue;
        }
        let group: Vec<usize> = (j..n)
            .filter(|&k| p_hat[k].to_bits() == p_hat[j].to_bits())
            .collect();
        if group.len() > 1 {
            let mean = group.iter().map(|&k| x[k]).sum::<f64>() / group.len() as f64;
            for &k in &group {
                x[k] = mean;
            }
        }
        for &k in &group {
            handled[k] = true;
        }
    }
}

fn finalize(
    inst: &Instance,
    x_vec: Vec<f64>,
    beta: f64,
    lambda: Vec<f64>,
    iterations: usize,
    status: SolverStatus,
    tol: &Tolerances,
) -> Solution {
    // unconverged iterates (e.g. a truncated Newton run) may sit off the
    // simplex; snap them back before constructing the distribution
    let sum: f64 = x_vec.iter().sum();
    let x_vec = if (sum - 1.0).abs() > 1e-7 || x_vec.iter().any(|&v| v < -1e-7) {
        project_simplex_vec(&x_vec)
    } else {
        x_vec
    };
    let x = Distribution::with_tolerance(x_vec, 1e-6).expect("solver iterate left the simplex");
    let y: Vec<f64> = x
        .iter()
        .zip(&lambda)
        .map(|(&xj, &lj)| -floored_ln(xj) - beta + lj)
        .collect();
    let t = q_norm(&y, inst.q.dual());
    if t <= tol.degen_tol {
        return degenerate_solution(inst.n(), iterations);
    }
    let objective = objective_full(&x, &lambda, beta, inst);
    Solution {
        x,
        beta,
        lambda,
        objective,
        t,
        degenerate: false,
        iterations,
        status,
    }
}

fn project_simplex_vec(v: &[f64]) -> Vec<f64> {
    crate::adversary::project_simplex(v).into()
}

fn floor_simplex(v: &[f64]) -> Vec<f64> {
    let mut x = project_simplex_vec(v);
    for value in x.iter_mut() {
        if *value < POSITIVITY_FLOOR {
            *value = POSITIVITY_FLOOR;
        }
    }
    let sum: f64 = x.iter().sum();
    for value in x.iter_mut() {
        *value /= sum;
    }
    x
}

/// Gradient data of the regularized objective at `(x, lambda, beta)`.
struct EvalPoint {
    f: f64,
    w: Vec<f64>,
}

fn evaluate(
    inst: &Instance,
    q_star: f64,
    degen_tol: f64,
    x: &[f64],
    lambda: &[f64],
    beta: f64,
) -> EvalPoint {
    let p_hat = inst.p_hat.probs();
    let n = x.len();
    let mut acc = 0.0;
    let mut y = vec![0.0; n];
    for j in 0..n {
        let u = -floored_ln(x[j]);
        acc += p_hat[j] * (u + lambda[j]);
        y[j] = u - beta + lambda[j];
    }
    let v: Vec<f64> = y.iter().map(|&yj| signed_power(yj, q_star)).collect();
    let t = q_norm(&y, QExponent::Finite(q_star));
    let tpow = t.powf(q_star - 1.0);
    let w: Vec<f64> = if t <= degen_tol {
        vec![0.0; n]
    } else {
        v.iter().map(|&vj| vj / tpow).collect()
    };
    EvalPoint {
        f: acc + inst.epsilon * t,
        w,
    }
}

fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-250 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            b.swap(pivot, col);
        }
        for row in (col + 1)..n {
            let factor = a[row * n + col] / a[col * n + col];
            if factor != 0.0 {
                for k in col..n {
                    a[row * n + k] -= factor * a[col * n + k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}

/// Residuals of the reduced stationarity system
/// `x_j - p_hat_j - eps v_j / t^(q*-1) = 0`, `sum_j v_j = 0`.
fn stationarity_residual(
    inst: &Instance,
    q_star: f64,
    degen_tol: f64,
    x: &[f64],
    lambda: &[f64],
    beta: f64,
) -> Option<(Vec<f64>, f64)> {
    let p_hat = inst.p_hat.probs();
    let n = x.len();
    let y: Vec<f64> = (0..n)
        .map(|j| -floored_ln(x[j]) - beta + lambda[j])
        .collect();
    let t = q_norm(&y, QExponent::Finite(q_star));
    if t <= degen_tol {
        return None;
    }
    let tpow = t.powf(q_star - 1.0);
    let mut r = vec![0.0; n + 1];
    let mut vsum = 0.0;
    for j in 0..n {
        let v = signed_power(y[j], q_star);
        vsum += v;
        r[j] = x[j] - p_hat[j] - inst.epsilon * v / tpow;
    }
    r[n] = vsum;
    Some((r, t))
}

fn residual_norm(r: &[f64]) -> f64 {
    r.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Damped Newton iterations on the reduced stationarity system; returns the
/// number of iterations consumed.
fn newton_polish(
    inst: &Instance,
    q_star: f64,
    degen_tol: f64,
    x: &mut Vec<f64>,
    lambda: &[f64],
    beta: &mut f64,
    budget: usize,
) -> usize {
    let n = x.len();
    let eps = inst.epsilon;
    let mut used = 0;
    while used < budget {
        let Some((r, t)) = stationarity_residual(inst, q_star, degen_tol, x, lambda, *beta)
        else {
            break;
        };
        let rinf = residual_norm(&r);
        if rinf <= 1e-12 {
            break;
        }
        let dim = n + 1;
        let mut jac = vec![0.0; dim * dim];
        let tpow = t.powf(q_star - 1.0);
        let y: Vec<f64> = (0..n)
            .map(|j| -floored_ln(x[j]) - *beta + lambda[j])
            .collect();
        let v: Vec<f64> = y.iter().map(|&yj| signed_power(yj, q_star)).collect();
        let w: Vec<f64> = v.iter().map(|&vj| vj / tpow).collect();
        let phi: Vec<f64> = y
            .iter()
            .map(|&yj| ((q_star - 1.0) * yj.abs().max(1e-14).powf(q_star - 2.0)).min(1e14))
            .collect();
        let sum_w: f64 = w.iter().sum();
        let sum_phi: f64 = phi.iter().sum();
        let tq = tpow * t;
        for j in 0..n {
            for k in 0..n {
                let mut entry = -eps * (q_star - 1.0) * v[j] * w[k] / (x[k] * tq);
                if j == k {
                    entry += 1.0 + eps * phi[j] / (x[j] * tpow);
                }
                jac[j * dim + k] = entry;
            }
            jac[j * dim + n] = eps * phi[j] / tpow - eps * (q_star - 1.0) * v[j] * sum_w / tq;
        }
        for k in 0..n {
            jac[n * dim + k] = -phi[k] / x[k];
        }
        jac[n * dim + n] = -sum_phi;

        let rhs: Vec<f64> = r.iter().map(|&value| -value).collect();
        let Some(delta) = solve_dense(jac, rhs, dim) else {
            break;
        };
        let mut alpha: f64 = 1.0;
        for j in 0..n {
            if delta[j] < 0.0 {
                alpha = alpha.min(0.95 * x[j] / -delta[j]);
            }
        }
        let mut improved = false;
        for _ in 0..40 {
            let xc: Vec<f64> = (0..n).map(|j| x[j] + alpha * delta[j]).collect();
            let bc = *beta + alpha * delta[n];
            if let Some((rc, _)) = stationarity_residual(inst, q_star, degen_tol, &xc, lambda, bc)
            {
                if residual_norm(&rc) < rinf {
                    *x = xc;
                    *beta = bc;
                    improved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        used += 1;
        if !improved {
            break;
        }
    }
    used
}

/// Projected gradient with backtracking over `(x, beta)` (and optionally
/// `lambda >= 0`), then a Newton polish. Used for q strictly between 1 and
/// infinity.
fn smooth_solve(inst: &Instance, settings: &SolverSettings, free_lambda: bool) -> Solution {
    let tol = &settings.tolerances;
    let n = inst.n();
    let p_hat = inst.p_hat.probs();
    let eps = inst.epsilon;
    let q_star = inst.q.dual().value();

    let seed = laplace_smooth(
        &inst.p_hat,
        Pseudocount::new(1.0 / n as f64).expect("positive pseudocount"),
    );
    let mut x: Vec<f64> = seed.into();
    let mut beta: f64 = x.iter().map(|&v| v * -(v.ln())).sum();
    let mut lambda = if free_lambda {
        vec![1.0 / n as f64; n]
    } else {
        vec![0.0; n]
    };

    let budget = settings.max_iterations.max(1);
    let pgd_budget = budget.saturating_sub(NEWTON_RESERVE);
    let mut iterations = 0;
    let mut step: f64 = 1.0;
    let mut point = evaluate(inst, q_star, tol.degen_tol, &x, &lambda, beta);
    let mut stalls = 0;

    while iterations < pgd_budget {
        if let Some((r, _)) =
            stationarity_residual(inst, q_star, tol.degen_tol, &x, &lambda, beta)
        {
            let lambda_ok = !free_lambda
                || lambda.iter().cloned().fold(0.0, f64::max) <= tol.cert_tol;
            if residual_norm(&r) <= 0.5 * tol.cert_tol && lambda_ok {
                break;
            }
        }
        let gx: Vec<f64> = (0..n)
            .map(|j| -(p_hat[j] + eps * point.w[j]) / x[j])
            .collect();
        let gl: Vec<f64> = (0..n).map(|j| p_hat[j] + eps * point.w[j]).collect();
        let gb = -eps * point.w.iter().sum::<f64>();

        let (accepted, next) = match settings.step_policy {
            StepPolicy::Diminishing => {
                let s = 0.1 / ((iterations + 1) as f64).sqrt();
                let xc = floor_simplex(
                    &(0..n).map(|j| x[j] - s * gx[j]).collect::<Vec<f64>>(),
                );
                let lc: Vec<f64> = if free_lambda {
                    (0..n).map(|j| (lambda[j] - s * gl[j]).max(0.0)).collect()
                } else {
                    lambda.clone()
                };
                let bc = beta - s * gb;
                let pc = evaluate(inst, q_star, tol.degen_tol, &xc, &lc, bc);
                (true, Some((xc, lc, bc, pc)))
            }
            StepPolicy::FixedBacktracking => {
                step = (step * 2.0).min(1e4);
                let mut found = None;
                for _ in 0..60 {
                    let xc = floor_simplex(
                        &(0..n).map(|j| x[j] - step * gx[j]).collect::<Vec<f64>>(),
                    );
                    let lc: Vec<f64> = if free_lambda {
                        (0..n)
                            .map(|j| (lambda[j] - step * gl[j]).max(0.0))
                            .collect()
                    } else {
                        lambda.clone()
                    };
                    let bc = beta - step * gb;
                    let pc = evaluate(inst, q_star, tol.degen_tol, &xc, &lc, bc);
                    let movement: f64 = (0..n)
                        .map(|j| (xc[j] - x[j]).powi(2) + (lc[j] - lambda[j]).powi(2))
                        .sum::<f64>()
                        + (bc - beta).powi(2);
                    if pc.f.is_finite() && pc.f <= point.f - 1e-4 * movement / step.max(1e-18) {
                        found = Some((xc, lc, bc, pc));
                        break;
                    }
                    step *= 0.5;
                }
                (found.is_some(), found)
            }
        };
        iterations += 1;
        match next {
            Some((xc, lc, bc, pc)) if accepted => {
                let progress = point.f - pc.f;
                x = xc;
                lambda = lc;
                beta = bc;
                point = pc;
                if progress.abs() <= 1e-15 * (1.0 + point.f.abs()) {
                    stalls += 1;
                    if stalls >= 25 {
                        break;
                    }
                } else {
                    stalls = 0;
                }
            }
            _ => break,
        }
    }

    let newton_budget = NEWTON_MAX.min(budget.saturating_sub(iterations));
    iterations += newton_polish(
        inst,
        q_star,
        tol.degen_tol,
        &mut x,
        &lambda,
        &mut beta,
        newton_budget,
    );

    if settings.symmetrize {
        symmetrize_groups(&mut x, p_hat);
    }
    let mut solution = finalize(
        inst,
        x,
        beta,
        lambda,
        iterations,
        SolverStatus::Converged,
        tol,
    );
    if !solution.degenerate {
        match kkt_parts(&solution, inst, tol.degen_tol) {
            Some(report) if report.max_residual <= tol.cert_tol => {}
            _ => solution.status = SolverStatus::MaxIterations,
        }
    }
    solution
}

/// Water-filling refinement for q = inf: the estimator clamps a common
/// level into `[p_hat_j - eps, p_hat_j + eps]`, the level chosen so the
/// components sum to one.
fn waterfill_refinement(inst: &Instance) -> (Vec<f64>, f64) {
    let p_hat = inst.p_hat.probs();
    let eps = inst.epsilon;
    let total = |z: f64| -> f64 {
        p_hat
            .iter()
            .map(|&p| z.clamp(p - eps, p + eps))
            .sum::<f64>()
    };
    let mut lo = 0.0;
    let mut hi = p_hat.iter().cloned().fold(0.0, f64::max) + eps;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z = 0.5 * (lo + hi);
    let mut x: Vec<f64> = p_hat.iter().map(|&p| z.clamp(p - eps, p + eps)).collect();
    let sum: f64 = x.iter().sum();
    for value in x.iter_mut() {
        *value /= sum;
    }
    let interior = p_hat
        .iter()
        .position(|&p| z > p - eps && z < p + eps);
    let beta = match interior {
        Some(j) => -floored_ln(x[j]),
        None => -floored_ln(z / sum),
    };
    (x, beta)
}

/// Two-level refinement for q = 1: raise every component below `a` to `a`
/// and lower every component above `b` to `b`, each level moving half the
/// total-variation budget.
fn two_level_refinement(inst: &Instance) -> (Vec<f64>, f64) {
    let p_hat = inst.p_hat.probs();
    let eps = inst.epsilon;
    let n = p_hat.len() as f64;
    let raise = |a: f64| -> f64 { p_hat.iter().map(|&p| (a - p).max(0.0)).sum() };
    let lower = |b: f64| -> f64 { p_hat.iter().map(|&p| (p - b).max(0.0)).sum() };
    let (mut lo, mut hi) = (0.0, 1.0 / n + eps);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if raise(mid) < eps / 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    let (mut lo, mut hi) = (0.0, p_hat.iter().cloned().fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lower(mid) > eps / 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b = 0.5 * (lo + hi);
    let mut x: Vec<f64> = p_hat.iter().map(|&p| p.clamp(a, b)).collect();
    let sum: f64 = x.iter().sum();
    for value in x.iter_mut() {
        *value /= sum;
    }
    let u: Vec<f64> = x.iter().map(|&v| -floored_ln(v)).collect();
    let umin = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let umax = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (x, 0.5 * (umin + umax))
}

/// Subgradient descent with diminishing steps over the full variable block,
/// then the exact structural refinement. Used for q in {1, inf}.
fn nonsmooth_solve(inst: &Instance, settings: &SolverSettings) -> Solution {
    let tol = &settings.tolerances;
    let n = inst.n();
    let p_hat = inst.p_hat.probs();
    let eps = inst.epsilon;

    let seed = laplace_smooth(
        &inst.p_hat,
        Pseudocount::new(1.0 / n as f64).expect("positive pseudocount"),
    );
    let mut x: Vec<f64> = seed.into();
    let mut lambda = vec![0.0; n];
    let mut beta: f64 = x.iter().map(|&v| v * -(v.ln())).sum();

    let full_objective = |x: &[f64], lambda: &[f64], beta: f64| -> f64 {
        let mut acc = 0.0;
        let mut y = vec![0.0; n];
        for j in 0..n {
            let u = -floored_ln(x[j]);
            acc += p_hat[j] * (u + lambda[j]);
            y[j] = u - beta + lambda[j];
        }
        acc + eps * dual_norm(&y, inst.q).value
    };

    let mut best = (x.clone(), lambda.clone(), beta, full_objective(&x, &lambda, beta));
    let cap = settings.max_iterations.min(SUBGRADIENT_CAP);
    let mut iterations = 0;
    for k in 0..cap {
        let y: Vec<f64> = (0..n)
            .map(|j| -floored_ln(x[j]) - beta + lambda[j])
            .collect();
        let sigma: Vec<f64> = match inst.q {
            // dual norm is the max-norm: subgradient on the first arg-max
            QExponent::One => {
                let mut jmax = 0;
                for j in 1..n {
                    if y[j].abs() > y[jmax].abs() {
                        jmax = j;
                    }
                }
                let mut s = vec![0.0; n];
                s[jmax] = if y[jmax] > 0.0 {
                    1.0
                } else if y[jmax] < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                s
            }
            // dual norm is the 1-norm: sign pattern
            QExponent::Infinity => y
                .iter()
                .map(|&v| {
                    if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
            QExponent::Finite(_) => unreachable!("nonsmooth path requires a boundary exponent"),
        };
        let s = 0.1 / ((k + 1) as f64).sqrt();
        let xc: Vec<f64> = (0..n)
            .map(|j| x[j] - s * -(p_hat[j] + eps * sigma[j]) / x[j])
            .collect();
        x = floor_simplex(&xc);
        for j in 0..n {
            lambda[j] = (lambda[j] - s * (p_hat[j] + eps * sigma[j])).max(0.0);
        }
        beta += s * eps * sigma.iter().sum::<f64>();
        iterations += 1;
        let f = full_objective(&x, &lambda, beta);
        if f < best.3 {
            best = (x.clone(), lambda.clone(), beta, f);
        }
    }

    let (mut x, lambda, beta, status) = if settings.max_iterations >= REFINE_MIN_BUDGET {
        let (xr, br) = match inst.q {
            QExponent::Infinity => waterfill_refinement(inst),
            QExponent::One => two_level_refinement(inst),
            QExponent::Finite(_) => unreachable!(),
        };
        let fr = full_objective(&xr, &vec![0.0; n], br);
        if fr <= best.3 + 1e-12 {
            (xr, vec![0.0; n], br, SolverStatus::Converged)
        } else {
            (best.0, best.1, best.2, SolverStatus::MaxIterations)
        }
    } else {
        (best.0, best.1, best.2, SolverStatus::MaxIterations)
    };

    if settings.symmetrize {
        symmetrize_groups(&mut x, p_hat);
    }
    finalize(inst, x, beta, lambda, iterations, status, tol)
}

/// Solve the robust smoothing problem.
///
/// Smooth exponents fix the nonnegativity multipliers at zero (they vanish
/// at every optimum on that range) and certify through KKT residuals; the
/// boundary exponents run the full nonsmooth problem and certify through
/// the duality gap. A zero radius returns the empirical distribution; when
/// the uniform distribution lies inside the ambiguity set the closed-form
/// degenerate optimum is returned.
pub fn solve_qdro(inst: &Instance, settings: &SolverSettings) -> Result<Solution, SolverError> {
    if inst.epsilon == 0.0 {
        return passthrough_solution(inst, &settings.tolerances);
    }
    if uniform_is_feasible(inst, settings.tolerances.feas_tol) {
        return Ok(degenerate_solution(inst.n(), 0));
    }
    Ok(match inst.q {
        QExponent::Finite(_) => smooth_solve(inst, settings, false),
        _ => nonsmooth_solve(inst, settings),
    })
}

/// Solve the reformulated problem without fixing the nonnegativity
/// multipliers; their convergence to zero on the smooth exponent range is a
/// testable property of the optimum.
pub fn solve_full(inst: &Instance, settings: &SolverSettings) -> Result<Solution, SolverError> {
    if inst.epsilon == 0.0 {
        return passthrough_solution(inst, &settings.tolerances);
    }
    if uniform_is_feasible(inst, settings.tolerances.feas_tol) {
        return Ok(degenerate_solution(inst.n(), 0));
    }
    Ok(match inst.q {
        QExponent::Finite(_) => smooth_solve(inst, settings, true),
        _ => nonsmooth_solve(inst, settings),
    })
}

fn kkt_parts(sol: &Solution, inst: &Instance, degen_tol: f64) -> Option<KktReport> {
    let (v, t) = v_vector(&sol.x, sol.beta, &sol.lambda, inst.q);
    if t <= degen_tol {
        return None;
    }
    let n = inst.n();
    let p_hat = inst.p_hat.probs();
    let eps = inst.epsilon;
    let q_star = inst.q.dual().value();
    let tpow = t.powf(q_star - 1.0);
    let w: Vec<f64> = v.iter().map(|&vj| vj / tpow).collect();
    let ratios: Vec<f64> = (0..n)
        .map(|j| (p_hat[j] + eps * w[j]) / sol.x.get(j))
        .collect();
    let gamma = ratios.iter().sum::<f64>() / n as f64;
    let stationarity_x: Vec<f64> = ratios.iter().map(|&g| gamma - g).collect();
    let xi: Vec<f64> = (0..n).map(|j| p_hat[j] + eps * w[j]).collect();
    let stationarity_lambda: Vec<f64> = (0..n).map(|j| eps * w[j] + p_hat[j] - xi[j]).collect();
    let stationarity_beta: f64 = v.iter().sum();
    let complementarity: Vec<f64> = (0..n).map(|j| xi[j] * sol.lambda[j]).collect();
    let max_residual = stationarity_x
        .iter()
        .chain(stationarity_lambda.iter())
        .chain(complementarity.iter())
        .map(|r| r.abs())
        .fold(stationarity_beta.abs(), f64::max);
    Some(KktReport {
        stationarity_x,
        stationarity_lambda,
        stationarity_beta,
        complementarity,
        gamma,
        xi,
        max_residual,
    })
}

/// Residuals of the four stationarity/complementarity conditions at a
/// candidate solution, with `gamma` recovered by averaging and `xi` from
/// the multiplier stationarity relation. Requires a smooth exponent and a
/// dual-norm value above the degeneracy tolerance.
pub fn kkt_residuals(sol: &Solution, inst: &Instance) -> Result<KktReport, SolverError> {
    if !inst.q.is_smooth() {
        return Err(SolverError::NonSmoothExponent { q: inst.q });
    }
    let tol = Tolerances::default();
    let (_, t) = v_vector(&sol.x, sol.beta, &sol.lambda, inst.q);
    if t <= tol.degen_tol {
        return Err(SolverError::DegenerateNorm { t });
    }
    Ok(kkt_parts(sol, inst, tol.degen_tol).expect("nondegenerate by the check above"))
}

/// Difference between the reformulated objective at the solution and the
/// worst-case loss at the same estimator. Nonnegative up to oracle noise;
/// near zero exactly when the dual block certifies the estimator.
pub fn duality_gap(sol: &Solution, inst: &Instance) -> Result<f64, SolverError> {
    let upper = objective_full(&sol.x, &sol.lambda, sol.beta, inst);
    let wc = worst_case(&sol.x, inst)?;
    Ok(upper - wc.loss)
}

/// Run every certificate that applies to the solution.
pub fn certify_solution(
    sol: &Solution,
    inst: &Instance,
    tol: &Tolerances,
) -> Result<CertificationReport, SolverError> {
    let y: Vec<f64> = sol
        .x
        .iter()
        .zip(&sol.lambda)
        .map(|(&xj, &lj)| -floored_ln(xj) - sol.beta + lj)
        .collect();
    let recomputed_t = q_norm(&y, inst.q.dual());
    let assumption1 = recomputed_t > tol.degen_tol;
    let t_consistent = (recomputed_t - sol.t).abs() <= tol.cert_tol;
    let gap = duality_gap(sol, inst)?;
    let gap_tol = 100.0 * tol.cert_tol;
    let (kkt_max_residual, gamma_deviation, xi_deviation) = if inst.q.is_smooth() && assumption1
    {
        let report = kkt_residuals(sol, inst)?;
        (
            Some(report.max_residual),
            Some(report.gamma_deviation()),
            Some(report.xi_deviation(&sol.x)),
        )
    } else {
        (None, None, None)
    };
    let lambda_max = sol.lambda.iter().map(|l| l.abs()).fold(0.0, f64::max);
    let certified = t_consistent
        && gap >= -gap_tol
        && gap <= gap_tol
        && kkt_max_residual.is_none_or(|r| r <= tol.cert_tol);
    Ok(CertificationReport {
        assumption1,
        recomputed_t,
        t_consistent,
        kkt_max_residual,
        gamma_deviation,
        xi_deviation,
        lambda_max,
        duality_gap: gap,
        certified,
    })
}

/// Attach the applicable certificates to a solution for serialization.
pub fn certified(sol: Solution, inst: &Instance) -> Result<CertifiedSolution, SolverError> {
    let gap = duality_gap(&sol, inst)?;
    let kkt_max_residual = if inst.q.is_smooth() && !sol.degenerate {
        kkt_residuals(&sol, inst).ok().map(|r| r.max_residual)
    } else {
        None
    };
    Ok(CertifiedSolution {
        solution: sol,
        kkt_max_residual,
        duality_gap: gap,
    })
}
