//! The worst-case side of the min-max problem: for a fixed estimator the
//! adversary maximizes the cross-entropy loss over the ambiguity set of
//! distributions within q-norm distance epsilon of the empirical one.
//!
//! The module also houses the projection toolkit (simplex, q-balls,
//! alternating projections) and a lattice brute-force oracle used by the
//! acceptance tests.

use crate::core::{cross_entropy, Distribution, Instance, QExponent, Tolerances};
use crate::norms::{norm_gradient, q_norm};
use thiserror::Error;

/// Lattice enumeration is only tractable for a handful of categories.
pub const MAX_BRUTE_FORCE_CATEGORIES: usize = 4;

const DYKSTRA_MAX_ITERATIONS: usize = 2_000;
const ASCENT_MAX_ITERATIONS: usize = 10_000;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum AdversaryError {
    #[error("category {index} has zero estimated probability; the worst-case loss is unbounded")]
    UnboundedLoss { index: usize },
    #[error("alternating projections did not reach feasibility in {iterations} iterations (residual {residual:.3e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("brute force enumeration supports at most {max} categories, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("brute force grid step must lie in [1e-3, 1], got {grid_step}")]
    InvalidGridStep { grid_step: f64 },
}

/// Adversary output: the zero-sum perturbation, the worst-case distribution
/// `p = p_hat + e`, the attained loss, whether the norm constraint is active,
/// and the estimated multiplier of the norm constraint.
#[derive(Clone, Debug)]
pub struct WorstCase {
    pub e: Vec<f64>,
    pub p: Distribution,
    pub loss: f64,
    pub norm_active: bool,
    pub nu_estimate: f64,
}

#[inline]
fn sign(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else if z < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn linf_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Euclidean projection onto the probability simplex via sort and threshold.
pub fn project_simplex(v: &[f64]) -> Distribution {
    assert!(v.len() >= 2, "simplex projection needs at least two categories");
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    let probs: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    Distribution::with_tolerance(probs, 1e-6).expect("simplex projection output is feasible")
}

/// Euclidean projection onto `{ z : ||z - center||_q <= radius }`.
///
/// Closed form for q in {1, 2, inf}; for other finite q the dual multiplier
/// is found by safeguarded root-finding.
pub fn project_qball(v: &[f64], center: &[f64], radius: f64, q: QExponent) -> Vec<f64> {
    assert_eq!(v.len(), center.len(), "dimension mismatch");
    assert!(radius.is_finite() && radius >= 0.0, "invalid radius");
    let z = sub(v, center);
    if q_norm(&z, q) <= radius {
        return v.to_vec();
    }
    let w = match q {
        QExponent::Infinity => z.iter().map(|&x| x.clamp(-radius, radius)).collect(),
        QExponent::One => l1_ball_project(&z, radius),
        QExponent::Finite(2.0) => {
            let norm = q_norm(&z, q);
            z.iter().map(|&x| x * radius / norm).collect()
        }
        QExponent::Finite(p) => qball_project_rootfind(&z, radius, p),
    };
    add(&w, center)
}

/// Projection onto the 1-ball by soft thresholding at the sorted breakpoint.
fn l1_ball_project(z: &[f64], radius: f64) -> Vec<f64> {
    let mut mags: Vec<f64> = z.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cumulative += m;
        let candidate = (cumulative - radius) / (k + 1) as f64;
        if m > candidate {
            theta = candidate;
        }
    }
    let theta = theta.max(0.0);
    z.iter()
        .map(|&x| sign(x) * (x.abs() - theta).max(0.0))
        .collect()
}

fn qball_project_rootfind(z: &[f64], radius: f64, q: f64) -> Vec<f64> {
    let mags: Vec<f64> = z.iter().map(|x| x.abs()).collect();
    // componentwise solve of s + mu q s^(q-1) = a by bisection on [0, a]
    let shrink = |mu: f64| -> Vec<f64> {
        mags.iter()
            .map(|&a| {
                if a <= 0.0 {
                    return 0.0;
                }
                let (mut lo, mut hi) = (0.0_f64, a);
                for _ in 0..80 {
                    let s = 0.5 * (lo + hi);
                    if s + mu * q * s.powf(q - 1.0) > a {
                        hi = s;
                    } else {
                        lo = s;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect()
    };
    let norm_at = |mu: f64| q_norm(&shrink(mu), QExponent::Finite(q));
    let mut hi = 1.0;
    let mut expansions = 0;
    while norm_at(hi) > radius && expansions < 200 {
        hi *= 2.0;
        expansions += 1;
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if norm_at(mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut s = shrink(hi);
    let norm = q_norm(&s, QExponent::Finite(q));
    if norm > radius && norm > 0.0 {
        for v in s.iter_mut() {
            *v *= radius / norm;
        }
    }
    s.iter().zip(z).map(|(&sj, &zj)| sj * sign(zj)).collect()
}

/// Dykstra alternating projections onto (simplex) intersect (q-ball around
/// the empirical distribution). The intersection is never empty: the
/// empirical distribution belongs to both sets.
pub fn dykstra_feasible_point(
    inst: &Instance,
    target: &[f64],
) -> Result<Distribution, AdversaryError> {
    dykstra_project(inst, target, 1e-9, DYKSTRA_MAX_ITERATIONS)
}

pub(crate) fn dykstra_project(
    inst: &Instance,
    target: &[f64],
    tol: f64,
    max_iterations: usize,
) -> Result<Distribution, AdversaryError> {
    let p_hat = inst.p_hat.probs();
    let n = target.len();
    let mut x = target.to_vec();
    let mut p_corr = vec![0.0; n];
    let mut q_corr = vec![0.0; n];
    let mut gap = f64::INFINITY;
    for _ in 0..max_iterations {
        let shifted = add(&x, &p_corr);
        let y: Vec<f64> = project_simplex(&shifted).into();
        p_corr = sub(&shifted, &y);
        let shifted = add(&y, &q_corr);
        let xn = project_qball(&shifted, p_hat, inst.epsilon, inst.q);
        q_corr = sub(&shifted, &xn);
        gap = linf_diff(&xn, &y);
        x = xn;
        if gap <= tol {
            let snapped: Vec<f64> = project_simplex(&x).into();
            return Ok(Distribution::with_tolerance(snapped, 1e-6)
                .expect("projection output is feasible"));
        }
    }
    Err(AdversaryError::MaxIterations {
        iterations: max_iterations,
        residual: gap,
    })
}

/// Structured inner solution with the dual data needed for certificates.
struct InnerCandidate {
    e: Vec<f64>,
    nu: f64,
}

/// Exact solution for q = inf: maximize `c . e` over the box
/// `-min(p_hat_j, eps) <= e_j <= eps` intersected with the zero-sum plane.
/// A cost threshold separates fully raised from fully lowered coordinates.
fn linf_inner(c: &[f64], p_hat: &[f64], eps: f64) -> InnerCandidate {
    let n = c.len();
    let lo: Vec<f64> = p_hat.iter().map(|&p| -p.min(eps)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| c[b].total_cmp(&c[a]).then(a.cmp(&b)));
    let mut e = lo.clone();
    let mut balance: f64 = e.iter().sum();
    let mut beta = c[order[0]];
    for &j in &order {
        if balance >= 0.0 {
            break;
        }
        let delta = (eps - lo[j]).min(-balance);
        e[j] = lo[j] + delta;
        balance += delta;
        beta = c[j];
    }
    // nonnegativity multipliers live where the lower cap is the p >= 0 bound
    let lambda: Vec<f64> = (0..n)
        .map(|j| if p_hat[j] < eps { (beta - c[j]).max(0.0) } else { 0.0 })
        .collect();
    // marginal value of the radius
    let nu = (0..n).map(|j| (c[j] + lambda[j] - beta).abs()).sum();
    InnerCandidate { e, nu }
}

/// Exact solution for q = 1: mass moves from the cheapest donors to the
/// first maximal-cost coordinate, total variation capped at eps.
fn l1_inner(c: &[f64], p_hat: &[f64], eps: f64) -> InnerCandidate {
    let n = c.len();
    let mut receiver = 0;
    for j in 1..n {
        if c[j] > c[receiver] {
            receiver = j;
        }
    }
    let mut donors: Vec<usize> = (0..n).filter(|&j| j != receiver).collect();
    donors.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
    let budget = eps / 2.0;
    let mut e = vec![0.0; n];
    let mut moved = 0.0;
    let mut marginal_cost = c[receiver];
    for &d in &donors {
        if moved >= budget - 1e-18 || c[d] >= c[receiver] {
            break;
        }
        let take = p_hat[d].min(budget - moved);
        if take <= 0.0 {
            continue;
        }
        e[d] = -take;
        moved += take;
        marginal_cost = c[d];
    }
    e[receiver] = moved;
    let capacity_bound = moved < budget - 1e-15;
    let nu = if capacity_bound {
        0.0
    } else {
        (c[receiver] - marginal_cost) / 2.0
    };
    InnerCandidate { e, nu }
}

/// Active-set solve for finite q > 1. Coordinates pinned at `e_j = -p_hat_j`
/// are removed; on the free set the maximizer of a linear form over the
/// reduced ball follows the dual-norm gradient at a cost threshold beta,
/// found by bisection of the zero-sum condition.
fn finite_inner(c: &[f64], p_hat: &[f64], eps: f64, q: f64) -> Option<InnerCandidate> {
    let n = c.len();
    let q_star = q / (q - 1.0);
    // vertex shortcut: all mass on the first maximal cost, if it fits
    let mut jmax = 0;
    for j in 1..n {
        if c[j] > c[jmax] {
            jmax = j;
        }
    }
    let vertex: Vec<f64> = (0..n)
        .map(|j| if j == jmax { 1.0 - p_hat[j] } else { -p_hat[j] })
        .collect();
    if q_norm(&vertex, QExponent::Finite(q)) <= eps {
        return Some(InnerCandidate { e: vertex, nu: 0.0 });
    }
    let mut active = vec![false; n];
    for _ in 0..(2 * n + 4) {
        let free: Vec<usize> = (0..n).filter(|&j| !active[j]).collect();
        if free.len() < 2 {
            return None;
        }
        let m: f64 = (0..n).filter(|&j| active[j]).map(|j| p_hat[j]).sum();
        let rq = eps.powf(q)
            - (0..n)
                .filter(|&j| active[j])
                .map(|j| p_hat[j].powf(q))
                .sum::<f64>();
        if rq <= 0.0 {
            return None;
        }
        let r = rq.powf(1.0 / q);
        let reach = r * (free.len() as f64).powf(1.0 / q_star);
        if m >= reach * (1.0 - 1e-12) {
            return None;
        }
        let cf: Vec<f64> = free.iter().map(|&j| c[j]).collect();
        let target = m / r;
        let gradient_sum = |beta: f64| -> f64 {
            let y: Vec<f64> = cf.iter().map(|&cj| cj - beta).collect();
            norm_gradient(&y, q_star, 0.0).iter().sum::<f64>() - target
        };
        let mut lo = cf.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
        let mut hi = cf.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
        let mut expansions = 0;
        while gradient_sum(lo) <= 0.0 && expansions < 60 {
            lo -= hi - lo;
            expansions += 1;
        }
        while gradient_sum(hi) >= 0.0 && expansions < 120 {
            hi += hi - lo;
            expansions += 1;
        }
        for _ in 0..120 {
            let mid = 0.5 * (lo + hi);
            if gradient_sum(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let beta = 0.5 * (lo + hi);
        let y: Vec<f64> = cf.iter().map(|&cj| cj - beta).collect();
        let w = norm_gradient(&y, q_star, 0.0);
        let mut e = vec![0.0; n];
        for (&j, &wj) in free.iter().zip(&w) {
            e[j] = r * wj;
        }
        for j in 0..n {
            if active[j] {
                e[j] = -p_hat[j];
            }
        }
        let violators: Vec<usize> = free
            .iter()
            .cloned()
            .filter(|&j| p_hat[j] + e[j] < -1e-12)
            .collect();
        if !violators.is_empty() {
            for j in violators {
                active[j] = true;
            }
            continue;
        }
        let t_free = q_norm(&y, QExponent::Finite(q_star));
        let nu = t_free / (q * r.powf(q - 1.0));
        // release a pinned coordinate whose multiplier went negative
        let mut worst: Option<(usize, f64)> = None;
        for j in (0..n).filter(|&j| active[j]) {
            let lambda_j = beta - c[j] - nu * q * p_hat[j].powf(q - 1.0);
            if lambda_j < -1e-9 && worst.is_none_or(|(_, w)| lambda_j < w) {
                worst = Some((j, lambda_j));
            }
        }
        if let Some((j, _)) = worst {
            active[j] = false;
            continue;
        }
        return Some(InnerCandidate { e, nu });
    }
    None
}

/// Least-squares fit of the inner stationarity relation
/// `c_j - beta = nu q |e_j|^(q-1) sgn(e_j)` over coordinates carrying a
/// nonzero perturbation away from the nonnegativity bound.
fn estimate_nu_lsq(c: &[f64], e: &[f64], p: &[f64], q_value: f64) -> f64 {
    let mut k = 0.0;
    let (mut sa, mut saa, mut sc, mut sac) = (0.0, 0.0, 0.0, 0.0);
    for j in 0..c.len() {
        if e[j].abs() > 1e-12 && p[j] > 1e-12 {
            let a = q_value * e[j].abs().powf(q_value - 1.0) * sign(e[j]);
            k += 1.0;
            sa += a;
            saa += a * a;
            sc += c[j];
            sac += a * c[j];
        }
    }
    if k < 2.0 {
        return 0.0;
    }
    let det = k * saa - sa * sa;
    if det.abs() < 1e-14 * (1.0 + saa) {
        return 0.0;
    }
    ((k * sac - sa * sc) / det).max(0.0)
}

fn finish_worst_case(
    x: &Distribution,
    inst: &Instance,
    p_vec: Vec<f64>,
    nu_hint: Option<f64>,
    tol: &Tolerances,
) -> WorstCase {
    let p = Distribution::with_tolerance(p_vec, 1e-6).expect("worst case iterate is feasible");
    let e = sub(p.probs(), inst.p_hat.probs());
    let norm = q_norm(&e, inst.q);
    let norm_active = norm >= inst.epsilon - tol.cert_tol;
    let nu_estimate = match (nu_hint, inst.q) {
        (Some(nu), _) => nu,
        (None, QExponent::Finite(qv)) => {
            estimate_nu_lsq(&x.neg_log(), &e, p.probs(), qv)
        }
        (None, QExponent::One) => estimate_nu_lsq(&x.neg_log(), &e, p.probs(), 1.0),
        (None, QExponent::Infinity) => 0.0,
    };
    let loss = cross_entropy(&p, x);
    WorstCase {
        e,
        p,
        loss,
        norm_active,
        nu_estimate,
    }
}

/// Solve the inner worst-case problem for a fixed estimator `x`.
///
/// A structured candidate (threshold greedy for the boundary exponents,
/// active-set solve for finite q) seeds projected gradient ascent with
/// alternating-projection feasibility restoration; the better point wins.
pub fn worst_case(x: &Distribution, inst: &Instance) -> Result<WorstCase, AdversaryError> {
    let tol = Tolerances::default();
    assert_eq!(x.len(), inst.n(), "dimension mismatch");
    let p_hat = inst.p_hat.probs();

    if inst.epsilon == 0.0 {
        return Ok(finish_worst_case(x, inst, p_hat.to_vec(), Some(0.0), &tol));
    }
    if let Some(index) = x.probs().iter().position(|&v| v <= 0.0) {
        return Err(AdversaryError::UnboundedLoss { index });
    }
    let c = x.neg_log();
    let cmax = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cmin = c.iter().cloned().fold(f64::INFINITY, f64::min);
    if cmax - cmin <= 1e-12 {
        // constant objective over the ambiguity set; keep e = 0
        return Ok(finish_worst_case(x, inst, p_hat.to_vec(), Some(0.0), &tol));
    }

    let candidate = match inst.q {
        QExponent::One => Some(l1_inner(&c, p_hat, inst.epsilon)),
        QExponent::Infinity => Some(linf_inner(&c, p_hat, inst.epsilon)),
        QExponent::Finite(qv) => finite_inner(&c, p_hat, inst.epsilon, qv),
    };
    let candidate_p = candidate.as_ref().map(|cand| add(p_hat, &cand.e));

    let mut p = candidate_p.clone().unwrap_or_else(|| p_hat.to_vec());
    let step = 1.0 / (cmax - cmin);
    let mut loss = dot(&c, &p);
    let mut ascent_moved = false;
    for _ in 0..ASCENT_MAX_ITERATIONS {
        let target: Vec<f64> = p.iter().zip(&c).map(|(&pj, &cj)| pj + step * cj).collect();
        let Ok(proj) = dykstra_project(inst, &target, 1e-8, 150) else {
            break;
        };
        let proj: Vec<f64> = proj.into();
        let new_loss = dot(&c, &proj);
        if new_loss <= loss {
            break;
        }
        let gain = new_loss - loss;
        p = proj;
        loss = new_loss;
        ascent_moved = true;
        if gain < tol.opt_tol {
            break;
        }
    }

    if ascent_moved {
        // tighten feasibility of the ascent iterate before comparing
        if let Ok(tightened) = dykstra_project(inst, &p, 1e-10, DYKSTRA_MAX_ITERATIONS) {
            p = tightened.into();
        }
        loss = dot(&c, &p);
    }
    // prefer the structured candidate (it is exact) unless ascent improved
    // on it beyond projection noise
    if let (Some(cand), Some(cp)) = (&candidate, &candidate_p) {
        if dot(&c, cp) >= loss - 1e-9 {
            return Ok(finish_worst_case(x, inst, cp.clone(), Some(cand.nu), &tol));
        }
    }
    Ok(finish_worst_case(x, inst, p, None, &tol))
}

/// Enumerate the probability lattice with the given step, filter by the
/// ambiguity-set constraints, and maximize the loss. Independent oracle for
/// the projected-ascent path; exact up to one lattice cell.
pub fn brute_force_worst_case(
    x: &Distribution,
    inst: &Instance,
    grid_step: f64,
) -> Result<WorstCase, AdversaryError> {
    let n = inst.n();
    if n > MAX_BRUTE_FORCE_CATEGORIES {
        return Err(AdversaryError::TooLarge {
            n,
            max: MAX_BRUTE_FORCE_CATEGORIES,
        });
    }
    if !(1e-3 - 1e-12..=1.0).contains(&grid_step) {
        return Err(AdversaryError::InvalidGridStep { grid_step });
    }
    let tol = Tolerances::default();
    let p_hat = inst.p_hat.probs();
    if inst.epsilon == 0.0 {
        return Ok(finish_worst_case(x, inst, p_hat.to_vec(), Some(0.0), &tol));
    }
    if let Some(index) = x.probs().iter().position(|&v| v <= 0.0) {
        return Err(AdversaryError::UnboundedLoss { index });
    }
    let c = x.neg_log();
    let k = (1.0 / grid_step).round().max(1.0) as usize;
    let s = 1.0 / k as f64;
    // per-coordinate box bounds: any q-norm dominates the max-norm
    let lo: Vec<usize> = p_hat
        .iter()
        .map(|&p| (((p - inst.epsilon) / s).ceil().max(0.0)) as usize)
        .collect();
    let hi: Vec<usize> = p_hat
        .iter()
        .map(|&p| (((p + inst.epsilon).min(1.0) / s).floor()) as usize)
        .collect();

    let mut best_p = p_hat.to_vec();
    let mut best_loss = dot(&c, p_hat);
    let mut counts = vec![0usize; n];
    enumerate_lattice(
        0,
        k,
        &lo,
        &hi,
        &mut counts,
        &mut |counts: &[usize]| {
            let p: Vec<f64> = counts.iter().map(|&m| m as f64 * s).collect();
            let e = sub(&p, p_hat);
            if q_norm(&e, inst.q) <= inst.epsilon + tol.feas_tol {
                let loss = dot(&c, &p);
                // keep the zero perturbation (and earlier candidates) on ties
                if loss > best_loss + 1e-12 {
                    best_loss = loss;
                    best_p = p;
                }
            }
        },
    );
    Ok(finish_worst_case(x, inst, best_p, None, &tol))
}

fn enumerate_lattice(
    j: usize,
    remaining: usize,
    lo: &[usize],
    hi: &[usize],
    counts: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    let n = lo.len();
    if j == n - 1 {
        if remaining >= lo[j] && remaining <= hi[j] {
            counts[j] = remaining;
            visit(counts);
        }
        return;
    }
    let upper = hi[j].min(remaining);
    for m in lo[j]..=upper {
        counts[j] = m;
        enumerate_lattice(j + 1, remaining - m, lo, hi, counts, visit);
    }
}
