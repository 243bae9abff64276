//! Core domain types shared across the crate: simplex distributions, norm
//! exponents, problem instances, solver solutions, and the numeric tolerance
//! policy.

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Probabilities are floored at this value before taking logarithms so that
/// iterates grazing zero never produce infinities inside the solver.
pub const LOG_FLOOR: f64 = 1e-300;

/// Natural logarithm with the [`LOG_FLOOR`] clamp applied.
#[inline]
pub fn floored_ln(x: f64) -> f64 {
    x.max(LOG_FLOOR).ln()
}

/// Shared numeric policy.
///
/// `feas_tol` governs feasibility checks, `opt_tol` iteration convergence,
/// `cert_tol` certification thresholds, `degen_tol` the degeneracy cut-off on
/// the dual-norm value, and `axiom_tol` the axiom checker.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Tolerances {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub cert_tol: f64,
    pub degen_tol: f64,
    pub axiom_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feas_tol: 1e-9,
            opt_tol: 1e-8,
            cert_tol: 1e-6,
            degen_tol: 1e-7,
            axiom_tol: 1e-6,
        }
    }
}

impl Tolerances {
    /// All tolerances strictly positive, with `degen_tol > opt_tol` so a
    /// degeneracy decision is never made below convergence noise.
    pub fn is_valid(&self) -> bool {
        let all_positive = [
            self.feas_tol,
            self.opt_tol,
            self.cert_tol,
            self.degen_tol,
            self.axiom_tol,
        ]
        .iter()
        .all(|&t| t.is_finite() && t > 0.0);
        all_positive && self.degen_tol > self.opt_tol
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("a distribution needs at least two categories, got {n}")]
    TooFewCategories { n: usize },
    #[error("component {index} is {value}, below the feasibility tolerance")]
    NegativeMass { index: usize, value: f64 },
    #[error("components sum to {sum}, not 1")]
    BadSum { sum: f64 },
    #[error("component {index} is not finite")]
    NotFinite { index: usize },
}

/// A point of the probability simplex.
///
/// Finalized values are exactly clamped: every component is nonnegative and
/// the components sum to one up to rounding. Negative dust within the
/// feasibility tolerance is clamped to zero at construction and the vector
/// renormalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, DistributionError> {
        Self::with_tolerance(probs, Tolerances::default().feas_tol)
    }

    pub fn with_tolerance(mut probs: Vec<f64>, feas_tol: f64) -> Result<Self, DistributionError> {
        if probs.len() < 2 {
            return Err(DistributionError::TooFewCategories { n: probs.len() });
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() {
                return Err(DistributionError::NotFinite { index });
            }
            if value < -feas_tol {
                return Err(DistributionError::NegativeMass { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > feas_tol {
            return Err(DistributionError::BadSum { sum });
        }
        let mut clamped = false;
        for v in probs.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
                clamped = true;
            }
        }
        let clamped_sum: f64 = probs.iter().sum();
        // renormalize only when the vector is not already exact, so that
        // validation is idempotent and round-trips preserve bits
        let rounding = probs.len() as f64 * 4.0 * f64::EPSILON;
        if clamped || (clamped_sum - 1.0).abs() > rounding {
            for v in probs.iter_mut() {
                *v /= clamped_sum;
            }
        }
        Ok(Distribution { probs })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n >= 2, "uniform distribution needs at least two categories");
        Distribution {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, j: usize) -> f64 {
        self.probs[j]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.probs.iter()
    }

    /// Componentwise `-ln x_j` on floored values.
    pub fn neg_log(&self) -> Vec<f64> {
        self.probs.iter().map(|&x| -floored_ln(x)).collect()
    }

    pub fn min_component(&self) -> f64 {
        self.probs.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn is_strictly_positive(&self, floor: f64) -> bool {
        self.probs.iter().all(|&x| x > floor)
    }

    pub fn l2_distance(&self, other: &Distribution) -> f64 {
        assert_eq!(self.len(), other.len(), "dimension mismatch");
        self.probs
            .iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn linf_distance(&self, other: &Distribution) -> f64 {
        assert_eq!(self.len(), other.len(), "dimension mismatch");
        self.probs
            .iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// CSV cell list with six-decimal formatting.
    pub fn to_csv_row(&self) -> String {
        self.probs
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = DistributionError;

    fn try_from(probs: Vec<f64>) -> Result<Self, Self::Error> {
        Distribution::new(probs)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Vec<f64> {
        d.probs
    }
}

impl std::ops::Index<usize> for Distribution {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.probs[index]
    }
}

/// Cross-entropy `sum_j p_j (-ln x_j)` with the conventions
/// `0 * (-ln 0) = 0` and an infinite value whenever `x` places zero mass on
/// the support of `p`.
pub fn cross_entropy(p: &Distribution, x: &Distribution) -> f64 {
    assert_eq!(p.len(), x.len(), "dimension mismatch");
    let mut acc = 0.0;
    for (&pj, &xj) in p.iter().zip(x.iter()) {
        if pj > 0.0 {
            if xj <= 0.0 {
                return f64::INFINITY;
            }
            acc += pj * -xj.ln();
        }
    }
    acc
}

/// Shannon entropy in nats.
pub fn entropy(p: &Distribution) -> f64 {
    cross_entropy(p, p)
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ExponentError {
    #[error("the norm exponent must satisfy q >= 1, got {q}")]
    BelowOne { q: f64 },
    #[error("cannot parse {input:?} as a norm exponent")]
    Unparseable { input: String },
}

/// Norm exponent in `[1, inf]`, with infinity as a distinguished tag so that
/// branch logic never exponentiates by huge floats.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QExponent {
    One,
    Finite(f64),
    Infinity,
}

impl QExponent {
    pub fn new(q: f64) -> Result<Self, ExponentError> {
        if q.is_nan() || q < 1.0 {
            return Err(ExponentError::BelowOne { q });
        }
        Ok(if q == 1.0 {
            QExponent::One
        } else if q.is_infinite() {
            QExponent::Infinity
        } else {
            QExponent::Finite(q)
        })
    }

    /// Dual exponent: `1/q + 1/q* = 1` with the conventions `1 <-> inf`.
    pub fn dual(self) -> Self {
        match self {
            QExponent::One => QExponent::Infinity,
            QExponent::Infinity => QExponent::One,
            QExponent::Finite(q) => {
                let qs = q / (q - 1.0);
                if qs.is_finite() && qs > 1.0 {
                    QExponent::Finite(qs)
                } else if qs.is_finite() {
                    // q so large that the dual rounds to 1; keep it finite.
                    QExponent::Finite(1.0 + f64::EPSILON)
                } else {
                    QExponent::Infinity
                }
            }
        }
    }

    pub fn value(self) -> f64 {
        match self {
            QExponent::One => 1.0,
            QExponent::Finite(q) => q,
            QExponent::Infinity => f64::INFINITY,
        }
    }

    /// True when q lies strictly between 1 and infinity, where the dual norm
    /// is differentiable away from the origin.
    pub fn is_smooth(self) -> bool {
        matches!(self, QExponent::Finite(_))
    }
}

impl fmt::Display for QExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QExponent::One => write!(f, "1"),
            QExponent::Finite(q) => write!(f, "{q}"),
            QExponent::Infinity => write!(f, "inf"),
        }
    }
}

impl FromStr for QExponent {
    type Err = ExponentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        if trimmed.eq_ignore_ascii_case("inf") || trimmed.eq_ignore_ascii_case("infinity") {
            return Ok(QExponent::Infinity);
        }
        let q: f64 = trimmed.parse().map_err(|_| ExponentError::Unparseable {
            input: s.to_string(),
        })?;
        QExponent::new(q)
    }
}

impl Serialize for QExponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            QExponent::Infinity => serializer.serialize_str("inf"),
            other => serializer.serialize_f64(other.value()),
        }
    }
}

impl<'de> Deserialize<'de> for QExponent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct QVisitor;

        impl Visitor<'_> for QVisitor {
            type Value = QExponent;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number q >= 1 or the string \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<QExponent, E> {
                QExponent::new(v).map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<QExponent, E> {
                QExponent::new(v as f64).map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<QExponent, E> {
                QExponent::new(v as f64).map_err(E::custom)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<QExponent, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(QVisitor)
    }
}

#[derive(Clone, Copy, Debug, Error, PartialEq)]
#[error("the robustness radius must be a nonnegative finite number, got {epsilon}")]
pub struct RadiusError {
    pub epsilon: f64,
}

/// One robust smoothing problem: empirical distribution, robustness radius,
/// and norm exponent.
///
/// `epsilon = 0` is accepted solely for the empirical passthrough mode of the
/// solver; every genuinely robust instance has a strictly positive radius.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct Instance {
    pub p_hat: Distribution,
    pub epsilon: f64,
    pub q: QExponent,
}

#[derive(Deserialize)]
struct RawInstance {
    p_hat: Distribution,
    epsilon: f64,
    q: QExponent,
}

impl TryFrom<RawInstance> for Instance {
    type Error = RadiusError;

    fn try_from(raw: RawInstance) -> Result<Self, Self::Error> {
        Instance::new(raw.p_hat, raw.epsilon, raw.q)
    }
}

impl Instance {
    pub fn new(p_hat: Distribution, epsilon: f64, q: QExponent) -> Result<Self, RadiusError> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(RadiusError { epsilon });
        }
        Ok(Instance { p_hat, epsilon, q })
    }

    pub fn n(&self) -> usize {
        self.p_hat.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIterations,
    Degenerate,
}

impl fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverStatus::Converged => write!(f, "converged"),
            SolverStatus::MaxIterations => write!(f, "max_iterations"),
            SolverStatus::Degenerate => write!(f, "degenerate"),
        }
    }
}

/// Solver output: the estimator, the multipliers of the reformulated
/// problem, the attained objective, the dual-norm value `t`, and run
/// bookkeeping. `degenerate` is set exactly when `t` falls below the
/// degeneracy tolerance, in which case `x` is uniform and `beta = ln n`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Solution {
    pub x: Distribution,
    pub beta: f64,
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub t: f64,
    pub degenerate: bool,
    pub iterations: usize,
    pub status: SolverStatus,
}
