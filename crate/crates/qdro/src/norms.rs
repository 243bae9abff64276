//! q-norms, their duals with Hölder certificates, and the signed-power
//! machinery that appears in the optimality system.

use crate::core::{floored_ln, Distribution, QExponent};

/// Values below this are treated as exact zeros before fractional powers, so
/// `|z|^(q*-1)` never evaluates `0^negative` intermediates.
const POWER_FLOOR: f64 = 1e-300;

/// Dual-norm evaluation together with a certificate `u` with `||u||_q <= 1`
/// and `y . u` equal to the reported value.
#[derive(Clone, Debug)]
pub struct DualNormValue {
    pub value: f64,
    pub certificate: Vec<f64>,
}

/// `||y||_q`; the maximum absolute component for `q = inf`.
pub fn q_norm(y: &[f64], q: QExponent) -> f64 {
    assert!(!y.is_empty(), "q_norm of an empty vector");
    match q {
        QExponent::One => y.iter().map(|v| v.abs()).sum(),
        QExponent::Infinity => y.iter().fold(0.0, |acc, v| acc.max(v.abs())),
        QExponent::Finite(p) => {
            let m = y.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
            if m == 0.0 {
                return 0.0;
            }
            let scaled: f64 = y.iter().map(|v| (v.abs() / m).powf(p)).sum();
            m * scaled.powf(1.0 / p)
        }
    }
}

/// Dual norm of `y` with respect to the q-norm, together with the arg-max
/// certificate of `y . u` over the unit q-ball. Ties in the `q = 1` branch
/// resolve to the lowest index.
pub fn dual_norm(y: &[f64], q: QExponent) -> DualNormValue {
    assert!(!y.is_empty(), "dual_norm of an empty vector");
    match q {
        // dual of the 1-norm is the max-norm; the certificate is a signed
        // basis vector on the first maximal coordinate
        QExponent::One => {
            let mut best = 0usize;
            for (j, v) in y.iter().enumerate() {
                if v.abs() > y[best].abs() {
                    best = j;
                }
            }
            let mut certificate = vec![0.0; y.len()];
            certificate[best] = sign(y[best]);
            DualNormValue {
                value: y[best].abs(),
                certificate,
            }
        }
        // dual of the max-norm is the 1-norm; the certificate is the sign
        // pattern
        QExponent::Infinity => DualNormValue {
            value: y.iter().map(|v| v.abs()).sum(),
            certificate: y.iter().map(|&v| sign(v)).collect(),
        },
        QExponent::Finite(p) => {
            let qs = p / (p - 1.0);
            let t = q_norm(y, QExponent::Finite(qs));
            if t == 0.0 {
                return DualNormValue {
                    value: 0.0,
                    certificate: vec![0.0; y.len()],
                };
            }
            let certificate = y
                .iter()
                .map(|&v| sign(v) * (v.abs() / t).powf(qs - 1.0))
                .collect();
            DualNormValue {
                value: t,
                certificate,
            }
        }
    }
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

/// `|z|^(q*-1) sgn(z)` for `q*` strictly between 1 and infinity. This is the
/// componentwise ingredient of the stationarity system; it reduces to the
/// identity at `q* = 2`.
pub fn signed_power(z: f64, q_star: f64) -> f64 {
    debug_assert!(q_star > 1.0 && q_star.is_finite());
    if q_star == 2.0 {
        return z;
    }
    if z.abs() < POWER_FLOOR {
        return 0.0;
    }
    z.abs().powf(q_star - 1.0) * sign(z)
}

/// The pair `(v, t)` of the optimality system: `v_j = |y_j|^(q*-1) sgn(y_j)`
/// and `t = ||y||_q*` for `y = -ln x - beta 1 + lambda`. Requires a smooth
/// exponent (`q` strictly between 1 and infinity) and strictly positive `x`
/// up to the log floor.
pub fn v_vector(x: &Distribution, beta: f64, lambda: &[f64], q: QExponent) -> (Vec<f64>, f64) {
    assert_eq!(x.len(), lambda.len(), "dimension mismatch");
    let QExponent::Finite(_) = q else {
        panic!("v_vector requires q strictly between 1 and infinity, got q = {q}");
    };
    let q_star = q.dual().value();
    let y: Vec<f64> = x
        .iter()
        .zip(lambda.iter())
        .map(|(&xj, &lj)| -floored_ln(xj) - beta + lj)
        .collect();
    let v = y.iter().map(|&yj| signed_power(yj, q_star)).collect();
    let t = q_norm(&y, QExponent::Finite(q_star));
    (v, t)
}

/// Gradient of `y -> ||y||_q*` at `y`, i.e. `v(y) / t^(q*-1)`, with the zero
/// subgradient returned when `t` falls at or below `degen_tol`.
pub fn norm_gradient(y: &[f64], q_star: f64, degen_tol: f64) -> Vec<f64> {
    debug_assert!(q_star > 1.0 && q_star.is_finite());
    let t = q_norm(y, QExponent::Finite(q_star));
    if t <= degen_tol {
        return vec![0.0; y.len()];
    }
    y.iter()
        .map(|&v| sign(v) * (v.abs() / t).powf(q_star - 1.0))
        .collect()
}
