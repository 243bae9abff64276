//! Shared helpers for the integration suites: seeded random instances.

use qdro::core::{Distribution, Instance, QExponent};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn random_p_hat(rng: &mut ChaCha8Rng, n: usize, allow_zero: bool) -> Distribution {
    loop {
        let mut raw: Vec<f64> = (0..n)
            .map(|_| -(rng.gen::<f64>().max(1e-12).ln()))
            .collect();
        if allow_zero && rng.gen_bool(0.3) {
            let j = rng.gen_range(0..n);
            raw[j] = 0.0;
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            continue;
        }
        let probs: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        if let Ok(d) = Distribution::new(probs) {
            return d;
        }
    }
}

pub fn random_interior(rng: &mut ChaCha8Rng, n: usize) -> Distribution {
    loop {
        let cand = random_p_hat(rng, n, false);
        if cand.is_strictly_positive(1e-3) {
            return cand;
        }
    }
}

/// The fixed batch of randomized instances shared by the strong-duality,
/// KKT, and axiom criteria: n in 2..=6, exponents cycling through
/// {1, 1.5, 2, 3, inf}, radii in (0, 0.5], with occasional zero frequencies.
#[allow(dead_code)]
pub fn strong_duality_instances() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let qs = [1.0, 1.5, 2.0, 3.0, f64::INFINITY];
    (0..50)
        .map(|trial| {
            let n = rng.gen_range(2..=6);
            let q = QExponent::new(qs[trial % qs.len()]).unwrap();
            let eps = rng.gen_range(0.01..=0.5);
            let p_hat = random_p_hat(&mut rng, n, true);
            Instance::new(p_hat, eps, q).unwrap()
        })
        .collect()
}
