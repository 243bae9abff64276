//! Additive (pseudocount) smoothing, the classical baseline the robust
//! estimators are compared against.

use crate::core::Distribution;
use thiserror::Error;

#[derive(Clone, Copy, Debug, Error, PartialEq)]
#[error("the pseudocount must be a strictly positive finite number, got {c}")]
pub struct PseudocountError {
    pub c: f64,
}

/// Strictly positive pseudocount added to every category.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pseudocount(f64);

impl Pseudocount {
    pub fn new(c: f64) -> Result<Self, PseudocountError> {
        if !c.is_finite() || c <= 0.0 {
            return Err(PseudocountError { c });
        }
        Ok(Pseudocount(c))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `(p_j + c) / (1 + n c)`: strictly positive, sums to one, and affine in the
/// input componentwise.
pub fn laplace_smooth(p_hat: &Distribution, c: Pseudocount) -> Distribution {
    let n = p_hat.len() as f64;
    let c = c.value();
    let denom = 1.0 + n * c;
    let probs = p_hat.iter().map(|&p| (p + c) / denom).collect();
    Distribution::new(probs).expect("additive smoothing stays on the simplex")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> Pseudocount {
        Pseudocount::new(v).unwrap()
    }

    #[test]
    fn rejects_nonpositive_pseudocount() {
        assert!(Pseudocount::new(0.0).is_err());
        assert!(Pseudocount::new(-1.0).is_err());
        assert!(Pseudocount::new(f64::NAN).is_err());
    }

    #[test]
    fn two_category_formula() {
        let p = Distribution::new(vec![0.0, 1.0]).unwrap();
        let s = laplace_smooth(&p, c(1.0));
        assert!((s.get(0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.get(1) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_is_a_fixed_point() {
        for n in 2..6 {
            let u = Distribution::uniform(n);
            for &cv in &[0.01, 0.1, 1.0, 10.0] {
                let s = laplace_smooth(&u, c(cv));
                assert!(u.linf_distance(&s) < 1e-15);
            }
        }
    }

    #[test]
    fn five_category_example() {
        let p = Distribution::new(vec![0.00, 0.15, 0.15, 0.30, 0.40]).unwrap();
        let s = laplace_smooth(&p, c(0.1));
        let expected = [0.1 / 1.5, 0.25 / 1.5, 0.25 / 1.5, 0.40 / 1.5, 0.50 / 1.5];
        for j in 0..5 {
            assert!((s.get(j) - expected[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn limits_toward_empirical_and_uniform() {
        let p = Distribution::new(vec![0.0, 0.1, 0.9]).unwrap();
        let near_empirical = laplace_smooth(&p, c(1e-6));
        assert!(p.linf_distance(&near_empirical) < 1e-4);
        let near_uniform = laplace_smooth(&p, c(1e6));
        assert!(Distribution::uniform(3).linf_distance(&near_uniform) < 1e-4);
    }

    #[test]
    fn output_is_strictly_positive_with_floor() {
        let p = Distribution::new(vec![0.0, 0.0, 1.0]).unwrap();
        let cv = 0.05;
        let s = laplace_smooth(&p, c(cv));
        let floor = cv / (1.0 + 3.0 * cv);
        assert!(s.iter().all(|&x| x >= floor - 1e-15));
    }
}
