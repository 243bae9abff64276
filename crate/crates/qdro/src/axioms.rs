//! Numeric verification of the smoothing axioms — positivity, symmetry,
//! order preservation, ratio preservation — for any estimator output, plus
//! the non-degeneracy check on solver solutions.

use crate::core::{Distribution, Solution};
use serde::Serialize;
use std::fmt;

#[derive(Clone, Debug, Serialize)]
pub struct PositivityCheck {
    pub pass: bool,
    pub min_component: f64,
    pub min_index: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryCheck {
    pub pass: bool,
    /// Pair of equal-frequency categories with the widest output gap.
    pub worst_pair: Option<(usize, usize)>,
    pub max_gap: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderViolationKind {
    /// Outputs agree within tolerance although the inputs are strictly
    /// ordered.
    Tie,
    /// Outputs are ordered against the inputs beyond tolerance.
    Inversion,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OrderViolation {
    pub i: usize,
    pub j: usize,
    pub kind: OrderViolationKind,
    /// `x_j - x_i`, expected positive.
    pub x_gap: f64,
    /// `p_hat_j - p_hat_i`, always positive for a recorded pair.
    pub p_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderCheck {
    pub pass: bool,
    pub comparable_pairs: usize,
    pub violations: Vec<OrderViolation>,
}

impl OrderCheck {
    pub fn ties(&self) -> usize {
        self.violations
            .iter()
            .filter(|v| v.kind == OrderViolationKind::Tie)
            .count()
    }

    pub fn inversions(&self) -> usize {
        self.violations
            .iter()
            .filter(|v| v.kind == OrderViolationKind::Inversion)
            .count()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioCheck {
    pub pass: bool,
    /// `max - min` over all pairwise difference quotients.
    pub spread: f64,
    pub min_quotient: f64,
    pub max_quotient: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct AxiomReport {
    pub positivity: PositivityCheck,
    pub symmetry: SymmetryCheck,
    pub order_preservation: OrderCheck,
    pub ratio_preservation: RatioCheck,
    pub tolerance_used: f64,
}

/// Every component strictly above the tolerance.
pub fn check_positivity(x: &Distribution, tol: f64) -> PositivityCheck {
    let mut min_index = 0;
    for j in 1..x.len() {
        if x.get(j) < x.get(min_index) {
            min_index = j;
        }
    }
    let min_component = x.get(min_index);
    PositivityCheck {
        pass: min_component > tol,
        min_component,
        min_index,
    }
}

/// Exactly equal empirical probabilities must map to outputs equal within
/// tolerance. The hypothesis is exact (bitwise) equality: near-equal
/// empirical values do not qualify.
pub fn check_symmetry(p_hat: &Distribution, x: &Distribution, tol: f64) -> SymmetryCheck {
    assert_eq!(p_hat.len(), x.len(), "dimension mismatch");
    let mut worst_pair = None;
    let mut max_gap = 0.0;
    for i in 0..p_hat.len() {
        for j in (i + 1)..p_hat.len() {
            if p_hat.get(i).to_bits() == p_hat.get(j).to_bits() {
                let gap = (x.get(i) - x.get(j)).abs();
                if worst_pair.is_none() || gap > max_gap {
                    worst_pair = Some((i, j));
                    max_gap = gap;
                }
            }
        }
    }
    SymmetryCheck {
        pass: max_gap <= tol,
        worst_pair,
        max_gap,
    }
}

/// Strictly ordered empirical probabilities must map to strictly ordered
/// outputs. Ties within tolerance are recorded separately from inversions;
/// either fails the check.
pub fn check_order_preservation(p_hat: &Distribution, x: &Distribution, tol: f64) -> OrderCheck {
    assert_eq!(p_hat.len(), x.len(), "dimension mismatch");
    let mut comparable_pairs = 0;
    let mut violations = Vec::new();
    for a in 0..p_hat.len() {
        for b in 0..p_hat.len() {
            if p_hat.get(a) < p_hat.get(b) {
                comparable_pairs += 1;
                let x_gap = x.get(b) - x.get(a);
                let p_gap = p_hat.get(b) - p_hat.get(a);
                if x_gap < -tol {
                    violations.push(OrderViolation {
                        i: a,
                        j: b,
                        kind: OrderViolationKind::Inversion,
                        x_gap,
                        p_gap,
                    });
                } else if x_gap.abs() <= tol {
                    violations.push(OrderViolation {
                        i: a,
                        j: b,
                        kind: OrderViolationKind::Tie,
                        x_gap,
                        p_gap,
                    });
                }
            }
        }
    }
    OrderCheck {
        pass: violations.is_empty(),
        comparable_pairs,
        violations,
    }
}

/// All pairwise difference quotients `(x_i - x_j) / (p_i - p_j)` over pairs
/// with distinct empirical probabilities must agree within tolerance.
pub fn check_ratio_preservation(p_hat: &Distribution, x: &Distribution, tol: f64) -> RatioCheck {
    assert_eq!(p_hat.len(), x.len(), "dimension mismatch");
    let mut min_quotient = f64::INFINITY;
    let mut max_quotient = f64::NEG_INFINITY;
    let mut pairs = 0;
    for i in 0..p_hat.len() {
        for j in (i + 1)..p_hat.len() {
            if p_hat.get(i) != p_hat.get(j) {
                let quotient = (x.get(i) - x.get(j)) / (p_hat.get(i) - p_hat.get(j));
                min_quotient = min_quotient.min(quotient);
                max_quotient = max_quotient.max(quotient);
                pairs += 1;
            }
        }
    }
    let spread = if pairs == 0 {
        min_quotient = 0.0;
        max_quotient = 0.0;
        0.0
    } else {
        max_quotient - min_quotient
    };
    RatioCheck {
        pass: spread <= tol,
        spread,
        min_quotient,
        max_quotient,
        pairs,
    }
}

/// Non-degeneracy of a solution: the dual-norm value is strictly above the
/// tolerance, equivalently the adversary's norm constraint is active at the
/// optimum.
pub fn check_assumption1(sol: &Solution, tol: f64) -> bool {
    sol.t > tol
}

/// Run all four axiom checks with a common tolerance.
pub fn axiom_report(p_hat: &Distribution, x: &Distribution, tol: f64) -> AxiomReport {
    AxiomReport {
        positivity: check_positivity(x, tol),
        symmetry: check_symmetry(p_hat, x, tol),
        order_preservation: check_order_preservation(p_hat, x, tol),
        ratio_preservation: check_ratio_preservation(p_hat, x, tol),
        tolerance_used: tol,
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

impl fmt::Display for AxiomReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "axiom               result  detail (tolerance {:.1e})",
            self.tolerance_used
        )?;
        writeln!(
            f,
            "positivity          {:<6}  min component {:.6} at category {}",
            verdict(self.positivity.pass),
            self.positivity.min_component,
            self.positivity.min_index
        )?;
        match self.symmetry.worst_pair {
            Some((i, j)) => writeln!(
                f,
                "symmetry            {:<6}  worst pair ({i}, {j}) gap {:.3e}",
                verdict(self.symmetry.pass),
                self.symmetry.max_gap
            )?,
            None => writeln!(
                f,
                "symmetry            {:<6}  no equal-frequency pairs",
                verdict(self.symmetry.pass)
            )?,
        }
        writeln!(
            f,
            "order preservation  {:<6}  {} comparable pairs, {} ties, {} inversions",
            verdict(self.order_preservation.pass),
            self.order_preservation.comparable_pairs,
            self.order_preservation.ties(),
            self.order_preservation.inversions()
        )?;
        writeln!(
            f,
            "ratio preservation  {:<6}  quotient spread {:.3e} over {} pairs",
            verdict(self.ratio_preservation.pass),
            self.ratio_preservation.spread,
            self.ratio_preservation.pairs
        )
    }
}
