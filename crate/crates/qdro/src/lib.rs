//! Distributionally robust probability smoothing over q-norm ambiguity sets.
//!
//! Given an empirical distribution, a robustness radius and a norm exponent,
//! the solver computes the estimator that minimizes the worst-case
//! cross-entropy loss against an adversary constrained to the ambiguity set.
//! Every optimum is certified independently, through KKT residuals on the
//! smooth exponent range and through duality gaps against the worst-case
//! oracle on the boundary exponents. An axiom checker evaluates positivity,
//! symmetry, order preservation and ratio preservation of any estimator, and
//! an experiments layer reproduces the built-in reference instances with
//! deterministic JSON/CSV/SVG artifacts.

// index-parallel loops over category vectors read better than iterator
// chains in the numeric kernels
#![allow(clippy::needless_range_loop)]

pub mod adversary;
pub mod axioms;
pub mod cli;
pub mod core;
pub mod experiments;
pub mod laplace;
pub mod norms;
pub mod solver;

pub use self::core::{
    cross_entropy, entropy, Distribution, DistributionError, Instance, QExponent, Solution,
    SolverStatus, Tolerances,
};
pub use self::solver::{solve_qdro, SolverSettings};
