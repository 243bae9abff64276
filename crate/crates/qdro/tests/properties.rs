//! Property tests for the numeric core: simplex geometry, norm duality,
//! adversary feasibility, and solver invariants over randomized inputs.

mod common;

use common::{random_interior, random_p_hat};
use proptest::prelude::*;
use qdro::adversary::{
    dykstra_feasible_point, project_qball, project_simplex, worst_case,
};
use qdro::axioms::{axiom_report, check_assumption1};
use qdro::core::{cross_entropy, Distribution, Instance, QExponent};
use qdro::laplace::{laplace_smooth, Pseudocount};
use qdro::norms::{dual_norm, q_norm};
use qdro::solver::{objective_full, solve_full, solve_qdro, SolverSettings};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn simplex_strategy(n: usize) -> impl Strategy<Value = Distribution> {
    prop::collection::vec(1e-6..1.0f64, n).prop_map(|raw| {
        let sum: f64 = raw.iter().sum();
        Distribution::new(raw.iter().map(|v| v / sum).collect()).unwrap()
    })
}

fn vector_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, n)
}

const EXPONENTS: [f64; 5] = [1.0, 1.5, 2.0, 3.0, f64::INFINITY];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gibbs_inequality(p in simplex_strategy(4), x in simplex_strategy(4)) {
        let lhs = cross_entropy(&p, &x);
        let rhs = cross_entropy(&p, &p);
        prop_assert!(lhs >= rhs - 1e-12, "{lhs} < {rhs}");
    }

    #[test]
    fn validation_is_idempotent(raw in prop::collection::vec(0.0..1.0f64, 2..7)) {
        let sum: f64 = raw.iter().sum();
        prop_assume!(sum > 1e-6);
        let probs: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        let once = Distribution::new(probs).unwrap();
        let twice = Distribution::new(once.probs().to_vec()).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn exponent_duality_is_an_involution(q in 1.0..50.0f64) {
        let e = QExponent::new(q).unwrap();
        let back = e.dual().dual();
        prop_assert!((back.value() - e.value()).abs() <= 1e-10 * e.value());
    }

    #[test]
    fn holder_certificate_dominates_sampled_ball_points(
        y in vector_strategy(4),
        u in vector_strategy(4),
        qi in 0usize..5,
    ) {
        prop_assume!(y.iter().any(|v| v.abs() > 1e-9));
        let q = QExponent::new(EXPONENTS[qi]).unwrap();
        let d = dual_norm(&y, q);
        // scale the sample into the unit ball
        let norm = q_norm(&u, q);
        prop_assume!(norm > 1e-9);
        let scaled: Vec<f64> = u.iter().map(|v| v / norm).collect();
        let inner: f64 = y.iter().zip(&scaled).map(|(a, b)| a * b).sum();
        prop_assert!(d.value >= inner - 1e-9);
        // the certificate achieves the value and is feasible
        let attained: f64 = y.iter().zip(&d.certificate).map(|(a, b)| a * b).sum();
        prop_assert!((attained - d.value).abs() <= 1e-9 * (1.0 + d.value));
        prop_assert!(q_norm(&d.certificate, q) <= 1.0 + 1e-9);
    }

    #[test]
    fn dual_norm_agrees_with_double_dual(y in vector_strategy(5), qi in 0usize..5) {
        let q = QExponent::new(EXPONENTS[qi]).unwrap();
        let direct = dual_norm(&y, q).value;
        let via_double_dual = dual_norm(&y, q.dual().dual()).value;
        prop_assert!((direct - via_double_dual).abs() <= 1e-9 * (1.0 + direct));
    }

    #[test]
    fn simplex_projection_is_closest_feasible_point(
        v in vector_strategy(4),
        z in simplex_strategy(4),
    ) {
        let projected = project_simplex(&v);
        let d_proj: f64 = projected
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let d_other: f64 = z.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
        prop_assert!(d_proj <= d_other + 1e-9);
    }

    #[test]
    fn qball_projection_is_feasible_and_not_worse_than_samples(
        v in vector_strategy(3),
        u in vector_strategy(3),
        qi in 0usize..5,
        radius in 0.05..1.0f64,
    ) {
        let q = QExponent::new(EXPONENTS[qi]).unwrap();
        let center = [0.1, -0.2, 0.3];
        let w = project_qball(&v, &center, radius, q);
        let shifted: Vec<f64> = w.iter().zip(&center).map(|(a, b)| a - b).collect();
        prop_assert!(q_norm(&shifted, q) <= radius + 1e-7);
        // any sampled ball point is no closer to v
        let norm = q_norm(&u, q);
        prop_assume!(norm > 1e-9);
        let sample: Vec<f64> = u
            .iter()
            .zip(&center)
            .map(|(ui, ci)| ci + ui / norm * radius)
            .collect();
        let d_w: f64 = w.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
        let d_s: f64 = sample.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
        prop_assert!(d_w <= d_s + 1e-6);
    }
}

#[test]
fn dykstra_points_lie_in_both_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..40 {
        let n = rng.gen_range(2..=5);
        let q = QExponent::new(EXPONENTS[trial % 5]).unwrap();
        let eps = rng.gen_range(0.05..=0.6);
        let p_hat = random_p_hat(&mut rng, n, true);
        let inst = Instance::new(p_hat, eps, q).unwrap();
        let target: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..1.5)).collect();
        let point = dykstra_feasible_point(&inst, &target).expect("feasible point");
        let sum: f64 = point.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-8);
        assert!(point.min_component() >= -1e-8);
        let e: Vec<f64> = point
            .iter()
            .zip(inst.p_hat.iter())
            .map(|(a, b)| a - b)
            .collect();
        assert!(q_norm(&e, inst.q) <= inst.epsilon + 1e-8);
    }
}

#[test]
fn worst_case_output_is_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for trial in 0..40 {
        let n = rng.gen_range(2..=6);
        let q = QExponent::new(EXPONENTS[trial % 5]).unwrap();
        let eps = rng.gen_range(0.01..=0.5);
        let inst = Instance::new(random_p_hat(&mut rng, n, true), eps, q).unwrap();
        let x = random_interior(&mut rng, n);
        let wc = worst_case(&x, &inst).unwrap();
        let esum: f64 = wc.e.iter().sum();
        assert!(esum.abs() <= 1e-9, "perturbation must be zero-sum");
        assert!(wc.p.min_component() >= -1e-9);
        assert!(q_norm(&wc.e, inst.q) <= inst.epsilon + 1e-9);
        assert!((wc.loss - cross_entropy(&wc.p, &x)).abs() <= 1e-6);
    }
}

#[test]
fn worst_case_loss_respects_weak_duality() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..30 {
        let n = rng.gen_range(2..=5);
        let q = QExponent::new(EXPONENTS[trial % 5]).unwrap();
        let eps = rng.gen_range(0.02..=0.4);
        let inst = Instance::new(random_p_hat(&mut rng, n, true), eps, q).unwrap();
        let x = random_interior(&mut rng, n);
        let wc = worst_case(&x, &inst).unwrap();
        for _ in 0..5 {
            let lambda: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let beta = rng.gen_range(-1.0..3.0);
            let upper = objective_full(&x, &lambda, beta, &inst);
            assert!(upper >= wc.loss - 1e-9, "{upper} < {}", wc.loss);
        }
    }
}

#[test]
fn worst_case_loss_is_monotone_in_the_radius() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for trial in 0..12 {
        let n = rng.gen_range(2..=5);
        let q = QExponent::new(EXPONENTS[trial % 5]).unwrap();
        let p_hat = random_p_hat(&mut rng, n, true);
        let x = random_interior(&mut rng, n);
        let mut previous = f64::NEG_INFINITY;
        for k in 0..8 {
            let inst = Instance::new(p_hat.clone(), 0.05 * k as f64, q).unwrap();
            let wc = worst_case(&x, &inst).unwrap();
            assert!(wc.loss >= previous - 1e-9, "loss decreased in the radius");
            previous = wc.loss;
        }
    }
}

/// Inner stationarity: on coordinates carrying a nonzero perturbation away
/// from the nonnegativity bound, `c_j - beta = nu q |e_j|^(q-1) sgn(e_j)`
/// for some multiplier pair `(beta, nu)`, recovered here by least squares.
#[test]
fn worst_case_satisfies_inner_stationarity() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for trial in 0..40 {
        let n = rng.gen_range(2..=6);
        let qv = [1.0, 1.5, 2.0, 3.0][trial % 4];
        let eps = rng.gen_range(0.02..=0.4);
        let inst = Instance::new(
            random_p_hat(&mut rng, n, true),
            eps,
            QExponent::new(qv).unwrap(),
        )
        .unwrap();
        let x = random_interior(&mut rng, n);
        let wc = worst_case(&x, &inst).unwrap();
        let c = x.neg_log();
        let free: Vec<usize> = (0..n)
            .filter(|&j| wc.e[j].abs() > 1e-9 && wc.p.get(j) > 1e-9)
            .collect();
        if !wc.norm_active || free.len() < 2 {
            continue;
        }
        let a: Vec<f64> = free
            .iter()
            .map(|&j| qv * wc.e[j].abs().powf(qv - 1.0) * wc.e[j].signum())
            .collect();
        let k = free.len() as f64;
        let sa: f64 = a.iter().sum();
        let saa: f64 = a.iter().map(|v| v * v).sum();
        let sc: f64 = free.iter().map(|&j| c[j]).sum();
        let sac: f64 = free.iter().zip(&a).map(|(&j, &aj)| c[j] * aj).sum();
        let det = k * saa - sa * sa;
        if det.abs() <= 1e-12 {
            continue;
        }
        let nu = (k * sac - sa * sc) / det;
        let beta = (sc * saa - sac * sa) / det;
        for (idx, &j) in free.iter().enumerate() {
            let residual = (c[j] - beta - nu * a[idx]).abs();
            assert!(
                residual <= 1e-6,
                "stationarity residual {residual:.3e} at trial {trial} (q={qv})"
            );
        }
        assert!(nu >= -1e-9, "norm multiplier must be nonnegative");
    }
}

/// A positive dual-norm value at the optimum goes with an adversary that
/// spends the whole radius.
#[test]
fn assumption_one_matches_norm_activity() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let settings = SolverSettings::default();
    for trial in 0..20 {
        let n = rng.gen_range(2..=5);
        let q = QExponent::new(EXPONENTS[trial % 5]).unwrap();
        let eps = rng.gen_range(0.02..=0.5);
        let inst = Instance::new(random_p_hat(&mut rng, n, true), eps, q).unwrap();
        let sol = solve_qdro(&inst, &settings).unwrap();
        if check_assumption1(&sol, 1e-7) {
            let wc = worst_case(&sol.x, &inst).unwrap();
            assert!(
                wc.norm_active,
                "trial {trial}: norm constraint inactive with dual-norm value {}",
                sol.t
            );
        }
    }
}

#[test]
fn solving_commutes_with_permutations() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let settings = SolverSettings {
        symmetrize: false,
        ..SolverSettings::default()
    };
    for trial in 0..15 {
        let n = rng.gen_range(3..=5);
        let q = QExponent::new([1.0, 1.5, 2.0, 3.0, f64::INFINITY][trial % 5]).unwrap();
        let eps = rng.gen_range(0.05..=0.3);
        let p_hat = random_p_hat(&mut rng, n, true);
        let inst = Instance::new(p_hat.clone(), eps, q).unwrap();
        let sol = solve_qdro(&inst, &settings).unwrap();

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let permuted_p: Vec<f64> = perm.iter().map(|&j| p_hat.get(j)).collect();
        let permuted_inst = Instance::new(
            Distribution::new(permuted_p).unwrap(),
            eps,
            q,
        )
        .unwrap();
        let permuted_sol = solve_qdro(&permuted_inst, &settings).unwrap();
        for (slot, &j) in perm.iter().enumerate() {
            assert!(
                (permuted_sol.x.get(slot) - sol.x.get(j)).abs() <= 1e-6,
                "trial {trial}: permuted component {slot} differs"
            );
        }
    }
}

#[test]
fn order_is_preserved_on_smooth_exponents() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let settings = SolverSettings::default();
    for trial in 0..30 {
        let n = rng.gen_range(2..=6);
        let q = QExponent::new([1.5, 2.0, 3.0][trial % 3]).unwrap();
        let eps = rng.gen_range(0.02..=0.4);
        let inst = Instance::new(random_p_hat(&mut rng, n, true), eps, q).unwrap();
        let sol = solve_qdro(&inst, &settings).unwrap();
        if sol.degenerate {
            continue;
        }
        for a in 0..n {
            for b in 0..n {
                if inst.p_hat.get(a) < inst.p_hat.get(b) {
                    assert!(
                        sol.x.get(a) <= sol.x.get(b),
                        "inversion at trial {trial} pair ({a},{b})"
                    );
                    if inst.p_hat.get(b) - inst.p_hat.get(a) > 1e-5 {
                        assert!(
                            sol.x.get(b) - sol.x.get(a) > 1e-6,
                            "tie at trial {trial} pair ({a},{b})"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn free_multipliers_vanish_on_smooth_exponents() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let settings = SolverSettings::default();
    for trial in 0..12 {
        let n = rng.gen_range(2..=5);
        let q = QExponent::new([1.5, 2.0, 3.0][trial % 3]).unwrap();
        let eps = rng.gen_range(0.05..=0.4);
        let inst = Instance::new(random_p_hat(&mut rng, n, true), eps, q).unwrap();
        let sol = solve_full(&inst, &settings).unwrap();
        let lmax = sol.lambda.iter().cloned().fold(0.0, f64::max);
        assert!(lmax <= 1e-6, "trial {trial}: lambda max {lmax:.3e}");
    }
}

#[test]
fn estimator_shrinks_toward_uniform() {
    let p_hat = Distribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let uniform = Distribution::uniform(4);
    let settings = SolverSettings::default();
    let mut previous = f64::INFINITY;
    for k in 0..7 {
        let inst = Instance::new(p_hat.clone(), 0.05 * k as f64, QExponent::Finite(2.0))
            .unwrap();
        let sol = solve_qdro(&inst, &settings).unwrap();
        let distance = sol.x.l2_distance(&uniform);
        assert!(distance <= previous + 1e-12);
        previous = distance;
    }
}

#[test]
fn smoothing_axioms_hold_for_solver_and_baseline() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let settings = SolverSettings::default();
    for trial in 0..20 {
        let n = rng.gen_range(2..=6);
        let p_hat = random_p_hat(&mut rng, n, true);

        for &c in &[0.01, 0.1, 1.0, 10.0] {
            let smoothed = laplace_smooth(&p_hat, Pseudocount::new(c).unwrap());
            let report = axiom_report(&p_hat, &smoothed, 1e-6);
            assert!(report.positivity.pass && report.symmetry.pass);
            assert!(report.order_preservation.pass);
        }

        let q = QExponent::new([1.5, 2.0, 3.0][trial % 3]).unwrap();
        let inst = Instance::new(p_hat.clone(), rng.gen_range(0.05..=0.3), q).unwrap();
        let sol = solve_qdro(&inst, &settings).unwrap();
        let report = axiom_report(&p_hat, &sol.x, 1e-6);
        assert!(report.positivity.pass, "trial {trial}");
        assert!(report.symmetry.pass, "trial {trial}");
    }
}
