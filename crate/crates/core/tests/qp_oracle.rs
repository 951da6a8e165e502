use metricforge::linalg::SymMatrix;
use metricforge::qp::{solve_box_eq, solve_nonneg, BoxEqQp, NonnegQp};
use metricforge_oracles::{box_eq_oracle, nonneg_oracle, random_psd, random_signs};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64) -> (usize, Vec<f64>, Vec<f64>, Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = rng.random_range(2..=8);
    let rank = rng.random_range(1..=p);
    let k = random_psd(&mut rng, p, rank);
    let linear: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..2.0)).collect();
    let signs = random_signs(&mut rng, p);
    let cap = rng.random_range(0.1..5.0);
    (p, k, linear, signs, cap)
}

#[test]
fn box_eq_matches_projected_gradient_oracle() {
    for seed in 0..100 {
        let (p, k, linear, signs, cap) = instance(seed);
        let kernel = SymMatrix::from_row_major(p, k.clone()).unwrap();
        let sol = solve_box_eq(BoxEqQp::new(&kernel, linear.clone(), signs.clone(), cap)).unwrap();
        let oracle = box_eq_oracle(&k, &linear, &signs, cap, 1e-10);
        let scale = oracle.objective.abs().max(1.0);
        assert!(
            (sol.objective - oracle.objective).abs() <= 1e-6 * scale,
            "seed {seed}: smo {} vs oracle {}",
            sol.objective,
            oracle.objective
        );
    }
}

#[test]
fn nonneg_matches_projected_gradient_oracle() {
    for seed in 0..100 {
        let (p, k, linear, _, _) = instance(1000 + seed);
        // full rank keeps the problem bounded for any linear term
        let mut k = k;
        for i in 0..p {
            k[i * p + i] += 0.05;
        }
        let kernel = SymMatrix::from_row_major(p, k.clone()).unwrap();
        let sol = solve_nonneg(NonnegQp::new(&kernel, linear.clone())).unwrap();
        let oracle = nonneg_oracle(&k, &linear, 1e-10);
        let scale = oracle.objective.abs().max(1.0);
        assert!(
            (sol.objective - oracle.objective).abs() <= 1e-6 * scale,
            "seed {seed}: cd {} vs oracle {}",
            sol.objective,
            oracle.objective
        );
        assert!(sol.mus.iter().all(|&m| m >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smo_solutions_are_feasible(seed in any::<u64>()) {
        let (p, k, linear, signs, cap) = instance(seed);
        let kernel = SymMatrix::from_row_major(p, k).unwrap();
        let sol = solve_box_eq(BoxEqQp::new(&kernel, linear, signs.clone(), cap)).unwrap();
        prop_assert!(sol.alphas.iter().all(|&a| (0.0..=cap).contains(&a)));
        let eq: f64 = sol.alphas.iter().zip(&signs).map(|(a, s)| a * s).sum();
        prop_assert!(eq.abs() <= 1e-9 * (cap * p as f64).max(1.0));
        prop_assert!(sol.kkt_residual <= 1e-6);
    }

    #[test]
    fn warm_start_from_the_optimum_reproduces_it(seed in any::<u64>()) {
        let (p, k, linear, signs, cap) = instance(seed);
        let kernel = SymMatrix::from_row_major(p, k).unwrap();
        let first = solve_box_eq(BoxEqQp::new(&kernel, linear.clone(), signs.clone(), cap)).unwrap();
        let again = solve_box_eq(
            BoxEqQp::new(&kernel, linear, signs, cap).with_warm(first.alphas.clone()),
        )
        .unwrap();
        prop_assert!((again.objective - first.objective).abs() <= 1e-9 * first.objective.abs().max(1.0));
    }
}

#[test]
fn warm_start_after_a_small_change_needs_fewer_selections() {
    let mut wins = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let p = 40;
        let k = random_psd(&mut rng, p, 12);
        let kernel = SymMatrix::from_row_major(p, k).unwrap();
        let signs = random_signs(&mut rng, p);
        let linear: Vec<f64> = (0..p).map(|_| rng.random_range(0.5..1.5)).collect();
        let first = solve_box_eq(BoxEqQp::new(&kernel, linear.clone(), signs.clone(), 1.0)).unwrap();
        let nudged: Vec<f64> = linear.iter().map(|v| v + rng.random_range(-0.01..0.01)).collect();
        let cold = solve_box_eq(BoxEqQp::new(&kernel, nudged.clone(), signs.clone(), 1.0)).unwrap();
        let warm = solve_box_eq(BoxEqQp::new(&kernel, nudged, signs, 1.0).with_warm(first.alphas)).unwrap();
        assert!(warm.objective >= cold.objective - 1e-6 * cold.objective.abs().max(1.0));
        if warm.iterations < cold.iterations {
            wins += 1;
        }
    }
    assert!(wins >= 15, "warm start was faster in only {wins} of 20 cases");
}
