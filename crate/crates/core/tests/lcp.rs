mod common;

use approx::assert_abs_diff_eq;
use cvcal_core::lcp::{residual, solve_mlcp, LcpError, Mlcp};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-8;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn psd_lcps_match_enumeration(seed in any::<u64>(), d in 1usize..=6, definite in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = common::random_psd(&mut rng, d, definite);
        let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let problem = Mlcp::from_rows(&m, b.clone()).unwrap();
        let result = solve_mlcp(&problem, TOL);
        if let Err(e) = common::check_against_oracle(&m, &b, definite, result, TOL) {
            return Err(TestCaseError::fail(e));
        }
    }

    /// A skew-symmetric coupling plus a nonnegative diagonal is the shape
    /// of the market systems; such matrices are PSD but not symmetric.
    #[test]
    fn skew_plus_diagonal_lcps_are_solved(seed in any::<u64>(), d in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = vec![vec![0.0; d]; d];
        for i in 0..d {
            m[i][i] = rng.gen_range(0.1..2.0);
            for j in i + 1..d {
                let a = rng.gen_range(-1.0..1.0);
                m[i][j] = a;
                m[j][i] = -a;
            }
        }
        let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let problem = Mlcp::from_rows(&m, b.clone()).unwrap();
        // Positive definite (non-symmetric): a unique solution exists.
        let sol = solve_mlcp(&problem, TOL).unwrap();
        prop_assert!(sol.residual <= TOL);
        let oracle = common::enumerate_lcp(&m, &b);
        prop_assert!(oracle.iter().any(|z| z.iter().zip(&sol.z).all(|(a, b)| (a - b).abs() <= 1e-7)));
    }

    /// Mixed problems: free variables paired with a definite block.
    #[test]
    fn mixed_lcps_reach_tolerance(seed in any::<u64>(), d in 2usize..=7, k in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = common::random_psd(&mut rng, d, true);
        let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let free: Vec<usize> = (0..k.min(d - 1)).collect();
        let problem = Mlcp::from_rows(&m, b).unwrap().with_free(free.clone()).unwrap();
        let sol = solve_mlcp(&problem, TOL).unwrap();
        prop_assert!(sol.residual <= TOL);
        for &i in &free {
            prop_assert!(sol.w[i].abs() <= TOL);
        }
        prop_assert_eq!(residual(&problem, &sol.z).unwrap(), sol.residual);
    }
}

#[test]
fn solver_returns_nonnegative_complementary_variables() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let d = rng.gen_range(1..=6);
        let m = common::random_psd(&mut rng, d, true);
        let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let sol = solve_mlcp(&Mlcp::from_rows(&m, b).unwrap(), TOL).unwrap();
        assert!(sol.z.iter().all(|&z| z >= 0.0));
    }
}

#[test]
fn degenerate_problem_with_ties() {
    // Every ratio test ties at the first pivot.
    let m = vec![
        vec![1.0, 1.0, 1.0],
        vec![1.0, 1.0, 1.0],
        vec![1.0, 1.0, 1.0],
    ];
    let b = vec![-1.0, -1.0, -1.0];
    let sol = solve_mlcp(&Mlcp::from_rows(&m, b.clone()).unwrap(), TOL).unwrap();
    assert!(sol.residual <= TOL);
    assert_abs_diff_eq!(sol.z.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
}

#[test]
fn infeasible_problem_reports_ray() {
    // w = -z - 1 >= 0 has no solution with z >= 0.
    let problem = Mlcp::from_rows(&[vec![-1.0]], vec![-1.0]).unwrap();
    assert!(matches!(
        solve_mlcp(&problem, TOL),
        Err(LcpError::RayTermination { .. })
    ));
}

#[test]
fn free_variable_with_zero_diagonal_uses_two_by_two_pivot() {
    // Equality-constrained QP: min 1/2 x^2 - 3x s.t. x = 1 (free multiplier).
    let m = vec![vec![1.0, 1.0], vec![-1.0, 0.0]];
    let b = vec![-3.0, 1.0];
    let problem = Mlcp::from_rows(&m, b).unwrap().with_free([1]).unwrap();
    let sol = solve_mlcp(&problem, TOL).unwrap();
    assert_abs_diff_eq!(sol.z[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(sol.z[1], 2.0, epsilon = 1e-12);
}

#[test]
fn invalid_tolerance_is_rejected() {
    let problem = Mlcp::from_rows(&[vec![1.0]], vec![-1.0]).unwrap();
    assert!(matches!(
        solve_mlcp(&problem, 0.0),
        Err(LcpError::InvalidTolerance(_))
    ));
}
