use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use triccati::dense::{elementwise_leq, is_nonnegative, tsylv_apply};
use triccati::inexact::{solve_inexact_newton, InexactNewtonConfig};
use triccati::mmio::{read_dense, read_triplets, write_dense, write_triplets, Triplets};
use triccati::operator::{LinearOperator, SparseOperator};
use triccati::riccati_dense::{residual, solve_fixed_point, solve_newton, LineSearch, TRiccatiProblem};
use triccati::samples::{random_instance, random_instance_lowrank};
use triccati::sparse::CsrMatrix;
use triccati::tsylv::{solve_tsylv_dense, TSylvEquation};

#[test]
fn lowrank_and_dense_newton_reach_the_same_solution() {
    for (n, p, q, seed) in [(90, 2, 2, 1), (120, 1, 3, 2)] {
        let prob = random_instance_lowrank(n, p, q, seed);
        let cfg = InexactNewtonConfig { eps: 1e-11, ..Default::default() };
        let (x, rep) = solve_inexact_newton(&prob, &cfg).unwrap();
        assert!(rep.status.is_converged(), "{}", rep.detail);

        let (a, b, c, d) = prob.to_dense();
        let dense = TRiccatiProblem::new(a, b, c, d).unwrap();
        assert!(dense.audit_holds);
        let (y, rep) = solve_newton(&dense, 1e-13, 50, LineSearch::Exact).unwrap();
        assert!(rep.status.is_converged());
        let (z, rep) = solve_fixed_point(&dense, 1e-13, 10_000).unwrap();
        assert!(rep.status.is_converged());

        assert!((x.to_dense() - &y).norm() <= 1e-9 * y.norm());
        assert!((&z - &y).norm() <= 1e-9 * y.norm());
        assert!(is_nonnegative(&y, 1e-14));
    }
}

#[test]
fn sparse_operator_matches_dense_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 70;
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 4.0 + rng.random::<f64>()));
        for _ in 0..3 {
            t.push((i, rng.random_range(0..n), rng.random::<f64>() - 0.5));
        }
    }
    let a = CsrMatrix::from_triplets(n, n, &t).unwrap();
    let dense = a.to_dense();
    let op = SparseOperator::new(a).unwrap();
    let x = DMatrix::from_fn(n, 3, |_, _| rng.random::<f64>());
    assert_relative_eq!(op.apply(&x).unwrap(), &dense * &x, epsilon = 1e-12);
    assert_relative_eq!(op.apply_transpose(&x).unwrap(), dense.transpose() * &x, epsilon = 1e-12);
    let lu = dense.clone().lu();
    assert_relative_eq!(op.solve(&x).unwrap(), lu.solve(&x).unwrap(), epsilon = 1e-11);
    let lut = dense.transpose().lu();
    assert_relative_eq!(op.solve_transpose(&x).unwrap(), lut.solve(&x).unwrap(), epsilon = 1e-11);
}

#[test]
fn matrix_market_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = DMatrix::from_fn(7, 4, |_, _| rng.random::<f64>() * 1e3 - 5e2);
    let path = dir.path().join("m.mtx");
    write_dense(&path, &m).unwrap();
    assert_eq!(read_dense(&path).unwrap(), m);

    let t = Triplets { nrows: 5, ncols: 6, entries: vec![(0, 0, 1.5), (4, 5, -1e-300), (2, 3, std::f64::consts::PI)] };
    let path = dir.path().join("t.mtx");
    write_triplets(&path, &t).unwrap();
    assert_eq!(read_triplets(&path).unwrap(), t);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn newton_limit_is_a_nonnegative_upper_bound(n in 2usize..12, seed in any::<u64>(), steps in 1usize..6) {
        let prob = random_instance(n, seed);
        let (x, rep) = solve_newton(&prob, 1e-13, 50, LineSearch::Off).unwrap();
        prop_assert!(rep.status.is_converged());
        prop_assert!(residual(&prob, &x).unwrap().norm() <= 1e-12 * prob.c.norm());
        prop_assert!(is_nonnegative(&x, 1e-14));
        let (partial, _) = solve_fixed_point(&prob, 0.0, steps).unwrap();
        prop_assert!(elementwise_leq(&partial, &x, 1e-10).unwrap());
    }

    #[test]
    fn tsylvester_solve_inverts_the_operator(n in 1usize..15, seed in any::<u64>()) {
        let prob = random_instance(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let e = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let sol = solve_tsylv_dense(&TSylvEquation::new(prob.d.clone(), prob.a.clone(), e.clone()).unwrap()).unwrap();
        let back = tsylv_apply(&prob.d, &prob.a, &sol.x);
        prop_assert!((back - &e).norm() <= 1e-10 * e.norm().max(1.0));
    }
}
