use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use trpca::baselines::lagrangian_matrix_rpca;
use trpca::solver::{balance_factors, lbfgs_solve, objective_eval, SolverConfig};
use trpca::{DenseTensor, KruskalTensor, Matrix};

fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

#[test]
fn order_two_solve_matches_nuclear_norm_problem() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = randn(&mut rng, 5, 2) * randn(&mut rng, 2, 5) + randn(&mut rng, 5, 5) * 0.3;
        let (lx, ls) = (0.5, 0.3);
        let convex = lagrangian_matrix_rpca(&z, lx, ls, 100_000, 1e-14).unwrap();
        let zt = DenseTensor::from_vec(&[5, 5], z.as_slice().to_vec()).unwrap();
        let cfg = SolverConfig {
            rank_bound: 5,
            order: 2,
            lambda_x: lx,
            lambda_s: ls,
            seed,
            ..Default::default()
        };
        let rep = lbfgs_solve(&zt, &cfg).unwrap();
        let rel = (rep.objective - convex.objective).abs() / convex.objective;
        assert!(
            rel <= 1e-4,
            "seed {seed}: {} vs {}",
            rep.objective,
            convex.objective
        );
    }
}

#[test]
fn accepted_steps_never_raise_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let k = KruskalTensor::new((0..3).map(|_| randn(&mut rng, 8, 3)).collect()).unwrap();
    let mut z = k.to_dense();
    for _ in 0..20 {
        let idx = [
            rng.random_range(0..8),
            rng.random_range(0..8),
            rng.random_range(0..8),
        ];
        z.set(&idx, 5.0);
    }
    let rep = lbfgs_solve(
        &z,
        &SolverConfig {
            rank_bound: 6,
            seed: 4,
            ..Default::default()
        },
    )
    .unwrap();
    for w in rep.objective_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
    }
}

#[test]
fn balancing_keeps_objective_and_zeroes_mode_imbalance() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let z = DenseTensor::gaussian(&[4, 5, 3], &mut rng);
    let cfg = SolverConfig {
        rank_bound: 3,
        lambda_x: 0.7,
        ..Default::default()
    };
    for _ in 0..10 {
        let f: Vec<Matrix> = [4, 5, 3]
            .iter()
            .map(|&d| randn(&mut rng, d, 3) * rng.random_range(0.1..3.0))
            .collect();
        let bal = balance_factors(&f);
        // balancing can only lower the regularizer and leaves the data term alone
        assert!(
            objective_eval(&bal, &z, &cfg).unwrap()
                <= objective_eval(&f, &z, &cfg).unwrap() + 1e-12
        );
        for r in 0..3 {
            let n0 = bal[0].column(r).norm();
            assert!(bal
                .iter()
                .all(|m| (m.column(r).norm() - n0).abs() <= 1e-12 * n0.max(1.0)));
        }
    }
}
