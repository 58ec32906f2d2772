//! Acceptance criteria. Each check prints one PASS/FAIL line; the process
//! exits nonzero if any check fails.

use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use trpca::analysis::{
    bases_from_kruskal, coherence_mu, opnorm_pomega_px, project_mixed, project_px, project_px_perp,
    project_support, random_sign_spectral_check, subspace_coherence, SupportSet, BASIS_TOL,
};
use trpca::baselines::lagrangian_matrix_rpca;
use trpca::harness::{run_phase, Method, PhaseConfig};
use trpca::linalg::singular_values;
use trpca::moments::{
    estimate_moments, fit_lda, match_topics, population_moments, sample_lda_corpus, LdaConfig,
};
use trpca::solver::{balance_factors, gradient, lbfgs_solve, objective_eval, SolverConfig};
use trpca::tensor::{khatri_rao, spectral_norm_estimate};
use trpca::{DenseTensor, KruskalTensor, Matrix, Vector};

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn random_kruskal(rng: &mut ChaCha8Rng, dims: &[usize], r: usize) -> KruskalTensor {
    KruskalTensor::new(dims.iter().map(|&d| randn(rng, d, r)).collect()).unwrap()
}

fn phase_cell(method: Method, ranks: Vec<usize>) -> Vec<usize> {
    let cfg = PhaseConfig {
        ranks,
        sparsities: vec![0.05],
        method,
        ..PhaseConfig::default()
    };
    let grid = run_phase(&cfg).unwrap();
    (0..cfg.ranks.len())
        .map(|ri| grid.cell(ri, 0).recovered)
        .collect()
}

fn phase_transition() -> Outcome {
    let got = phase_cell(Method::Atomic, vec![5, 25]);
    Outcome {
        pass: got[0] >= 14 && got[1] >= 9,
        detail: format!(
            "atomic recoveries at 5% sparsity: R=5 {}/16 (need 14), R=25 {}/16 (need 9)",
            got[0], got[1]
        ),
    }
}

fn baseline_separation() -> Outcome {
    let got: Vec<(Method, usize)> = [Method::Snn, Method::Constrained, Method::Matrix]
        .into_iter()
        .map(|m| (m, phase_cell(m, vec![25])[0]))
        .collect();
    Outcome {
        pass: got.iter().all(|&(_, n)| n == 0),
        detail: got
            .iter()
            .map(|(m, n)| format!("{m} {n}/16"))
            .collect::<Vec<_>>()
            .join(", ")
            + " at R=25, 5%",
    }
}

fn fd_error(free: &[Matrix], z: &DenseTensor, cfg: &SolverConfig) -> f64 {
    let analytic = gradient(free, z, cfg).unwrap();
    let scale = analytic
        .iter()
        .flat_map(|g| g.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let h = 1e-6;
    let mut worst = 0.0f64;
    for (k, g) in analytic.iter().enumerate() {
        for idx in 0..g.len() {
            let mut plus = free.to_vec();
            plus[k].as_mut_slice()[idx] += h;
            let mut minus = free.to_vec();
            minus[k].as_mut_slice()[idx] -= h;
            let fd = (objective_eval(&plus, z, cfg).unwrap()
                - objective_eval(&minus, z, cfg).unwrap())
                / (2.0 * h);
            let a = g.as_slice()[idx];
            // entries far below the gradient scale are compared against that scale
            let denom = a.abs().max(fd.abs()).max(1e-3 * scale).max(1e-8);
            worst = worst.max((a - fd).abs() / denom);
        }
    }
    worst
}

fn gradient_check() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let order = [2, 3, 4][seed as usize % 3];
        let dims: Vec<usize> = (0..order).map(|_| rng.random_range(2..6)).collect();
        let r = rng.random_range(1..4);
        let z = DenseTensor::gaussian(&dims, &mut rng);
        let free: Vec<Matrix> = dims.iter().map(|&d| randn(&mut rng, d, r)).collect();
        let cfg = SolverConfig {
            rank_bound: r,
            order,
            lambda_x: rng.random_range(0.05..1.0),
            lambda_s: rng.random_range(0.1..1.0),
            ..SolverConfig::default()
        };
        worst = worst.max(fd_error(&free, &z, &cfg));
    }
    Outcome {
        pass: worst <= 1e-5,
        detail: format!("max relative error {worst:.2e} over 20 instances"),
    }
}

fn convex_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
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
            ..SolverConfig::default()
        };
        let rep = lbfgs_solve(&zt, &cfg).unwrap();
        worst = worst.max((rep.objective - convex.objective).abs() / convex.objective);
    }
    Outcome {
        pass: worst <= 1e-4,
        detail: format!("max relative objective gap {worst:.2e} over 20 5x5 instances"),
    }
}

fn balancing() -> Outcome {
    let (mut recon, mut amgm) = (0.0f64, 0.0f64);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let order = rng.random_range(2..5);
        let dims: Vec<usize> = (0..order).map(|_| rng.random_range(2..7)).collect();
        let r = rng.random_range(1..5);
        let f: Vec<Matrix> = dims
            .iter()
            .map(|&d| randn(&mut rng, d, r) * rng.random_range(0.01..10.0))
            .collect();
        let before = KruskalTensor::new(f.clone()).unwrap();
        let bal = balance_factors(&f);
        let after = KruskalTensor::new(bal.clone()).unwrap();
        let dense = before.to_dense();
        recon = recon.max(dense.sub(&after.to_dense()).unwrap().frobenius() / dense.frobenius());
        let surrogate = before.atomic_norm_surrogate();
        let reg: f64 = bal
            .iter()
            .flat_map(|m| m.column_iter().map(|c| c.norm().powi(order)))
            .sum::<f64>()
            / order as f64;
        amgm = amgm.max((reg - surrogate).abs() / surrogate);
    }
    Outcome {
        pass: recon <= 1e-10 && amgm <= 1e-12,
        detail: format!("reconstruction change {recon:.2e}, regularizer vs surrogate {amgm:.2e} over 100 instances"),
    }
}

fn materialize(dims: [usize; 3], f: impl Fn(&DenseTensor) -> DenseTensor) -> Matrix {
    let n: usize = dims.iter().product();
    let mut m = Matrix::zeros(n, n);
    for j in 0..n {
        let mut e = DenseTensor::zeros(&dims);
        e.set(&e.index_of(j), 1.0);
        m.set_column(j, &Vector::from_column_slice(f(&e).data()));
    }
    m
}

fn operator_norm() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = rng.random_range(1..4);
        let k = random_kruskal(&mut rng, &[4, 4, 4], r);
        let b = bases_from_kruskal(&k, BASIS_TOL).unwrap();
        let m = rng.random_range(1..64);
        let s = SupportSet::from_offsets(
            [4, 4, 4],
            rand::seq::index::sample(&mut rng, 64, m).into_vec(),
        )
        .unwrap();
        let op = materialize([4, 4, 4], |t| {
            project_support(&project_px(t, &b).unwrap(), &s).unwrap()
        });
        let oracle = singular_values(&op).unwrap()[0];
        let est = opnorm_pomega_px(&b, &s, 500, seed).unwrap();
        worst = worst.max((est - oracle).abs());
    }
    Outcome {
        pass: worst <= 1e-8,
        detail: format!("max deviation from the 64x64 oracle {worst:.2e} over 20 seeds"),
    }
}

/// Norm chain, unfolding identities and projector laws on 100 seeded instances each.
fn invariants() -> Outcome {
    let mut failures = Vec::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [
            rng.random_range(2..7),
            rng.random_range(2..7),
            rng.random_range(2..7),
        ];
        let r = rng.random_range(1..4);
        let k = random_kruskal(&mut rng, &dims, r);
        let t = k.to_dense();
        let fro = t.frobenius();

        let spec = spectral_norm_estimate(&t, 8, 100, seed);
        if !(spec <= fro * (1.0 + 1e-12) && fro <= k.atomic_norm_surrogate() + 1e-8) {
            failures.push(format!("norm chain, seed {seed}"));
        }
        let f = k.factors();
        let unfold = [
            &f[0] * khatri_rao(&f[2], &f[1]).unwrap().transpose(),
            &f[1] * khatri_rao(&f[2], &f[0]).unwrap().transpose(),
            &f[2] * khatri_rao(&f[1], &f[0]).unwrap().transpose(),
        ];
        for (mode, u) in unfold.iter().enumerate() {
            let m = t.matricize(mode).unwrap();
            if (&m - u).norm() > 1e-10 * fro
                || DenseTensor::fold(&m, mode, &dims).unwrap().data() != t.data()
            {
                failures.push(format!("unfolding mode {mode}, seed {seed}"));
            }
        }
        let ms: Vec<Matrix> = dims.iter().map(|&d| randn(&mut rng, 3, d)).collect();
        let refs: Vec<&Matrix> = ms.iter().collect();
        let lhs = t.mode_multiply(&refs).unwrap();
        let rhs = k.mode_multiply(&refs).unwrap().to_dense();
        if lhs.sub(&rhs).unwrap().frobenius() > 1e-12 * lhs.frobenius().max(1.0) {
            failures.push(format!("mode products, seed {seed}"));
        }

        let b = bases_from_kruskal(&k, BASIS_TOL).unwrap();
        let x = DenseTensor::gaussian(&dims, &mut rng);
        let y = DenseTensor::gaussian(&dims, &mut rng);
        let tol = 1e-10 * x.frobenius() * y.frobenius();
        let projectors: [&dyn Fn(&DenseTensor) -> DenseTensor; 2] =
            [&|v| project_px(v, &b).unwrap(), &|v| {
                project_px_perp(v, &b).unwrap()
            }];
        for p in projectors {
            let px = p(&x);
            let idem = p(&px).sub(&px).unwrap().frobenius() <= 1e-10 * x.frobenius();
            let adj = (px.inner(&y).unwrap() - x.inner(&p(&y)).unwrap()).abs() <= tol;
            if !(idem && adj) {
                failures.push(format!("projector law, seed {seed}"));
            }
        }
        let sum = project_px(&x, &b)
            .unwrap()
            .add(&project_px_perp(&x, &b).unwrap())
            .unwrap();
        if sum.sub(&x).unwrap().frobenius() > 1e-10 * x.frobenius() {
            failures.push(format!("P_X + P_X⊥ = I, seed {seed}"));
        }
        let cross: Vec<DenseTensor> = [
            [true, true, false],
            [true, false, true],
            [false, true, true],
            [true, true, true],
        ]
        .iter()
        .map(|&p| project_mixed(&x, &b, p).unwrap())
        .collect();
        for i in 0..4 {
            for j in i + 1..4 {
                if cross[i].inner(&cross[j]).unwrap().abs() > 1e-10 * x.frobenius().powi(2) {
                    failures.push(format!("cross terms {i},{j}, seed {seed}"));
                }
            }
        }
        for u in b.bases() {
            let (d, rr) = u.shape();
            let mu = subspace_coherence(u);
            if mu < 1.0 - 1e-10 || mu > d as f64 / rr as f64 + 1e-10 {
                failures.push(format!("coherence range, seed {seed}"));
            }
        }
        let mu = coherence_mu(&k).unwrap();
        let n: usize = dims.iter().product();
        let bound =
            b.r_bar().powi(2) * dims.iter().sum::<usize>() as f64 / n as f64 * mu * mu + 1e-8;
        for _ in 0..100 {
            let idx = [
                rng.random_range(0..dims[0]),
                rng.random_range(0..dims[1]),
                rng.random_range(0..dims[2]),
            ];
            let mut e = DenseTensor::zeros(&dims);
            e.set(&idx, 1.0);
            if project_px(&e, &b).unwrap().frobenius().powi(2) > bound {
                failures.push(format!("coordinate projection bound, seed {seed}"));
                break;
            }
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "norm chain, unfolding, mode-product, projector and coherence checks hold on 100 instances".into()
        } else {
            format!("{} violations, first: {}", failures.len(), failures[0])
        },
    }
}

fn sign_tail() -> Outcome {
    let check = random_sign_spectral_check([10, 10, 10], 0.1, 0.05, 200, 0).unwrap();
    Outcome {
        pass: check.fraction_within >= 0.95,
        detail: format!(
            "{:.3} of 200 sign tensors within bound {:.2} (largest norm {:.2})",
            check.fraction_within,
            check.bound,
            check.norms.iter().copied().fold(0.0, f64::max)
        ),
    }
}

/// Columns drawn from a symmetric Dirichlet by normalized Gamma variates.
fn dirichlet_topics(d: usize, k: usize, conc: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let g = Gamma::new(conc, 1.0).unwrap();
    let mut phi = Matrix::from_fn(d, k, |_, _| g.sample(rng));
    for mut c in phi.column_iter_mut() {
        let s = c.sum();
        c /= s;
    }
    phi
}

fn moments_pipeline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let phi = dirichlet_topics(30, 3, 0.3, &mut rng);
    let beta = [0.5; 3];
    let pop = population_moments(&phi, &beta).unwrap();
    let mut errors = Vec::new();
    let mut big = None;
    for (i, n) in [1_000, 10_000, 100_000].into_iter().enumerate() {
        let c = sample_lda_corpus(&phi, &beta, n, 20, 100 + i as u64).unwrap();
        let est = estimate_moments(&c, 1.5).unwrap();
        let e2 = (&est.m2 - &pop.m2).norm();
        let e3 = est.m3.sub(&pop.m3).unwrap().frobenius();
        errors.push((e2, e3));
        big = Some(c);
    }
    let monotone = errors
        .windows(2)
        .all(|w| w[1].0 < w[0].0 && w[1].1 < w[0].1);
    let mut cfg = LdaConfig::new(3);
    cfg.beta0 = 1.5;
    let fit = fit_lda(big.as_ref().unwrap(), &cfg).unwrap();
    let (_, cos) = match_topics(fit.model.topics(), &phi).unwrap();
    Outcome {
        pass: monotone && cos > 0.95,
        detail: format!(
            "min matched cosine {cos:.4}; M3 error {}; M2 error {}",
            errors
                .iter()
                .map(|e| format!("{:.2e}", e.1))
                .collect::<Vec<_>>()
                .join(" > "),
            errors
                .iter()
                .map(|e| format!("{:.2e}", e.0))
                .collect::<Vec<_>>()
                .join(" > "),
        ),
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_trpca"))
            .args([
                "phase",
                "--threads",
                "1",
                "--no-timestamp",
                "-q",
                "--ranks",
                "1,5",
                "--sparsities",
                "0.05,0.1",
            ])
            .args(["--trials", "2", "--seed", "42", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        let read = |suffix: &str| std::fs::read(format!("{}{suffix}", out.display())).unwrap();
        (read(".trials.csv"), read(".summary.csv"))
    };
    let a = run("first");
    let b = run("second");
    Outcome {
        pass: a == b,
        detail: format!(
            "two runs wrote {} + {} bytes, identical: {}",
            a.0.len(),
            a.1.len(),
            a == b
        ),
    }
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("phase transition", phase_transition),
        ("baseline separation", baseline_separation),
        ("gradient correctness", gradient_check),
        ("order-2 convex equivalence", convex_equivalence),
        ("balancing", balancing),
        ("operator-norm oracle", operator_norm),
        ("norm-chain and projector invariants", invariants),
        ("sign-tensor tail", sign_tail),
        ("moments pipeline", moments_pipeline),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {:>2} {name}: {} [{:.1}s]",
            i + 1,
            out.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!out.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
