//! Factored atomic-norm robust decomposition.
//!
//! The low-rank part is parameterized by `R` rank-one terms and the sparse
//! part is minimized out in closed form, leaving the smooth objective
//!
//! ```text
//! f(a) = (λ_X / K) Σ_r Σ_k ‖a_r^(k)‖^K + φ(X(a)),
//! φ(X) = min_S ½‖X + S − Z‖² + λ_s ‖S‖₁   (elementwise Huber loss of Z − X)
//! ```
//!
//! which is minimized with L-BFGS. After balancing, the factored regularizer
//! equals `λ_X` times the atomic-norm surrogate of the returned factors.

pub mod lbfgs;

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{arg_err, dim_err, Result};
use crate::linalg::Matrix;
use crate::tensor::{dense_from_factors, khatri_rao_except, DenseTensor, KruskalTensor};

pub use lbfgs::Status;

/// Tunables of the factored solve.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Number of rank-one terms `R`.
    pub rank_bound: usize,
    pub lambda_x: f64,
    pub lambda_s: f64,
    /// Tensor order `K`.
    pub order: usize,
    pub max_iters: usize,
    /// L-BFGS memory.
    pub memory: usize,
    pub grad_tol: f64,
    /// Standard deviation of the initial factor entries. `None` picks
    /// `(‖Z‖_F / R)^{1/K} / sqrt(d_k)` per mode.
    pub init_scale: Option<f64>,
    /// Tie all modes of each term to one shared factor.
    pub symmetric: bool,
    pub seed: u64,
    /// Relative threshold for calling a factor column zero in the optimality check.
    pub zero_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rank_bound: 10,
            lambda_x: 1e-5,
            lambda_s: 1e-3,
            order: 3,
            max_iters: 1000,
            memory: 10,
            grad_tol: 1e-9,
            init_scale: None,
            symmetric: false,
            seed: 0,
            zero_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn with_rank(rank_bound: usize) -> Self {
        Self {
            rank_bound,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rank_bound == 0 {
            return Err(arg_err("rank bound must be at least 1"));
        }
        if !(self.lambda_x >= 0.0 && self.lambda_x.is_finite()) {
            return Err(arg_err("lambda_x must be finite and nonnegative"));
        }
        if self.lambda_s == 0.0 {
            return Err(arg_err(
                "lambda_s = 0 lets the sparse part absorb everything; the split is unidentifiable",
            ));
        }
        if !(self.lambda_s > 0.0 && self.lambda_s.is_finite()) {
            return Err(arg_err("lambda_s must be finite and positive"));
        }
        if self.order < 2 {
            return Err(arg_err("order must be at least 2"));
        }
        if self.memory == 0 {
            return Err(arg_err("L-BFGS memory must be positive"));
        }
        if !(self.grad_tol > 0.0) || !(self.zero_tol > 0.0) {
            return Err(arg_err("tolerances must be positive"));
        }
        if let Some(s) = self.init_scale {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(arg_err("init_scale must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

/// Elementwise soft-thresholding `sign(x) max(|x| − λ, 0)`.
pub fn shrink_scalar(x: f64, lambda: f64) -> f64 {
    x.signum() * (x.abs() - lambda).max(0.0)
}

/// Soft-thresholding of every entry. `lambda` must be nonnegative.
pub fn shrink(t: &DenseTensor, lambda: f64) -> DenseTensor {
    assert!(lambda >= 0.0, "shrink threshold must be nonnegative");
    t.map(|x| shrink_scalar(x, lambda))
}

fn huber(t: f64, lambda: f64) -> f64 {
    if t.abs() <= lambda {
        0.5 * t * t
    } else {
        lambda * t.abs() - 0.5 * lambda * lambda
    }
}

/// Value of the marginalized loss `φ(X)` and its minimizing sparse part
/// `S* = shrink(Z − X, λ_s)`.
pub fn phi_eval(x: &DenseTensor, z: &DenseTensor, lambda_s: f64) -> Result<(f64, DenseTensor)> {
    let resid = z.sub(x)?;
    let value = resid.data().iter().map(|&t| huber(t, lambda_s)).sum();
    Ok((value, shrink(&resid, lambda_s)))
}

/// Objective and gradient evaluator for one problem instance.
struct Model<'a> {
    z: &'a DenseTensor,
    dims: Vec<usize>,
    rank: usize,
    order: usize,
    lambda_x: f64,
    lambda_s: f64,
    symmetric: bool,
}

impl<'a> Model<'a> {
    fn new(z: &'a DenseTensor, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        if z.order() != cfg.order {
            return Err(dim_err(format!(
                "config order {} but tensor has order {}",
                cfg.order,
                z.order()
            )));
        }
        if cfg.symmetric && z.dims().iter().any(|&d| d != z.dims()[0]) {
            return Err(dim_err(format!(
                "symmetric solve needs cubic input, got {:?}",
                z.dims()
            )));
        }
        Ok(Self {
            z,
            dims: z.dims().to_vec(),
            rank: cfg.rank_bound,
            order: cfg.order,
            lambda_x: cfg.lambda_x,
            lambda_s: cfg.lambda_s,
            symmetric: cfg.symmetric,
        })
    }

    /// Shapes of the free parameter blocks.
    fn blocks(&self) -> Vec<usize> {
        if self.symmetric {
            vec![self.dims[0]]
        } else {
            self.dims.clone()
        }
    }

    fn check_factors(&self, factors: &[Matrix]) -> Result<()> {
        let blocks = self.blocks();
        if factors.len() != blocks.len() {
            return Err(dim_err(format!(
                "expected {} factor matrices, got {}",
                blocks.len(),
                factors.len()
            )));
        }
        for (k, (f, &d)) in factors.iter().zip(&blocks).enumerate() {
            if f.shape() != (d, self.rank) {
                return Err(dim_err(format!(
                    "factor {k} has shape {:?}, expected ({d}, {})",
                    f.shape(),
                    self.rank
                )));
            }
        }
        Ok(())
    }

    /// All `K` mode factors (the shared factor repeated when symmetric).
    fn expand(&self, free: &[Matrix]) -> Vec<Matrix> {
        if self.symmetric {
            vec![free[0].clone(); self.order]
        } else {
            free.to_vec()
        }
    }

    fn unpack(&self, x: &[f64]) -> Vec<Matrix> {
        let mut out = Vec::new();
        let mut off = 0;
        for d in self.blocks() {
            let n = d * self.rank;
            out.push(Matrix::from_column_slice(d, self.rank, &x[off..off + n]));
            off += n;
        }
        out
    }

    fn regularizer(&self, factors: &[Matrix]) -> f64 {
        let k = self.order as i32;
        let sum: f64 = factors
            .iter()
            .flat_map(|f| f.column_iter().map(|c| c.norm().powi(k)))
            .sum();
        if self.symmetric {
            self.lambda_x * sum
        } else {
            self.lambda_x / self.order as f64 * sum
        }
    }

    fn value(&self, free: &[Matrix]) -> f64 {
        let x = dense_from_factors(&self.expand(free));
        let phi: f64 = self
            .z
            .data()
            .iter()
            .zip(x.data())
            .map(|(z, x)| huber(z - x, self.lambda_s))
            .sum();
        self.regularizer(free) + phi
    }

    fn value_and_grad(&self, free: &[Matrix]) -> (f64, Vec<Matrix>) {
        let all = self.expand(free);
        let x = dense_from_factors(&all);
        let ls = self.lambda_s;
        let mut phi = 0.0;
        // G = X + S* − Z = −clip(Z − X, ±λ_s)
        let mut g = x;
        for (gi, zi) in g.data_mut().iter_mut().zip(self.z.data()) {
            let t = zi - *gi;
            phi += huber(t, ls);
            *gi = -t.clamp(-ls, ls);
        }
        let mut grads: Vec<Matrix> = (0..self.order)
            .map(|k| {
                let c = khatri_rao_except(&all, k).expect("consistent factors");
                g.matricize(k).expect("valid mode") * c
            })
            .collect();
        if self.symmetric {
            let total = grads.drain(..).reduce(|a, b| a + b).expect("order >= 2");
            grads.push(total);
        }
        let kk = self.order as i32;
        let reg_scale = if self.symmetric {
            self.lambda_x * self.order as f64
        } else {
            self.lambda_x
        };
        for (grad, f) in grads.iter_mut().zip(free) {
            for (mut gc, fc) in grad.column_iter_mut().zip(f.column_iter()) {
                let w = reg_scale * fc.norm().powi(kk - 2);
                gc.axpy(w, &fc, 1.0);
            }
        }
        (self.regularizer(free) + phi, grads)
    }

    fn initial(&self, cfg: &SolverConfig) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let base = (self.z.frobenius() / self.rank as f64).powf(1.0 / self.order as f64);
        let mut x = Vec::new();
        for d in self.blocks() {
            let scale = cfg.init_scale.unwrap_or(base / (d as f64).sqrt());
            x.extend((0..d * self.rank).map(|_| scale * rng.sample::<f64, _>(StandardNormal)));
        }
        x
    }
}

/// Factored objective at `factors` (one shared factor when `cfg.symmetric`).
pub fn objective_eval(factors: &[Matrix], z: &DenseTensor, cfg: &SolverConfig) -> Result<f64> {
    let model = Model::new(z, cfg)?;
    model.check_factors(factors)?;
    Ok(model.value(factors))
}

/// Gradient of [`objective_eval`] with respect to each factor matrix.
pub fn gradient(factors: &[Matrix], z: &DenseTensor, cfg: &SolverConfig) -> Result<Vec<Matrix>> {
    let model = Model::new(z, cfg)?;
    model.check_factors(factors)?;
    Ok(model.value_and_grad(factors).1)
}

/// Rescales every term so all of its mode columns share the norm
/// `(Π_k ‖a_r^(k)‖)^{1/K}`. Terms with a zero column become entirely zero.
pub fn balance_factors(factors: &[Matrix]) -> Vec<Matrix> {
    let mut out = factors.to_vec();
    let k = factors.len() as f64;
    let rank = factors.first().map_or(0, |f| f.ncols());
    for r in 0..rank {
        let norms: Vec<f64> = factors.iter().map(|f| f.column(r).norm()).collect();
        let prod: f64 = norms.iter().product();
        if prod == 0.0 {
            out.iter_mut().for_each(|f| f.column_mut(r).fill(0.0));
            continue;
        }
        let target = prod.powf(1.0 / k);
        for (f, n) in out.iter_mut().zip(&norms) {
            f.column_mut(r).scale_mut(target / n);
        }
    }
    out
}

/// Ex-post sufficient condition for a global minimum: the gradient vanishes
/// (to `grad_tol`) and some factor column is numerically zero relative to the
/// mean nonzero column norm.
pub fn global_optimality_check(
    factors: &[Matrix],
    grad_norm: f64,
    zero_tol: f64,
    grad_tol: f64,
) -> bool {
    if !(grad_norm <= grad_tol) {
        return false;
    }
    let norms: Vec<f64> = factors
        .iter()
        .flat_map(|f| f.column_iter().map(|c| c.norm()))
        .collect();
    let nonzero: Vec<f64> = norms.iter().copied().filter(|&n| n > 0.0).collect();
    if nonzero.len() < norms.len() {
        return true;
    }
    let mean = nonzero.iter().sum::<f64>() / nonzero.len() as f64;
    norms.iter().any(|&n| n <= zero_tol * mean)
}

/// Outcome of a factored solve.
#[derive(Clone, Debug)]
pub struct SolveReport {
    /// Balanced factors (all modes equal when symmetric).
    pub factors: KruskalTensor,
    pub lowrank: DenseTensor,
    /// `shrink(Z − X, λ_s)`.
    pub sparse: DenseTensor,
    /// Objective at the balanced factors.
    pub objective: f64,
    pub objective_trace: Vec<f64>,
    pub grad_trace: Vec<f64>,
    pub final_grad_norm: f64,
    pub iterations: usize,
    pub status: Status,
    pub global_cert: bool,
    pub wall_time: Duration,
    /// Worker threads used by the solve's kernels.
    pub threads: usize,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    /// CSV with columns `iteration,objective,grad_norm`.
    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["iteration", "objective", "grad_norm"])?;
        for (i, (f, g)) in self
            .objective_trace
            .iter()
            .zip(&self.grad_trace)
            .enumerate()
        {
            wr.write_record([i.to_string(), format!("{f:e}"), format!("{g:e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn solve(z: &DenseTensor, cfg: &SolverConfig) -> Result<SolveReport> {
    let start = Instant::now();
    let model = Model::new(z, cfg)?;
    let opts = lbfgs::LbfgsOptions {
        memory: cfg.memory,
        max_iters: cfg.max_iters,
        grad_tol: cfg.grad_tol,
        ..Default::default()
    };
    let out = lbfgs::minimize(
        |x, g| {
            let (f, grads) = model.value_and_grad(&model.unpack(x));
            let mut off = 0;
            for m in &grads {
                g[off..off + m.len()].copy_from_slice(m.as_slice());
                off += m.len();
            }
            f
        },
        model.initial(cfg),
        &opts,
    );

    let free = balance_factors(&model.unpack(&out.x));
    let objective = model.value(&free);
    let all = model.expand(&free);
    let global_cert = global_optimality_check(&free, out.grad_norm, cfg.zero_tol, cfg.grad_tol);
    let lowrank = dense_from_factors(&all);
    let sparse = shrink(&z.sub(&lowrank)?, cfg.lambda_s);
    Ok(SolveReport {
        factors: KruskalTensor::new(all)?,
        lowrank,
        sparse,
        objective,
        objective_trace: out.objective_trace,
        grad_trace: out.grad_trace,
        final_grad_norm: out.grad_norm,
        iterations: out.iterations,
        status: out.status,
        global_cert,
        wall_time: start.elapsed(),
        threads: 1,
    })
}

/// Minimizes the factored objective over independent mode factors.
pub fn lbfgs_solve(z: &DenseTensor, cfg: &SolverConfig) -> Result<SolveReport> {
    if cfg.symmetric {
        return Err(arg_err(
            "lbfgs_solve expects symmetric = false; use symmetric_solve",
        ));
    }
    solve(z, cfg)
}

/// Minimizes the objective with each term constrained to `a_r ⊗ … ⊗ a_r`.
/// The regularizer becomes `λ_X Σ_r ‖a_r‖^K`.
pub fn symmetric_solve(z: &DenseTensor, cfg: &SolverConfig) -> Result<SolveReport> {
    let cfg = SolverConfig {
        symmetric: true,
        ..cfg.clone()
    };
    solve(z, &cfg)
}
