//! Matricization-based comparison methods.
//!
//! * [`matrix_rpca`]: balanced nuclear norm and ℓ1 on one unfolding under a
//!   misfit budget, solved by a level-set method. [`rpca_matrix`] is the
//!   summed form `‖L‖_* + λ‖S‖₁` by ADMM.
//! * [`horpca_s`]: weighted sum of the nuclear norms of all unfoldings plus ℓ1,
//!   ADMM with one auxiliary copy per mode.
//! * [`horpca_c`]: ℓ1 fit under Tucker-rank caps, alternating shrinkage with
//!   truncated higher-order SVD.
//! * [`lagrangian_matrix_rpca`]: the penalized convex matrix problem
//!   `λ_X ‖L‖_* + min_S ½‖L + S − Z‖² + λ_s ‖S‖₁`, solved by accelerated
//!   proximal gradient. This is the reference for the order-2 factored solve.

use crate::error::{arg_err, dim_err, Result};
use crate::linalg::{self, Matrix};
use crate::solver::shrink_scalar;
use crate::tensor::DenseTensor;

/// Singular value thresholding `U max(Σ − τ, 0) Vᵀ`.
pub fn svt(m: &Matrix, tau: f64) -> Result<Matrix> {
    if !(tau >= 0.0) {
        return Err(arg_err("svt threshold must be nonnegative"));
    }
    let mut dec = linalg::svd(m)?;
    dec.singular_values
        .iter_mut()
        .for_each(|s| *s = (*s - tau).max(0.0));
    Ok(dec.reconstruct())
}

fn shrink_matrix(m: &Matrix, lambda: f64) -> Matrix {
    m.map(|x| shrink_scalar(x, lambda))
}

fn nuclear_norm(m: &Matrix) -> Result<f64> {
    Ok(linalg::singular_values(m)?.sum())
}

/// Splitting-method tunables shared by the ADMM baselines.
#[derive(Clone, Debug)]
pub struct AdmmConfig {
    /// Initial augmented-Lagrangian penalty.
    pub penalty: f64,
    pub max_iters: usize,
    /// Relative tolerance on the primal and dual residuals (scaled by `‖Z‖_F`).
    pub tol: f64,
    /// Multiply or divide the penalty by 2 whenever one residual exceeds the other tenfold.
    pub adaptive: bool,
    /// Per-mode nuclear-norm weights for [`horpca_s`]; `None` uses `sqrt(d_i)`.
    pub weights: Option<Vec<f64>>,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            penalty: 1.0,
            max_iters: 1000,
            tol: 1e-7,
            adaptive: true,
            weights: None,
        }
    }
}

impl AdmmConfig {
    fn validate(&self) -> Result<()> {
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(arg_err("ADMM penalty must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(arg_err("ADMM tolerance must be positive"));
        }
        Ok(())
    }
}

/// Low-rank and sparse estimates with solver diagnostics.
#[derive(Clone, Debug)]
pub struct BaselineResult {
    pub lowrank: DenseTensor,
    pub sparse: DenseTensor,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
}

impl BaselineResult {
    /// `‖X + S − Z‖_F`.
    pub fn feasibility(&self, z: &DenseTensor) -> Result<f64> {
        Ok(self.lowrank.add(&self.sparse)?.sub(z)?.frobenius())
    }
}

/// Result of the matrix problem.
#[derive(Clone, Debug)]
pub struct MatrixRpcaResult {
    pub lowrank: Matrix,
    pub sparse: Matrix,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
}

fn rebalance(cfg: &AdmmConfig, rho: &mut f64, r: f64, s: f64) -> Option<f64> {
    if !cfg.adaptive {
        return None;
    }
    if r > 10.0 * s {
        *rho *= 2.0;
        Some(0.5)
    } else if s > 10.0 * r {
        *rho /= 2.0;
        Some(2.0)
    } else {
        None
    }
}

/// `min ‖L‖_* + λ ‖S‖₁` subject to `L + S = Z` on a matrix, by scaled ADMM.
/// Stops when both residuals fall below `eps · max(‖Z‖_F, 1)`.
pub fn rpca_matrix(
    z: &Matrix,
    lambda: f64,
    eps: f64,
    cfg: &AdmmConfig,
) -> Result<MatrixRpcaResult> {
    cfg.validate()?;
    if !(lambda > 0.0) {
        return Err(arg_err("matrix RPCA lambda must be positive"));
    }
    let (m, n) = z.shape();
    let scale = z.norm().max(1.0);
    let mut rho = cfg.penalty;
    let mut s = Matrix::zeros(m, n);
    let mut u = Matrix::zeros(m, n);
    let mut l = Matrix::zeros(m, n);
    let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        l = svt(&(z - &s - &u), 1.0 / rho)?;
        let s_new = shrink_matrix(&(z - &l - &u), lambda / rho);
        let resid = &l + &s_new - z;
        r_norm = resid.norm();
        s_norm = rho * (&s_new - &s).norm();
        s = s_new;
        u += &resid;
        if r_norm <= eps * scale && s_norm <= eps * scale {
            converged = true;
            break;
        }
        if let Some(f) = rebalance(cfg, &mut rho, r_norm, s_norm) {
            u *= f;
        }
    }
    Ok(MatrixRpcaResult {
        lowrank: l,
        sparse: s,
        iterations,
        primal_residual: r_norm,
        dual_residual: s_norm,
        converged,
    })
}

/// Default weight for [`matrix_rpca`]: `‖X_(k)‖_* / ‖S_(k)‖₁` from a known
/// decomposition, else `1 / sqrt(max(rows, cols))` of the unfolding.
pub fn matrix_rpca_lambda(
    z: &DenseTensor,
    mode: usize,
    truth: Option<(&DenseTensor, &DenseTensor)>,
) -> Result<f64> {
    if let Some((x, s)) = truth {
        let l1 = s.sum_norm();
        if l1 > 0.0 {
            return Ok(nuclear_norm(&x.matricize(mode)?)? / l1);
        }
    }
    let m = z.matricize(mode)?;
    Ok(1.0 / (m.nrows().max(m.ncols()) as f64).sqrt())
}

/// Tunables for the level-set matrix solver in [`matrix_rpca`].
#[derive(Clone, Debug)]
pub struct LevelSetConfig {
    /// Newton steps on the level `τ`.
    pub max_outer: usize,
    /// Accelerated projected-gradient steps per level.
    pub max_inner: usize,
    /// An inner solve stops once its duality gap is below this fraction of
    /// `max(v − ε, ε)`, where `v` is the current misfit.
    pub inner_tol: f64,
    /// Accept a level once its misfit is within this relative margin of `ε`.
    pub level_tol: f64,
}

impl Default for LevelSetConfig {
    fn default() -> Self {
        Self {
            max_outer: 60,
            max_inner: 3000,
            inner_tol: 1e-2,
            level_tol: 0.2,
        }
    }
}

/// Euclidean projection onto `{x : ‖x‖₁ ≤ r}`.
fn project_l1_ball(v: &mut [f64], r: f64) {
    let total: f64 = v.iter().map(|x| x.abs()).sum();
    if total <= r {
        return;
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - r) / (j + 1) as f64;
        if m > t {
            theta = t;
        } else {
            break;
        }
    }
    v.iter_mut().for_each(|x| *x = shrink_scalar(*x, theta));
}

fn project_nuclear_ball(m: &Matrix, r: f64) -> Result<Matrix> {
    let mut dec = linalg::svd(m)?;
    project_l1_ball(dec.singular_values.as_mut_slice(), r);
    Ok(dec.reconstruct())
}

struct LevelSolve {
    lowrank: Matrix,
    sparse: Matrix,
    misfit: f64,
    gap: f64,
    /// `‖R‖₂ + ‖R‖_∞ / λ` at the final residual `R`, minus the slope of the value function.
    slope: f64,
    iterations: usize,
}

/// `min ½‖L + S − Z‖²` over `‖L‖_* ≤ τ`, `‖S‖₁ ≤ τ/λ` by FISTA with restarts.
fn solve_level(
    z: &Matrix,
    tau: f64,
    lambda: f64,
    target: f64,
    warm: (Matrix, Matrix),
    cfg: &LevelSetConfig,
) -> Result<LevelSolve> {
    let (mut l, mut s) = warm;
    l = project_nuclear_ball(&l, tau)?;
    let mut sv = s.as_mut_slice().to_vec();
    project_l1_ball(&mut sv, tau / lambda);
    s.as_mut_slice().copy_from_slice(&sv);
    let (mut yl, mut ys) = (l.clone(), s.clone());
    let mut t: f64 = 1.0;
    let misfit = |l: &Matrix, s: &Matrix| 0.5 * (l + s - z).norm_squared();
    let mut f = misfit(&l, &s);
    let mut iterations = 0;
    loop {
        let r = z - &l - &s;
        let spec = linalg::singular_values(&r)?
            .iter()
            .copied()
            .fold(0.0, f64::max);
        let inf = r.amax();
        let gap = (tau * spec + tau / lambda * inf - r.dot(&(&l + &s))).max(0.0);
        let slope = spec + inf / lambda;
        let accepted = f <= target * (1.0 + cfg.level_tol);
        if accepted
            || gap <= cfg.inner_tol * (f - target).max(target)
            || iterations >= cfg.max_inner
        {
            return Ok(LevelSolve {
                lowrank: l,
                sparse: s,
                misfit: f,
                gap,
                slope,
                iterations,
            });
        }
        for _ in 0..10 {
            iterations += 1;
            // gradient of the misfit in both blocks is L + S − Z; Lipschitz constant 2
            let g = (&yl + &ys - z) * 0.5;
            let l_new = project_nuclear_ball(&(&yl - &g), tau)?;
            let mut s_new = &ys - &g;
            project_l1_ball(s_new.as_mut_slice(), tau / lambda);
            let f_new = misfit(&l_new, &s_new);
            if f_new > f {
                // restart momentum from the last accepted point
                t = 1.0;
                yl = l.clone();
                ys = s.clone();
                continue;
            }
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let w = (t - 1.0) / t_new;
            yl = &l_new + (&l_new - &l) * w;
            ys = &s_new + (&s_new - &s) * w;
            l = l_new;
            s = s_new;
            f = f_new;
            t = t_new;
        }
    }
}

/// Solve `min max(‖L‖_*, λ‖S‖₁)` subject to `½‖L + S − Z‖²_F ≤ ε` on a
/// matrix. The value function `v(τ) = min {½‖L + S − Z‖² : ‖L‖_* ≤ τ, λ‖S‖₁ ≤ τ}`
/// is decreasing and `sqrt(2v)` is convex, so Newton steps on it from `τ = 0`,
/// taken from the lower bound `v − gap`, approach the smallest feasible level
/// from below.
pub fn rpca_matrix_level_set(
    z: &Matrix,
    lambda: f64,
    eps: f64,
    cfg: &LevelSetConfig,
) -> Result<MatrixRpcaResult> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(arg_err("matrix RPCA lambda must be positive"));
    }
    if !(eps > 0.0) {
        return Err(arg_err("misfit tolerance must be positive"));
    }
    let (m, n) = z.shape();
    let mut warm = (Matrix::zeros(m, n), Matrix::zeros(m, n));
    let mut tau = 0.0;
    let mut iterations = 0;
    let mut last = None;
    for _ in 0..cfg.max_outer.max(1) {
        let sol = solve_level(z, tau, lambda, eps, warm, cfg)?;
        iterations += sol.iterations;
        let done = sol.misfit <= eps * (1.0 + cfg.level_tol);
        // Newton on the residual norm `sqrt(2v)`, which has a simple root
        let norm = (2.0 * sol.misfit).sqrt();
        let lower = (2.0 * (sol.misfit - sol.gap).max(0.0)).sqrt();
        let step = (lower - (2.0 * eps).sqrt()) * norm / sol.slope;
        warm = (sol.lowrank.clone(), sol.sparse.clone());
        last = Some((sol, done));
        if done || !(step > 0.0) {
            break;
        }
        tau += step;
    }
    let (sol, converged) = last.expect("at least one level solved");
    Ok(MatrixRpcaResult {
        primal_residual: (2.0 * sol.misfit).sqrt(),
        dual_residual: sol.gap,
        lowrank: sol.lowrank,
        sparse: sol.sparse,
        iterations,
        converged,
    })
}

/// Matrix RPCA on the mode-`mode` unfolding of `z`, folded back into tensors.
/// Uses the level-set solver of [`rpca_matrix_level_set`], for which the
/// weight from [`matrix_rpca_lambda`] balances the two norms at the truth.
pub fn matrix_rpca(
    z: &DenseTensor,
    mode: usize,
    lambda: f64,
    eps: f64,
    cfg: &LevelSetConfig,
) -> Result<BaselineResult> {
    let res = rpca_matrix_level_set(&z.matricize(mode)?, lambda, eps, cfg)?;
    Ok(BaselineResult {
        lowrank: DenseTensor::fold(&res.lowrank, mode, z.dims())?,
        sparse: DenseTensor::fold(&res.sparse, mode, z.dims())?,
        iterations: res.iterations,
        primal_residual: res.primal_residual,
        dual_residual: res.dual_residual,
        converged: res.converged,
    })
}

/// `min Σ_i w_i ‖X_(i)‖_* + ‖S‖₁` subject to `X + S = Z` (weights default to
/// `sqrt(d_i)`; weights equal to the side lengths price even a rank-one term
/// above its ℓ1 mass on small cubes, so `X = 0` becomes optimal). Each mode has its own copy `Y_i` of `X` with the
/// constraint `Y_i + S = Z`; the returned low-rank part is the mean copy.
pub fn horpca_s(z: &DenseTensor, cfg: &AdmmConfig) -> Result<BaselineResult> {
    cfg.validate()?;
    let order = z.order();
    let weights = match &cfg.weights {
        Some(w) if w.len() != order => {
            return Err(dim_err(format!("{} weights for order {order}", w.len())))
        }
        Some(w) if w.iter().any(|&x| !(x > 0.0)) => {
            return Err(arg_err("nuclear weights must be positive"))
        }
        Some(w) => w.clone(),
        None => z.dims().iter().map(|&d| (d as f64).sqrt()).collect(),
    };
    let dims = z.dims().to_vec();
    let scale = z.frobenius().max(1.0);
    let kf = order as f64;
    let mut rho = cfg.penalty;
    let mut s = DenseTensor::zeros(&dims);
    let mut ys = vec![DenseTensor::zeros(&dims); order];
    let mut us = vec![DenseTensor::zeros(&dims); order];
    let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        let zs = z.sub(&s)?;
        for i in 0..order {
            let target = zs.sub(&us[i])?.matricize(i)?;
            ys[i] = DenseTensor::fold(&svt(&target, weights[i] / rho)?, i, &dims)?;
        }
        let mut avg = DenseTensor::zeros(&dims);
        for i in 0..order {
            avg = avg.add(&z.sub(&ys[i])?.sub(&us[i])?)?;
        }
        let s_new = avg.map(|x| shrink_scalar(x / kf, 1.0 / (kf * rho)));
        let mut r2 = 0.0;
        for i in 0..order {
            let resid = ys[i].add(&s_new)?.sub(z)?;
            r2 += resid.frobenius().powi(2);
            us[i] = us[i].add(&resid)?;
        }
        r_norm = r2.sqrt();
        s_norm = rho * kf.sqrt() * s_new.sub(&s)?.frobenius();
        s = s_new;
        if r_norm <= cfg.tol * scale && s_norm <= cfg.tol * scale {
            converged = true;
            break;
        }
        if let Some(f) = rebalance(cfg, &mut rho, r_norm, s_norm) {
            us.iter_mut().for_each(|u| *u = u.scale(f));
        }
    }
    let mut x = DenseTensor::zeros(&dims);
    for y in &ys {
        x = x.add(y)?;
    }
    Ok(BaselineResult {
        lowrank: x.scale(1.0 / kf),
        sparse: s,
        iterations,
        primal_residual: r_norm,
        dual_residual: s_norm,
        converged,
    })
}

/// Tunables of [`horpca_c`].
#[derive(Clone, Debug)]
pub struct ConstrainedConfig {
    /// Final shrinkage threshold of the sparse step.
    pub lambda: f64,
    /// Geometric decrease of the threshold per outer step, starting from `max |Z|`.
    pub continuation: f64,
    pub max_iters: usize,
    /// Relative change in `X` that ends the final phase.
    pub tol: f64,
}

impl Default for ConstrainedConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            continuation: 0.8,
            max_iters: 500,
            tol: 1e-9,
        }
    }
}

/// Projects onto Tucker rank at most `ranks` by truncated higher-order SVD.
pub fn hosvd_truncate(t: &DenseTensor, ranks: &[usize]) -> Result<DenseTensor> {
    if ranks.len() != t.order() {
        return Err(dim_err("one rank per mode required"));
    }
    let mut projectors = Vec::with_capacity(ranks.len());
    for (k, &r) in ranks.iter().enumerate() {
        let dec = linalg::svd(&t.matricize(k)?)?;
        projectors.push(linalg::projector(&dec.leading_left(r.min(dec.u.ncols()))));
    }
    let refs: Vec<&Matrix> = projectors.iter().collect();
    t.mode_multiply(&refs)
}

/// Alternates `S ← shrink(Z − X, λ)` and `X ← HOSVD_r(Z − S)`, lowering `λ`
/// geometrically to `cfg.lambda`, then iterating at the final threshold until
/// `X` settles. The returned sparse part is `Z − X`, so `X + S = Z` exactly.
pub fn horpca_c(
    z: &DenseTensor,
    ranks: &[usize],
    cfg: &ConstrainedConfig,
) -> Result<BaselineResult> {
    if ranks.len() != z.order() {
        return Err(dim_err(format!(
            "{} ranks for order {}",
            ranks.len(),
            z.order()
        )));
    }
    if ranks.iter().zip(z.dims()).any(|(&r, &d)| r == 0 || r > d) {
        return Err(arg_err(format!(
            "ranks {ranks:?} must lie in 1..=dims {:?}",
            z.dims()
        )));
    }
    if !(cfg.lambda > 0.0)
        || !(cfg.continuation > 0.0 && cfg.continuation < 1.0)
        || !(cfg.tol > 0.0)
    {
        return Err(arg_err(
            "constrained baseline needs lambda > 0, continuation in (0,1), tol > 0",
        ));
    }
    let mut x = DenseTensor::zeros(z.dims());
    let mut lambda = z.max_norm().max(cfg.lambda);
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        let s = z.sub(&x)?.map(|v| shrink_scalar(v, lambda));
        let x_new = hosvd_truncate(&z.sub(&s)?, ranks)?;
        change = x_new.sub(&x)?.frobenius() / x_new.frobenius().max(f64::MIN_POSITIVE);
        x = x_new;
        if lambda > cfg.lambda {
            lambda = (lambda * cfg.continuation).max(cfg.lambda);
        } else if change <= cfg.tol {
            converged = true;
            break;
        }
    }
    let sparse = z.sub(&x)?;
    Ok(BaselineResult {
        lowrank: x,
        sparse,
        iterations,
        primal_residual: 0.0,
        dual_residual: change,
        converged,
    })
}

/// Result of [`lagrangian_matrix_rpca`].
#[derive(Clone, Debug)]
pub struct LagrangianResult {
    pub lowrank: Matrix,
    pub sparse: Matrix,
    pub objective: f64,
    pub iterations: usize,
}

/// `λ_X ‖L‖_* + Σ huber_{λ_s}(Z − L)`, the penalized objective with the sparse part minimized out.
pub fn lagrangian_objective(l: &Matrix, z: &Matrix, lambda_x: f64, lambda_s: f64) -> Result<f64> {
    let phi: f64 = z
        .iter()
        .zip(l.iter())
        .map(|(zi, li)| {
            let t = zi - li;
            if t.abs() <= lambda_s {
                0.5 * t * t
            } else {
                lambda_s * t.abs() - 0.5 * lambda_s * lambda_s
            }
        })
        .sum();
    Ok(lambda_x * nuclear_norm(l)? + phi)
}

/// Accelerated proximal gradient (with adaptive restart) on the penalized
/// convex matrix problem. The smooth part has a 1-Lipschitz gradient, so the
/// step is 1.
pub fn lagrangian_matrix_rpca(
    z: &Matrix,
    lambda_x: f64,
    lambda_s: f64,
    max_iters: usize,
    tol: f64,
) -> Result<LagrangianResult> {
    if !(lambda_x >= 0.0) || !(lambda_s > 0.0) {
        return Err(arg_err("need lambda_x >= 0 and lambda_s > 0"));
    }
    let grad = |l: &Matrix| (z - l).map(|t| -t.clamp(-lambda_s, lambda_s));
    let mut l = Matrix::zeros(z.nrows(), z.ncols());
    let mut y = l.clone();
    let mut t = 1.0f64;
    let mut obj = lagrangian_objective(&l, z, lambda_x, lambda_s)?;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let l_new = svt(&(&y - grad(&y)), lambda_x)?;
        let obj_new = lagrangian_objective(&l_new, z, lambda_x, lambda_s)?;
        let step = (&l_new - &l).norm();
        if obj_new > obj {
            // restart momentum from the last iterate
            y = l.clone();
            t = 1.0;
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &l_new + (&l_new - &l) * ((t - 1.0) / t_new);
        t = t_new;
        l = l_new;
        obj = obj_new;
        if step <= tol * l.norm().max(1.0) {
            break;
        }
    }
    let sparse = (z - &l).map(|v| shrink_scalar(v, lambda_s));
    Ok(LagrangianResult {
        lowrank: l,
        sparse,
        objective: obj,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::KruskalTensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn low_rank(rng: &mut ChaCha8Rng, d: usize, r: usize) -> DenseTensor {
        KruskalTensor::new((0..3).map(|_| randn(rng, d, r)).collect())
            .unwrap()
            .to_dense()
    }

    fn rel(a: &DenseTensor, b: &DenseTensor) -> f64 {
        a.sub(b).unwrap().frobenius() / b.frobenius()
    }

    #[test]
    fn svt_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = randn(&mut rng, 5, 4);
        assert!((svt(&m, 0.0).unwrap() - &m).norm() < 1e-10);
        let smax = linalg::singular_values(&m).unwrap()[0];
        assert!(svt(&m, smax).unwrap().norm() < 1e-12);
        let u = linalg::Vector::from_vec(vec![0.6, 0.8, 0.0]);
        let v = linalg::Vector::from_vec(vec![0.0, 1.0]);
        let r1 = &u * v.transpose() * 5.0;
        assert!((svt(&r1, 2.0).unwrap() - &u * v.transpose() * 3.0).norm() < 1e-12);
        assert!(svt(&m, -1.0).is_err());
    }

    #[test]
    fn svt_is_proximal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = randn(&mut rng, 6, 5);
        let tau = 1.3;
        let obj = |y: &Matrix| 0.5 * (y - &m).norm_squared() + tau * nuclear_norm(y).unwrap();
        let y = svt(&m, tau).unwrap();
        let best = obj(&y);
        for _ in 0..100 {
            let p = randn(&mut rng, 6, 5) * rng.random_range(1e-4..1.0);
            assert!(best <= obj(&(&y + p)) + 1e-12);
        }
    }

    #[test]
    fn l1_ball_projection_matches_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..20 {
            let v: Vec<f64> = (0..9)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0)
                .collect();
            let r = rng.random_range(0.0..4.0);
            let mut p = v.clone();
            project_l1_ball(&mut p, r);
            let l1 = |t: f64| v.iter().map(|x| shrink_scalar(*x, t).abs()).sum::<f64>();
            let (mut lo, mut hi) = (0.0, v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
            if l1(0.0) <= r {
                hi = 0.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if l1(mid) > r {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            for (a, b) in p.iter().zip(&v) {
                assert!((a - shrink_scalar(*b, hi)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn summed_matrix_rpca_recovers() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = low_rank(&mut rng, 10, 2).matricize(0).unwrap();
        let res = rpca_matrix(&x, 0.3, 1e-7, &AdmmConfig::default()).unwrap();
        assert!((&res.lowrank - &x).norm() / x.norm() < 1e-3);
        assert!(res.converged);
        assert!(rpca_matrix(&x, 0.0, 1e-7, &AdmmConfig::default()).is_err());
    }

    #[test]
    fn matrix_rpca_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = low_rank(&mut rng, 10, 1);
        let mut s = DenseTensor::zeros(&[10, 10, 10]);
        for i in 0..10 {
            s.set(
                &[i, (3 * i + 1) % 10, (7 * i + 2) % 10],
                if i % 2 == 0 { 4.0 } else { -4.0 },
            );
        }
        let z = x.add(&s).unwrap();
        let lam = matrix_rpca_lambda(&z, 0, Some((&x, &s))).unwrap();
        let res = matrix_rpca(&z, 0, lam, 1e-5, &LevelSetConfig::default()).unwrap();
        assert!(res.converged);
        assert!(rel(&res.lowrank, &x) < 1e-3, "{}", rel(&res.lowrank, &x));
        assert!(0.5 * res.feasibility(&z).unwrap().powi(2) <= 1.2e-5);

        let zero = DenseTensor::zeros(&[4, 4, 4]);
        let res = matrix_rpca(&zero, 0, 0.5, 1e-5, &LevelSetConfig::default()).unwrap();
        assert_eq!(res.lowrank.frobenius() + res.sparse.frobenius(), 0.0);
        assert!(matrix_rpca(&zero, 0, 0.0, 1e-5, &LevelSetConfig::default()).is_err());
        assert!(matrix_rpca(&zero, 0, 0.5, 0.0, &LevelSetConfig::default()).is_err());
    }

    #[test]
    fn matrix_rpca_order_two_reshape() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = randn(&mut rng, 6, 2) * randn(&mut rng, 2, 5);
        let t = DenseTensor::from_vec(&[6, 5, 1], m.as_slice().to_vec()).unwrap();
        let cfg = LevelSetConfig::default();
        let via_tensor = matrix_rpca(&t, 0, 0.4, 1e-6, &cfg).unwrap();
        let direct = rpca_matrix_level_set(&m, 0.4, 1e-6, &cfg).unwrap();
        let diff = (via_tensor.lowrank.matricize(0).unwrap() - direct.lowrank).amax();
        assert!(diff <= 1e-10);
    }

    #[test]
    fn lambda_from_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = low_rank(&mut rng, 5, 1);
        let mut s = DenseTensor::zeros(&[5, 5, 5]);
        s.set(&[0, 0, 0], 2.0);
        let lam = matrix_rpca_lambda(&x, 0, Some((&x, &s))).unwrap();
        let expected = nuclear_norm(&x.matricize(0).unwrap()).unwrap() / 2.0;
        assert!((lam - expected).abs() < 1e-12);
        let fallback =
            matrix_rpca_lambda(&x, 0, Some((&x, &DenseTensor::zeros(&[5, 5, 5])))).unwrap();
        assert!((fallback - 0.2).abs() < 1e-12);
    }

    #[test]
    fn horpca_s_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = low_rank(&mut rng, 8, 1);
        let unit = AdmmConfig {
            weights: Some(vec![1.0; 3]),
            ..Default::default()
        };
        let res = horpca_s(&x, &unit).unwrap();
        assert!(rel(&res.lowrank, &x) < 1e-3, "{}", rel(&res.lowrank, &x));
        assert!(res.converged);
        assert!(res.feasibility(&x).unwrap() <= 1e-6 * x.frobenius());

        let mut s = DenseTensor::zeros(&[6, 6, 6]);
        for i in 0..6 {
            s.set(&[i, (i + 1) % 6, (i + 3) % 6], 1.0);
        }
        let res = horpca_s(&s, &unit).unwrap();
        assert!(res.lowrank.frobenius() < 1e-3);

        // side-length weights price a rank-one term above its ℓ1 mass at this size
        let side = AdmmConfig {
            weights: Some(vec![8.0; 3]),
            ..Default::default()
        };
        let res = horpca_s(&x, &side).unwrap();
        assert!(rel(&res.lowrank, &x) > 0.5);
        let bad = AdmmConfig {
            weights: Some(vec![1.0]),
            ..Default::default()
        };
        assert!(horpca_s(&s, &bad).is_err());
    }

    #[test]
    fn horpca_s_default_weights_recover_low_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = low_rank(&mut rng, 20, 2);
        let mut s = DenseTensor::zeros(&[20, 20, 20]);
        for i in rand::seq::index::sample(&mut rng, 8000, 400) {
            let idx = s.index_of(i);
            s.set(&idx, rng.sample(StandardNormal));
        }
        let res = horpca_s(&x.add(&s).unwrap(), &AdmmConfig::default()).unwrap();
        assert!(rel(&res.lowrank, &x) < 1e-3, "{}", rel(&res.lowrank, &x));
    }

    #[test]
    fn horpca_c_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = low_rank(&mut rng, 6, 1);
        let res = horpca_c(&x, &[1, 1, 1], &ConstrainedConfig::default()).unwrap();
        assert!(rel(&res.lowrank, &x) < 1e-3);
        assert!(res.feasibility(&x).unwrap() < 1e-12 * x.frobenius());

        let z = DenseTensor::gaussian(&[4, 4, 4], &mut rng);
        let res = horpca_c(&z, &[4, 4, 4], &ConstrainedConfig::default()).unwrap();
        assert!(res.sparse.frobenius() < 1e-10);
        assert!(horpca_c(&z, &[5, 4, 4], &ConstrainedConfig::default()).is_err());
    }

    #[test]
    fn lagrangian_reference_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z = randn(&mut rng, 5, 2) * randn(&mut rng, 2, 5) + randn(&mut rng, 5, 5) * 0.1;
        let res = lagrangian_matrix_rpca(&z, 0.3, 0.2, 20_000, 1e-13).unwrap();
        // no small perturbation improves the objective
        for _ in 0..50 {
            let p = randn(&mut rng, 5, 5) * 1e-4;
            let o = lagrangian_objective(&(&res.lowrank + p), &z, 0.3, 0.2).unwrap();
            assert!(o >= res.objective - 1e-10);
        }
    }
}
