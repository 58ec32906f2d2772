//! Coherence measures, subspace projectors and checks of the recovery
//! conditions on concrete tensors.
//!
//! Everything here verifies stated inequalities on given objects; nothing
//! constructs dual certificates.

use std::fmt::Write as _;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{arg_err, dim_err, Error, Result};
use crate::linalg::{self, Matrix};
use crate::tensor::{self, spectral_norm_estimate, DenseTensor, KruskalTensor, SpectralOptions};

/// Relative singular-value cutoff used when orthonormalizing factor column spaces.
pub const BASIS_TOL: f64 = 1e-10;

/// Sorted, deduplicated set of entry positions of an order-3 tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportSet {
    dims: [usize; 3],
    offsets: Vec<usize>,
}

impl SupportSet {
    pub fn new(dims: [usize; 3], triples: &[[usize; 3]]) -> Result<Self> {
        for t in triples {
            if t.iter().zip(&dims).any(|(&i, &d)| i >= d) {
                return Err(arg_err(format!(
                    "index {t:?} out of range for dims {dims:?}"
                )));
            }
        }
        let offsets = triples
            .iter()
            .map(|t| t[0] + dims[0] * (t[1] + dims[1] * t[2]))
            .collect();
        Self::from_offsets(dims, offsets)
    }

    /// Builds a support from linear (first-index-fastest) offsets.
    pub fn from_offsets(dims: [usize; 3], mut offsets: Vec<usize>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(arg_err("support dims must be positive"));
        }
        let total = dims.iter().product::<usize>();
        if let Some(&bad) = offsets.iter().find(|&&o| o >= total) {
            return Err(arg_err(format!(
                "offset {bad} out of range for dims {dims:?}"
            )));
        }
        offsets.sort_unstable();
        offsets.dedup();
        Ok(Self { dims, offsets })
    }

    pub fn empty(dims: [usize; 3]) -> Self {
        Self {
            dims,
            offsets: Vec::new(),
        }
    }

    pub fn full(dims: [usize; 3]) -> Self {
        Self {
            dims,
            offsets: (0..dims.iter().product()).collect(),
        }
    }

    /// Positions where `|t| > tol`.
    pub fn of_tensor(t: &DenseTensor, tol: f64) -> Result<Self> {
        let dims = dims3(t)?;
        let offsets = t
            .data()
            .iter()
            .enumerate()
            .filter(|(_, x)| x.abs() > tol)
            .map(|(i, _)| i)
            .collect();
        Ok(Self { dims, offsets })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Cardinality `m`.
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Number of positions outside the support, `d1 d2 d3 − m`.
    pub fn complement_len(&self) -> usize {
        self.dims.iter().product::<usize>() - self.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn triples(&self) -> Vec<[usize; 3]> {
        let [d1, d2, _] = self.dims;
        self.offsets
            .iter()
            .map(|&o| [o % d1, (o / d1) % d2, o / (d1 * d2)])
            .collect()
    }

    pub fn contains(&self, triple: [usize; 3]) -> bool {
        let [d1, d2, _] = self.dims;
        self.offsets
            .binary_search(&(triple[0] + d1 * (triple[1] + d2 * triple[2])))
            .is_ok()
    }

    fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.dims.iter().product()];
        for &o in &self.offsets {
            m[o] = true;
        }
        m
    }

    fn check(&self, t: &DenseTensor) -> Result<()> {
        if t.dims() != self.dims {
            return Err(dim_err(format!(
                "support dims {:?} vs tensor dims {:?}",
                self.dims,
                t.dims()
            )));
        }
        Ok(())
    }
}

fn dims3(t: &DenseTensor) -> Result<[usize; 3]> {
    match t.dims() {
        &[a, b, c] => Ok([a, b, c]),
        d => Err(dim_err(format!(
            "expected an order-3 tensor, got dims {d:?}"
        ))),
    }
}

/// Keeps the entries on the support and zeroes the rest.
pub fn project_support(t: &DenseTensor, s: &SupportSet) -> Result<DenseTensor> {
    s.check(t)?;
    let mut out = DenseTensor::zeros(t.dims());
    for &o in s.offsets() {
        out.data_mut()[o] = t.data()[o];
    }
    Ok(out)
}

/// Zeroes the entries on the support.
pub fn project_support_complement(t: &DenseTensor, s: &SupportSet) -> Result<DenseTensor> {
    s.check(t)?;
    let mut out = t.clone();
    for &o in s.offsets() {
        out.data_mut()[o] = 0.0;
    }
    Ok(out)
}

/// Orthonormal bases of the three factor column spaces, with their projectors.
#[derive(Clone, Debug)]
pub struct SubspaceBases {
    bases: [Matrix; 3],
    proj: [Matrix; 3],
    perp: [Matrix; 3],
}

impl SubspaceBases {
    /// Wraps three matrices with orthonormal columns (checked to 1e-10).
    pub fn new(u: Matrix, v: Matrix, w: Matrix) -> Result<Self> {
        for (k, b) in [&u, &v, &w].into_iter().enumerate() {
            let gram = b.transpose() * b;
            let err = (gram - Matrix::identity(b.ncols(), b.ncols())).amax();
            if err > 1e-10 {
                return Err(arg_err(format!(
                    "basis {k} is not orthonormal (deviation {err:e})"
                )));
            }
        }
        let bases = [u, v, w];
        let proj = bases.clone().map(|b| linalg::projector(&b));
        let perp = proj
            .clone()
            .map(|p| Matrix::identity(p.nrows(), p.nrows()) - p);
        Ok(Self { bases, proj, perp })
    }

    pub fn bases(&self) -> &[Matrix; 3] {
        &self.bases
    }

    pub fn dims(&self) -> [usize; 3] {
        self.bases.each_ref().map(|b| b.nrows())
    }

    /// Subspace dimensions, i.e. the Tucker rank of the underlying tensor.
    pub fn ranks(&self) -> [usize; 3] {
        self.bases.each_ref().map(|b| b.ncols())
    }

    pub fn r_bar(&self) -> f64 {
        tensor::r_bar(self.dims(), self.ranks())
    }

    fn check(&self, t: &DenseTensor) -> Result<()> {
        if t.dims() != self.dims() {
            return Err(dim_err(format!(
                "bases dims {:?} vs tensor dims {:?}",
                self.dims(),
                t.dims()
            )));
        }
        Ok(())
    }
}

/// Orthonormal bases for the column spaces of the factors; null directions
/// (singular values below `tol · σ_max`) are dropped.
pub fn bases_from_kruskal(k: &KruskalTensor, tol: f64) -> Result<SubspaceBases> {
    if k.order() != 3 {
        return Err(dim_err("subspace bases need an order-3 Kruskal tensor"));
    }
    let f = k.factors();
    let b = |m: &Matrix| linalg::column_space_basis(m, tol);
    SubspaceBases::new(b(&f[0])?, b(&f[1])?, b(&f[2])?)
}

/// `P_{U*, V*, W*}` where each `*` is the subspace (`false`) or its complement (`true`).
pub fn project_mixed(t: &DenseTensor, b: &SubspaceBases, perp: [bool; 3]) -> Result<DenseTensor> {
    b.check(t)?;
    let mats: Vec<&Matrix> = (0..3)
        .map(|k| if perp[k] { &b.perp[k] } else { &b.proj[k] })
        .collect();
    t.mode_multiply(&mats)
}

/// `P_X⁰ = P_{U,V,W}`.
pub fn project_px0(t: &DenseTensor, b: &SubspaceBases) -> Result<DenseTensor> {
    project_mixed(t, b, [false; 3])
}

/// `P_X = P_{U,V,W} + P_{U⊥,V,W} + P_{U,V⊥,W} + P_{U,V,W⊥}`.
pub fn project_px(t: &DenseTensor, b: &SubspaceBases) -> Result<DenseTensor> {
    let mut acc = project_px0(t, b)?;
    for perp in [
        [true, false, false],
        [false, true, false],
        [false, false, true],
    ] {
        acc = acc.add(&project_mixed(t, b, perp)?)?;
    }
    Ok(acc)
}

/// `P_X⊥ = I − P_X`.
pub fn project_px_perp(t: &DenseTensor, b: &SubspaceBases) -> Result<DenseTensor> {
    t.sub(&project_px(t, b)?)
}

/// Coherence `(k/r) max_i ‖P_U e_i‖²` of the span of orthonormal columns `u`.
/// A zero-dimensional subspace has coherence 0.
pub fn subspace_coherence(u: &Matrix) -> f64 {
    let (k, r) = u.shape();
    if r == 0 {
        return 0.0;
    }
    let max_row = u
        .row_iter()
        .map(|row| row.norm_squared())
        .fold(0.0, f64::max);
    k as f64 / r as f64 * max_row
}

/// Coherence summary of a CP tensor.
#[derive(Clone, Debug)]
pub struct CoherenceReport {
    pub mu: f64,
    pub per_mode: [f64; 3],
    /// Heuristic; see [`alpha_estimate`].
    pub alpha_estimate: f64,
    pub ranks: [usize; 3],
    pub r_bar: f64,
}

impl CoherenceReport {
    /// Flat `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mu={}", self.mu);
        for (k, m) in self.per_mode.iter().enumerate() {
            let _ = writeln!(s, "mu_mode{}={m}", k + 1);
        }
        let _ = writeln!(s, "alpha_estimate={}", self.alpha_estimate);
        let _ = writeln!(
            s,
            "tucker_rank={},{},{}",
            self.ranks[0], self.ranks[1], self.ranks[2]
        );
        let _ = writeln!(s, "r_bar={}", self.r_bar);
        s
    }
}

/// `μ(X) = max_k μ(span A_k)`.
pub fn coherence_mu(k: &KruskalTensor) -> Result<f64> {
    let b = bases_from_kruskal(k, BASIS_TOL)?;
    Ok(b.bases().iter().map(subspace_coherence).fold(0.0, f64::max))
}

/// Heuristic estimate of the second coherence measure. The candidate dual is
/// the sum of the unit-normalized rank-one terms, scaled to spectral norm 1,
/// projected by `P_X⁰` and rescaled; the result is `sqrt(d1 d2 d3 / r̄)` times
/// its largest entry. Exact for orthogonally decomposable tensors.
pub fn alpha_estimate(k: &KruskalTensor) -> Result<f64> {
    let b = bases_from_kruskal(k, BASIS_TOL)?;
    let n = k.normalized();
    let live: Vec<usize> = n
        .weights()
        .expect("normalized")
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(r, _)| r)
        .collect();
    if live.is_empty() {
        return Err(Error::Numerical(
            "coherence of the zero tensor is undefined".into(),
        ));
    }
    let unit: Vec<Matrix> = n
        .factors()
        .iter()
        .map(|f| f.select_columns(&live))
        .collect();
    let candidate = KruskalTensor::new(unit)?.to_dense();
    let opts = SpectralOptions::default();
    let s = tensor::spectral_norm_fit(&candidate, opts, 0).value;
    if s == 0.0 {
        return Err(Error::Numerical("candidate dual tensor vanished".into()));
    }
    let projected = project_px0(&candidate.scale(1.0 / s), &b)?;
    let s2 = tensor::spectral_norm_fit(&projected, opts, 1).value;
    if s2 == 0.0 {
        return Err(Error::Numerical("projected dual tensor vanished".into()));
    }
    let w = projected.scale(1.0 / s2);
    let [d1, d2, d3] = b.dims();
    Ok(((d1 * d2 * d3) as f64 / b.r_bar()).sqrt() * w.max_norm())
}

pub fn coherence_report(k: &KruskalTensor) -> Result<CoherenceReport> {
    let b = bases_from_kruskal(k, BASIS_TOL)?;
    let per_mode = b.bases().each_ref().map(subspace_coherence);
    Ok(CoherenceReport {
        mu: per_mode.iter().copied().fold(0.0, f64::max),
        per_mode,
        alpha_estimate: alpha_estimate(k)?,
        ranks: b.ranks(),
        r_bar: b.r_bar(),
    })
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by
/// Lanczos with full reorthogonalization.
fn lanczos_top(apply: impl Fn(&[f64]) -> Vec<f64>, n: usize, max_steps: usize, seed: u64) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let qn = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|v| *v /= qn);
    let mut basis = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut theta = 0.0;
    for j in 0..max_steps.clamp(1, n) {
        let mut w = apply(&basis[j]);
        alphas.push(dot(&w, &basis[j]));
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= c * bi);
            }
        }
        let beta = dot(&w, &w).sqrt();
        let m = alphas.len();
        let t = Matrix::from_fn(m, m, |a, b| {
            if a == b {
                alphas[a]
            } else if a + 1 == b || b + 1 == a {
                betas[a.min(b)]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (top, val) =
            eig.eigenvalues
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
                );
        theta = val;
        let residual = (beta * eig.eigenvectors[(m - 1, top)]).abs();
        if residual <= 1e-14 * theta.abs().max(f64::MIN_POSITIVE) || beta <= 1e-300 {
            break;
        }
        betas.push(beta);
        basis.push(w.into_iter().map(|v| v / beta).collect());
    }
    theta.max(0.0)
}

/// Operator norm `|||P_Ω P_X|||`, computed as the square root of the top
/// eigenvalue of `P_X P_Ω P_X` (Lanczos, at most `iters` steps).
pub fn opnorm_pomega_px(b: &SubspaceBases, s: &SupportSet, iters: usize, seed: u64) -> Result<f64> {
    if iters == 0 {
        return Err(arg_err("iters must be at least 1"));
    }
    check_support_bases(b, s)?;
    let dims = b.dims();
    let mask = s.mask();
    let apply = |x: &[f64]| {
        let t = DenseTensor::from_vec(&dims, x.to_vec()).expect("finite iterate");
        let mut y = project_px(&t, b).expect("dims checked");
        y.data_mut().iter_mut().zip(&mask).for_each(|(v, &m)| {
            if !m {
                *v = 0.0
            }
        });
        project_px(&y, b).expect("dims checked").into_data()
    };
    Ok(lanczos_top(apply, mask.len(), iters, seed).sqrt())
}

/// Same norm through the companion operator `P_Ω P_X P_Ω`, whose nonzero
/// spectrum coincides with that of `P_X P_Ω P_X`.
pub fn opnorm_pomega_px_companion(
    b: &SubspaceBases,
    s: &SupportSet,
    iters: usize,
    seed: u64,
) -> Result<f64> {
    if iters == 0 {
        return Err(arg_err("iters must be at least 1"));
    }
    check_support_bases(b, s)?;
    if s.is_empty() {
        return Ok(0.0);
    }
    let dims = b.dims();
    let offs = s.offsets();
    let apply = |x: &[f64]| {
        let mut t = DenseTensor::zeros(&dims);
        for (&o, &v) in offs.iter().zip(x) {
            t.data_mut()[o] = v;
        }
        let y = project_px(&t, b).expect("dims checked");
        offs.iter().map(|&o| y.data()[o]).collect()
    };
    Ok(lanczos_top(apply, offs.len(), iters, seed).sqrt())
}

fn check_support_bases(b: &SubspaceBases, s: &SupportSet) -> Result<()> {
    if b.dims() != s.dims() {
        return Err(dim_err(format!(
            "bases dims {:?} vs support dims {:?}",
            b.dims(),
            s.dims()
        )));
    }
    Ok(())
}

/// Inputs of the exact-recovery hypothesis check.
#[derive(Clone, Copy, Debug)]
pub struct RecoveryConditionInput {
    pub dims: [usize; 3],
    pub r_bar: f64,
    /// Support cardinality.
    pub m: usize,
    pub mu0: f64,
    pub alpha0: f64,
    pub rho_r: f64,
    pub rho_s: f64,
}

#[derive(Clone, Debug)]
pub struct RecoveryConditionReport {
    /// Regularization weight `(d1 + d2 + d3)^{-1/2}`.
    pub lambda: f64,
    pub n: usize,
    pub rank_bound: f64,
    pub rank_ok: bool,
    /// `rank_bound − r̄`.
    pub rank_margin: f64,
    pub sparsity_bound: f64,
    pub sparsity_ok: bool,
    /// `sparsity_bound − m`.
    pub sparsity_margin: f64,
}

impl RecoveryConditionReport {
    pub fn passes(&self) -> bool {
        self.rank_ok && self.sparsity_ok
    }

    pub fn to_key_value(&self) -> String {
        format!(
            "lambda={}\nn={}\nrank_bound={}\nrank_ok={}\nrank_margin={}\nsparsity_bound={}\nsparsity_ok={}\nsparsity_margin={}\n",
            self.lambda,
            self.n,
            self.rank_bound,
            self.rank_ok,
            self.rank_margin,
            self.sparsity_bound,
            self.sparsity_ok,
            self.sparsity_margin
        )
    }
}

/// Evaluates the rank condition
/// `r̄ ≤ ρ_r sqrt(n / ((d1 + d2 + d3) log n α0⁴ μ0²))` with `n = d1 d2 d3 − m`
/// and the sparsity condition `m ≤ ρ_s d1 d2 d3`.
pub fn recovery_condition_check(input: &RecoveryConditionInput) -> Result<RecoveryConditionReport> {
    let RecoveryConditionInput {
        dims,
        r_bar,
        m,
        mu0,
        alpha0,
        rho_r,
        rho_s,
    } = *input;
    if dims.contains(&0) {
        return Err(arg_err("dims must be positive"));
    }
    for (name, v) in [
        ("mu0", mu0),
        ("alpha0", alpha0),
        ("rho_r", rho_r),
        ("rho_s", rho_s),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(arg_err(format!("{name} must be positive")));
        }
    }
    if !(r_bar >= 0.0) {
        return Err(arg_err("r_bar must be nonnegative"));
    }
    let total: usize = dims.iter().product();
    if m > total {
        return Err(arg_err(format!("support size {m} exceeds {total} entries")));
    }
    let n = total - m;
    if n <= 1 {
        return Err(Error::Infeasible(format!(
            "n = d1 d2 d3 − m = {n}; the rank condition needs n ≥ 2"
        )));
    }
    let sum_d = dims.iter().sum::<usize>() as f64;
    let nf = n as f64;
    let rank_bound = rho_r * (nf / (sum_d * nf.ln() * alpha0.powi(4) * mu0 * mu0)).sqrt();
    let sparsity_bound = rho_s * total as f64;
    Ok(RecoveryConditionReport {
        lambda: sum_d.powf(-0.5),
        n,
        rank_bound,
        rank_ok: r_bar <= rank_bound,
        rank_margin: rank_bound - r_bar,
        sparsity_bound,
        sparsity_ok: m as f64 <= sparsity_bound,
        sparsity_margin: sparsity_bound - m as f64,
    })
}

/// The four certificate conditions with the quantities they compare.
#[derive(Clone, Debug)]
pub struct DualCertReport {
    /// `‖P_X⊥ W⊥ − W⊥‖_F`.
    pub perp_residual: f64,
    pub perp_ok: bool,
    /// Spectral-norm estimate of `W⊥` (a lower bound).
    pub spectral: f64,
    pub spectral_ok: bool,
    /// `‖P_Ω(W − λ sgn S + W⊥)‖_F`.
    pub support_residual: f64,
    pub support_ok: bool,
    /// `max |P_Ω⊥(W + W⊥)|`.
    pub off_support_max: f64,
    pub off_support_ok: bool,
}

impl DualCertReport {
    pub fn all(&self) -> bool {
        self.perp_ok && self.spectral_ok && self.support_ok && self.off_support_ok
    }
}

/// Checks `P_X⊥ W⊥ = W⊥`, `‖W⊥‖ < 1/4`, `‖P_Ω(W − λ sgn S + W⊥)‖_F ≤ λ/8`
/// and `‖P_Ω⊥(W + W⊥)‖_max < λ/4`.
pub fn dual_cert_check(
    wperp: &DenseTensor,
    w: &DenseTensor,
    s_signs: &DenseTensor,
    b: &SubspaceBases,
    supp: &SupportSet,
    lambda: f64,
) -> Result<DualCertReport> {
    check_support_bases(b, supp)?;
    w.check_same_dims(wperp)?;
    w.check_same_dims(s_signs)?;
    let perp_residual = project_px_perp(wperp, b)?.sub(wperp)?.frobenius();
    let spectral = spectral_norm_estimate(wperp, 32, 200, 0);
    let inner = w.sub(&s_signs.scale(lambda))?.add(wperp)?;
    let support_residual = project_support(&inner, supp)?.frobenius();
    let off_support_max = project_support_complement(&w.add(wperp)?, supp)?.max_norm();
    Ok(DualCertReport {
        perp_residual,
        perp_ok: perp_residual <= 1e-8,
        spectral,
        spectral_ok: spectral < 0.25,
        support_residual,
        support_ok: support_residual <= lambda / 8.0,
        off_support_max,
        off_support_ok: off_support_max < lambda / 4.0,
    })
}

/// Tail bound `sqrt(8 (d1 + d2 + d3) log(6 / log(3/2)) + log(2/δ))` on the
/// spectral norm of a random sign tensor.
pub fn sign_tensor_bound(dims: [usize; 3], delta: f64) -> f64 {
    let sum_d = dims.iter().sum::<usize>() as f64;
    (8.0 * sum_d * (6.0 / 1.5f64.ln()).ln() + (2.0 / delta).ln()).sqrt()
}

/// Draws a tensor whose entries are `±1` with probability `ρ/2` each and 0 otherwise.
pub fn sample_sign_tensor<R: Rng + ?Sized>(dims: [usize; 3], rho: f64, rng: &mut R) -> DenseTensor {
    DenseTensor::from_fn(&dims, |_| {
        let u: f64 = rng.random();
        if u < rho / 2.0 {
            1.0
        } else if u < rho {
            -1.0
        } else {
            0.0
        }
    })
}

#[derive(Clone, Debug)]
pub struct TailCheck {
    pub fraction_within: f64,
    pub bound: f64,
    /// Spectral-norm estimate of each trial's sign tensor.
    pub norms: Vec<f64>,
}

/// Monte-Carlo check of the sign-tensor tail bound. Trial `t` uses seed `seed + t`.
pub fn random_sign_spectral_check(
    dims: [usize; 3],
    rho: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<TailCheck> {
    if !(0.0..1.0).contains(&rho) {
        return Err(arg_err("rho must lie in [0, 1)"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(arg_err("delta must lie in (0, 1)"));
    }
    if trials == 0 {
        return Err(arg_err("need at least one trial"));
    }
    let bound = sign_tensor_bound(dims, delta);
    let norms: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let trial_seed = seed.wrapping_add(t);
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
            let g = sample_sign_tensor(dims, rho, &mut rng);
            spectral_norm_estimate(&g, 32, 200, trial_seed)
        })
        .collect();
    let within = norms.iter().filter(|&&n| n <= bound).count();
    Ok(TailCheck {
        fraction_within: within as f64 / trials as f64,
        bound,
        norms,
    })
}
