//! Dense and CP-factored tensors together with the algebraic kernels used by
//! every other module: matricization, Khatri-Rao products, mode products,
//! elementwise norms, rank-one power iteration and Tucker-rank estimation.
//!
//! Storage is first-index-fastest: entry `(i1, i2, i3)` of a `d1 × d2 × d3`
//! tensor lives at offset `i1 + d1*i2 + d1*d2*i3`. The mode-`k` matricization
//! keeps the remaining indices in the same order, so for mode 0 the column of
//! entry `(i1, i2, i3)` is `i2 + d2*i3`. With this convention
//!
//! ```text
//! X_(0) = A (C ⊙ B)ᵀ,  X_(1) = B (C ⊙ A)ᵀ,  X_(2) = C (B ⊙ A)ᵀ
//! ```
//!
//! for `X = [[A, B, C]]`. Modes are zero-based throughout the API.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{arg_err, dim_err, Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// A dense real tensor of arbitrary order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(arg_err("tensor must have at least one mode"));
    }
    if dims.contains(&0) {
        return Err(arg_err(format!(
            "tensor dimensions must be positive, got {dims:?}"
        )));
    }
    Ok(dims.iter().product())
}

impl DenseTensor {
    pub fn zeros(dims: &[usize]) -> Self {
        let n = check_dims(dims).expect("valid dimensions");
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; n],
        }
    }

    /// Wraps `data` (first-index-fastest) as a tensor of shape `dims`.
    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = check_dims(dims)?;
        if data.len() != n {
            return Err(dim_err(format!(
                "data length {} does not match dims {dims:?} (expected {n})",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(
                "tensor data contains NaN or infinite values".into(),
            ));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let n = check_dims(dims).expect("valid dimensions");
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            increment(&mut idx, dims);
        }
        Self {
            dims: dims.to_vec(),
            data,
        }
    }

    /// Tensor with i.i.d. standard normal entries.
    pub fn gaussian<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        let n = check_dims(dims).expect("valid dimensions");
        let data = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            dims: dims.to_vec(),
            data,
        }
    }

    /// Outer product `v1 ⊗ v2 ⊗ … ⊗ vK`.
    pub fn rank_one(vectors: &[&Vector]) -> Self {
        let dims: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
        Self::from_fn(&dims, |idx| {
            idx.iter().zip(vectors).map(|(&i, v)| v[i]).product()
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        let mut stride = 1;
        for (&i, &d) in idx.iter().zip(&self.dims) {
            debug_assert!(i < d);
            off += i * stride;
            stride *= d;
        }
        off
    }

    /// Multi-index of a linear offset.
    pub fn index_of(&self, mut offset: usize) -> Vec<usize> {
        self.dims
            .iter()
            .map(|&d| {
                let i = offset % d;
                offset /= d;
                i
            })
            .collect()
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_dims(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            dims: self.dims.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|x| s * x)
    }

    pub(crate) fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(dim_err(format!("dims {:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(())
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Elementwise ℓ1 norm.
    pub fn sum_norm(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).sum()
    }

    /// Largest absolute entry.
    pub fn max_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn count_nonzero(&self, tol: f64) -> usize {
        self.data.iter().filter(|x| x.abs() > tol).count()
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(arg_err(format!(
                "mode {mode} out of range for order-{} tensor",
                self.order()
            )));
        }
        Ok(())
    }

    /// `(pre, d_mode, post)` block sizes around `mode`.
    fn split(&self, mode: usize) -> (usize, usize, usize) {
        let pre = self.dims[..mode].iter().product();
        let post = self.dims[mode + 1..].iter().product();
        (pre, self.dims[mode], post)
    }

    /// Mode-`mode` unfolding: fibers along `mode` become columns.
    pub fn matricize(&self, mode: usize) -> Result<Matrix> {
        self.check_mode(mode)?;
        let (pre, dk, post) = self.split(mode);
        if mode == 0 {
            return Ok(Matrix::from_column_slice(dk, post, &self.data));
        }
        let mut m = Matrix::zeros(dk, pre * post);
        for q in 0..post {
            for i in 0..dk {
                let base = pre * (i + dk * q);
                for p in 0..pre {
                    m[(i, p + pre * q)] = self.data[base + p];
                }
            }
        }
        Ok(m)
    }

    /// Inverse of [`matricize`](Self::matricize): folds a mode-`mode` unfolding
    /// back into a tensor with the given dims.
    pub fn fold(m: &Matrix, mode: usize, dims: &[usize]) -> Result<Self> {
        let n = check_dims(dims)?;
        if mode >= dims.len() {
            return Err(arg_err(format!(
                "mode {mode} out of range for order-{} tensor",
                dims.len()
            )));
        }
        let dk = dims[mode];
        if m.nrows() != dk || m.nrows() * m.ncols() != n {
            return Err(dim_err(format!(
                "cannot fold {}x{} matrix along mode {mode} into {dims:?}",
                m.nrows(),
                m.ncols()
            )));
        }
        let pre: usize = dims[..mode].iter().product();
        let post: usize = dims[mode + 1..].iter().product();
        let mut data = vec![0.0; n];
        for q in 0..post {
            for i in 0..dk {
                let base = pre * (i + dk * q);
                for p in 0..pre {
                    data[base + p] = m[(i, p + pre * q)];
                }
            }
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Mode-`mode` product with `m` (`k × d_mode`): replaces dimension `d_mode` by `k`.
    pub fn mode_product(&self, mode: usize, m: &Matrix) -> Result<Self> {
        self.check_mode(mode)?;
        if m.ncols() != self.dims[mode] {
            return Err(dim_err(format!(
                "mode-{mode} product needs {} columns, matrix has {}",
                self.dims[mode],
                m.ncols()
            )));
        }
        let unfolded = self.matricize(mode)?;
        let mut dims = self.dims.clone();
        dims[mode] = m.nrows();
        if dims[mode] == 0 {
            return Err(arg_err("mode product would produce an empty dimension"));
        }
        Self::fold(&(m * unfolded), mode, &dims)
    }

    /// `(M1, …, MK) · T`: successive mode products, one matrix per mode.
    pub fn mode_multiply(&self, matrices: &[&Matrix]) -> Result<Self> {
        if matrices.len() != self.order() {
            return Err(dim_err(format!(
                "need {} matrices for mode multiplication, got {}",
                self.order(),
                matrices.len()
            )));
        }
        let mut out = self.clone();
        for (mode, m) in matrices.iter().enumerate() {
            out = out.mode_product(mode, m)?;
        }
        Ok(out)
    }

    /// Contracts every mode except `mode` against the matching vector
    /// (`vectors[mode]` is ignored), returning a vector of length `d_mode`.
    pub fn contract_except(&self, mode: usize, vectors: &[Vector]) -> Vector {
        let (pre, dk, _) = self.split(mode);
        let wpre = kron_vectors(&vectors[..mode]);
        let wpost = kron_vectors(&vectors[mode + 1..]);
        let mut out = Vector::zeros(dk);
        for (q, &wq) in wpost.iter().enumerate() {
            if wq == 0.0 {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                let base = pre * (i + dk * q);
                let s: f64 = self.data[base..base + pre]
                    .iter()
                    .zip(&wpre)
                    .map(|(x, w)| x * w)
                    .sum();
                *o += wq * s;
            }
        }
        out
    }
}

fn increment(idx: &mut [usize], dims: &[usize]) {
    for (i, &d) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < d {
            return;
        }
        *i = 0;
    }
}

/// Kronecker product of vectors with the first vector varying fastest.
fn kron_vectors(vectors: &[Vector]) -> Vec<f64> {
    let mut acc = vec![1.0];
    for v in vectors {
        let mut next = Vec::with_capacity(acc.len() * v.len());
        for &vi in v.iter() {
            next.extend(acc.iter().map(|a| a * vi));
        }
        acc = next;
    }
    acc
}

/// Column-wise Kronecker product. Row `i*p + j` of column `c` is `a[i,c] * b[j,c]`.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.ncols() != b.ncols() {
        return Err(dim_err(format!(
            "Khatri-Rao needs equal column counts, got {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let (m, p, n) = (a.nrows(), b.nrows(), a.ncols());
    let mut out = Matrix::zeros(m * p, n);
    for c in 0..n {
        for i in 0..m {
            let aic = a[(i, c)];
            for j in 0..p {
                out[(i * p + j, c)] = aic * b[(j, c)];
            }
        }
    }
    Ok(out)
}

/// `M1 ⊙ M2 ⊙ … ⊙ Mn` (left to right). Panics on an empty list.
pub fn khatri_rao_chain(ms: &[&Matrix]) -> Result<Matrix> {
    let (first, rest) = ms.split_first().expect("at least one matrix");
    let mut acc = (*first).clone();
    for m in rest {
        acc = khatri_rao(&acc, m)?;
    }
    Ok(acc)
}

/// Khatri-Rao product of every factor except `skip`, in descending mode order,
/// so that `X_(skip) = A_skip · Cᵀ`.
pub(crate) fn khatri_rao_except(factors: &[Matrix], skip: usize) -> Result<Matrix> {
    let ordered: Vec<&Matrix> = factors
        .iter()
        .enumerate()
        .rev()
        .filter(|(k, _)| *k != skip)
        .map(|(_, m)| m)
        .collect();
    if ordered.is_empty() {
        return Ok(Matrix::from_element(1, factors[skip].ncols(), 1.0));
    }
    khatri_rao_chain(&ordered)
}

/// An `R`-term CP representation `Σ_r γ_r a_r^{(1)} ⊗ … ⊗ a_r^{(K)}`.
///
/// Without weights the terms are the raw factor columns. With weights every
/// factor column has unit norm and `γ_r` carries the scale.
#[derive(Clone, Debug, PartialEq)]
pub struct KruskalTensor {
    factors: Vec<Matrix>,
    weights: Option<Vector>,
}

const UNIT_NORM_TOL: f64 = 1e-10;

impl KruskalTensor {
    pub fn new(factors: Vec<Matrix>) -> Result<Self> {
        Self::validate(&factors)?;
        Ok(Self {
            factors,
            weights: None,
        })
    }

    /// Normalized form `[[γ; U1, …, UK]]`; every column must have unit norm.
    pub fn with_weights(weights: Vector, factors: Vec<Matrix>) -> Result<Self> {
        Self::validate(&factors)?;
        if weights.len() != factors[0].ncols() {
            return Err(dim_err(format!(
                "{} weights for {} terms",
                weights.len(),
                factors[0].ncols()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(arg_err("weights must be finite and nonnegative"));
        }
        for (k, f) in factors.iter().enumerate() {
            for (r, col) in f.column_iter().enumerate() {
                if (col.norm() - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(arg_err(format!(
                        "factor {k} column {r} has norm {} (weighted form needs unit columns)",
                        col.norm()
                    )));
                }
            }
        }
        Ok(Self {
            factors,
            weights: Some(weights),
        })
    }

    fn validate(factors: &[Matrix]) -> Result<()> {
        if factors.is_empty() {
            return Err(arg_err("Kruskal tensor needs at least one factor"));
        }
        let r = factors[0].ncols();
        for (k, f) in factors.iter().enumerate() {
            if f.ncols() != r {
                return Err(dim_err(format!(
                    "factor {k} has {} columns, factor 0 has {r}",
                    f.ncols()
                )));
            }
            if f.nrows() == 0 {
                return Err(arg_err(format!("factor {k} has no rows")));
            }
            if f.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!(
                    "factor {k} contains non-finite values"
                )));
            }
        }
        Ok(())
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn weights(&self) -> Option<&Vector> {
        self.weights.as_ref()
    }

    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    /// Per-term scale `γ_r = w_r · Π_k ‖a_r^{(k)}‖`.
    pub fn term_weights(&self) -> Vec<f64> {
        (0..self.rank())
            .map(|r| {
                let w = self.weights.as_ref().map_or(1.0, |w| w[r]);
                w * self
                    .factors
                    .iter()
                    .map(|f| f.column(r).norm())
                    .product::<f64>()
            })
            .collect()
    }

    /// Sum of term scales: a decomposition-dependent upper bound on the atomic norm.
    pub fn atomic_norm_surrogate(&self) -> f64 {
        self.term_weights().iter().sum()
    }

    /// Factors with weights folded into the first mode.
    pub fn unweighted_factors(&self) -> Vec<Matrix> {
        let mut factors = self.factors.clone();
        if let Some(w) = &self.weights {
            for (r, &wr) in w.iter().enumerate() {
                factors[0].column_mut(r).scale_mut(wr);
            }
        }
        factors
    }

    /// Unit-column form with explicit weights. Zero columns stay zero with weight 0.
    pub fn normalized(&self) -> Self {
        let factors = self.unweighted_factors();
        let r = self.rank();
        let mut weights = Vector::zeros(r);
        let mut out = factors.clone();
        for t in 0..r {
            let norms: Vec<f64> = factors.iter().map(|f| f.column(t).norm()).collect();
            if norms.contains(&0.0) {
                for f in out.iter_mut() {
                    let mut col = f.column_mut(t);
                    col.fill(0.0);
                    col[0] = 1.0;
                }
                continue;
            }
            weights[t] = norms.iter().product();
            for (f, n) in out.iter_mut().zip(&norms) {
                f.column_mut(t).unscale_mut(*n);
            }
        }
        Self {
            factors: out,
            weights: Some(weights),
        }
    }

    /// Materializes the dense tensor.
    pub fn to_dense(&self) -> DenseTensor {
        dense_from_factors(&self.unweighted_factors())
    }

    /// `(M1, …, MK) · X` computed on the factors.
    pub fn mode_multiply(&self, matrices: &[&Matrix]) -> Result<Self> {
        if matrices.len() != self.order() {
            return Err(dim_err("one matrix per mode required"));
        }
        let factors = self
            .unweighted_factors()
            .iter()
            .zip(matrices)
            .map(|(f, m)| {
                if m.ncols() != f.nrows() {
                    Err(dim_err(format!(
                        "matrix has {} columns, factor has {} rows",
                        m.ncols(),
                        f.nrows()
                    )))
                } else {
                    Ok(*m * f)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(factors)
    }
}

/// `Σ_r a_r^{(1)} ⊗ … ⊗ a_r^{(K)}` for factors already checked to share a column count.
pub(crate) fn dense_from_factors(factors: &[Matrix]) -> DenseTensor {
    let dims: Vec<usize> = factors.iter().map(|f| f.nrows()).collect();
    if factors[0].ncols() == 0 {
        return DenseTensor::zeros(&dims);
    }
    let c = khatri_rao_except(factors, 0).expect("consistent factors");
    let x0 = &factors[0] * c.transpose();
    DenseTensor {
        dims,
        data: x0.as_slice().to_vec(),
    }
}

/// Free-function form of [`KruskalTensor::to_dense`].
pub fn dense_from_kruskal(k: &KruskalTensor) -> DenseTensor {
    k.to_dense()
}

/// Result of one rank-one power iteration run.
#[derive(Clone, Debug)]
pub struct RankOneFit {
    /// Final value of `⟨T, v1 ⊗ … ⊗ vK⟩`.
    pub value: f64,
    pub vectors: Vec<Vector>,
    /// Objective after every full sweep over the modes.
    pub trace: Vec<f64>,
}

/// Alternating unit-vector maximization of `⟨T, v1 ⊗ … ⊗ vK⟩` from the given
/// start (higher-order power method). The sweep values never decrease.
pub fn rank_one_power_iteration(
    t: &DenseTensor,
    mut vectors: Vec<Vector>,
    iters: usize,
    tol: f64,
) -> RankOneFit {
    let order = t.order();
    let mut trace = Vec::new();
    let mut value = f64::NEG_INFINITY;
    for _ in 0..iters {
        let mut current = 0.0;
        for k in 0..order {
            let c = t.contract_except(k, &vectors);
            let n = c.norm();
            if n == 0.0 {
                return RankOneFit {
                    value: 0.0,
                    vectors,
                    trace,
                };
            }
            vectors[k] = c / n;
            current = n;
        }
        trace.push(current);
        let converged = (current - value).abs() <= tol * current.abs().max(f64::MIN_POSITIVE);
        value = current;
        if converged {
            break;
        }
    }
    RankOneFit {
        value: value.max(0.0),
        vectors,
        trace,
    }
}

/// Tunables for [`spectral_norm_estimate`].
#[derive(Clone, Copy, Debug)]
pub struct SpectralOptions {
    pub restarts: usize,
    pub iters: usize,
    pub tol: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            restarts: 32,
            iters: 200,
            tol: 1e-10,
        }
    }
}

fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vector {
    loop {
        let v = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 0.0 {
            return v / n;
        }
    }
}

/// Best rank-one fit over random restarts; `value` is a certified lower bound
/// on the spectral norm `max ⟨T, u ⊗ v ⊗ w⟩` over unit vectors.
pub fn spectral_norm_fit(t: &DenseTensor, opts: SpectralOptions, seed: u64) -> RankOneFit {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<RankOneFit> = None;
    for _ in 0..opts.restarts.max(1) {
        let start: Vec<Vector> = t.dims().iter().map(|&d| random_unit(d, &mut rng)).collect();
        let fit = rank_one_power_iteration(t, start, opts.iters, opts.tol);
        if best.as_ref().is_none_or(|b| fit.value > b.value) {
            best = Some(fit);
        }
    }
    best.expect("at least one restart")
}

/// Lower bound on the tensor spectral norm by multi-start higher-order power iteration.
pub fn spectral_norm_estimate(t: &DenseTensor, restarts: usize, iters: usize, seed: u64) -> f64 {
    spectral_norm_fit(
        t,
        SpectralOptions {
            restarts,
            iters,
            ..Default::default()
        },
        seed,
    )
    .value
}

/// Tucker rank with per-mode singular values.
#[derive(Clone, Debug)]
pub struct TuckerRankReport {
    pub ranks: Vec<usize>,
    pub singular_values: Vec<Vec<f64>>,
    /// Weighted rank average; only defined for order-3 tensors.
    pub r_bar: Option<f64>,
}

/// Counts singular values of each matricization above `tol · σ_max`.
/// The zero tensor has Tucker rank zero in every mode.
pub fn tucker_rank(t: &DenseTensor, tol: f64) -> Result<TuckerRankReport> {
    if !(tol > 0.0) {
        return Err(arg_err("tucker_rank tolerance must be positive"));
    }
    let mut ranks = Vec::with_capacity(t.order());
    let mut singular_values = Vec::with_capacity(t.order());
    for mode in 0..t.order() {
        let dec = linalg::svd(&t.matricize(mode)?)?;
        ranks.push(dec.numerical_rank(tol));
        singular_values.push(dec.singular_values.iter().cloned().collect());
    }
    let r_bar = (t.order() == 3).then(|| {
        let d = t.dims();
        self::r_bar([d[0], d[1], d[2]], [ranks[0], ranks[1], ranks[2]])
    });
    Ok(TuckerRankReport {
        ranks,
        singular_values,
        r_bar,
    })
}

/// `sqrt((r1 r2 d3 + r1 r3 d2 + r2 r3 d1) / (d1 + d2 + d3))`.
pub fn r_bar(dims: [usize; 3], ranks: [usize; 3]) -> f64 {
    let [d1, d2, d3] = dims.map(|d| d as f64);
    let [r1, r2, r3] = ranks.map(|r| r as f64);
    ((r1 * r2 * d3 + r1 * r3 * d2 + r2 * r3 * d1) / (d1 + d2 + d3)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn random_kruskal(rng: &mut ChaCha8Rng, dims: &[usize], r: usize) -> KruskalTensor {
        KruskalTensor::new(dims.iter().map(|&d| random_matrix(rng, d, r)).collect()).unwrap()
    }

    /// Direct triple-loop evaluation of the CP sum.
    fn brute_dense(k: &KruskalTensor) -> DenseTensor {
        let f = k.unweighted_factors();
        let d = k.dims();
        let mut t = DenseTensor::zeros(&d);
        for i in 0..d[0] {
            for j in 0..d[1] {
                for l in 0..d[2] {
                    let mut s = 0.0;
                    for r in 0..k.rank() {
                        s += f[0][(i, r)] * f[1][(j, r)] * f[2][(l, r)];
                    }
                    t.set(&[i, j, l], s);
                }
            }
        }
        t
    }

    #[test]
    fn empty_kruskal_is_zero() {
        let k = KruskalTensor::new(vec![
            Matrix::zeros(2, 0),
            Matrix::zeros(3, 0),
            Matrix::zeros(4, 0),
        ])
        .unwrap();
        let t = k.to_dense();
        assert_eq!(t.dims(), &[2, 3, 4]);
        assert_eq!(t.frobenius(), 0.0);
        assert_eq!(k.atomic_norm_surrogate(), 0.0);
    }

    #[test]
    fn basis_rank_one() {
        let e1 = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let k = KruskalTensor::with_weights(
            Vector::from_element(1, 1.0),
            vec![e1.clone(), e1.clone(), e1],
        )
        .unwrap();
        let t = k.to_dense();
        assert_eq!(t.get(&[0, 0, 0]), 1.0);
        assert_eq!(t.sum_norm(), 1.0);
    }

    #[test]
    fn dense_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random_kruskal(&mut rng, &[3, 3, 3], 2);
        let diff = k.to_dense().sub(&brute_dense(&k)).unwrap().max_norm();
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn mismatched_factors_rejected() {
        assert!(KruskalTensor::new(vec![Matrix::zeros(2, 2), Matrix::zeros(2, 3)]).is_err());
    }

    #[test]
    fn matricize_layout() {
        let t = DenseTensor::from_vec(&[2, 2, 2], (1..=8).map(f64::from).collect()).unwrap();
        let m = t.matricize(0).unwrap();
        let expected = Matrix::from_row_slice(2, 4, &[1., 3., 5., 7., 2., 4., 6., 8.]);
        assert_eq!(m, expected);
        assert!(t.matricize(3).is_err());
    }

    #[test]
    fn fold_inverts_matricize() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = DenseTensor::gaussian(&[3, 4, 5], &mut rng);
        for mode in 0..3 {
            let back = DenseTensor::fold(&t.matricize(mode).unwrap(), mode, t.dims()).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn khatri_rao_identity_all_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = random_kruskal(&mut rng, &[3, 4, 5], 3);
        let dense = brute_dense(&k);
        let f = k.factors();
        let routes = [
            (0, &f[0], khatri_rao(&f[2], &f[1]).unwrap()),
            (1, &f[1], khatri_rao(&f[2], &f[0]).unwrap()),
            (2, &f[2], khatri_rao(&f[1], &f[0]).unwrap()),
        ];
        for (mode, a, c) in routes {
            let lhs = dense.matricize(mode).unwrap();
            let rhs = a * c.transpose();
            assert!((lhs - rhs).norm() <= 1e-12 * dense.frobenius());
        }
    }

    #[test]
    fn matricization_rank_bounded_by_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = random_kruskal(&mut rng, &[6, 6, 6], 2);
        let rep = tucker_rank(&k.to_dense(), 1e-8).unwrap();
        assert!(rep.ranks.iter().all(|&r| r <= 2));
    }

    #[test]
    fn khatri_rao_examples() {
        let a = Matrix::from_row_slice(2, 2, &[1., 2., 3., 4.]);
        let b = Matrix::from_row_slice(2, 2, &[5., 6., 7., 8.]);
        let expected = Matrix::from_row_slice(4, 2, &[5., 12., 7., 16., 15., 24., 21., 32.]);
        assert_eq!(khatri_rao(&a, &b).unwrap(), expected);

        let s = khatri_rao(
            &Matrix::from_element(1, 1, 3.0),
            &Matrix::from_element(1, 1, -2.0),
        )
        .unwrap();
        assert_eq!(s[(0, 0)], -6.0);

        let ones = Matrix::from_element(3, 2, 1.0);
        let kr = khatri_rao(&a, &ones).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(kr.row(i * 3 + j), a.row(i));
            }
        }
        assert!(khatri_rao(&a, &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn mode_multiply_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = DenseTensor::gaussian(&[3, 4, 2], &mut rng);
        let eyes: Vec<Matrix> = t.dims().iter().map(|&d| Matrix::identity(d, d)).collect();
        let refs: Vec<&Matrix> = eyes.iter().collect();
        assert_eq!(t.mode_multiply(&refs).unwrap(), t);

        // row selector on mode 0 extracts the slice i = 1
        let mut sel = Matrix::zeros(1, 3);
        sel[(0, 1)] = 1.0;
        let slice = t.mode_multiply(&[&sel, &eyes[1], &eyes[2]]).unwrap();
        for j in 0..4 {
            for l in 0..2 {
                assert_eq!(slice.get(&[0, j, l]), t.get(&[1, j, l]));
            }
        }

        let bad = Matrix::zeros(2, 5);
        assert!(t.mode_multiply(&[&bad, &eyes[1], &eyes[2]]).is_err());
    }

    #[test]
    fn mode_multiply_two_routes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = random_kruskal(&mut rng, &[4, 3, 5], 3);
        let ms: Vec<Matrix> = [(2, 4), (6, 3), (3, 5)]
            .iter()
            .map(|&(r, c)| random_matrix(&mut rng, r, c))
            .collect();
        let refs: Vec<&Matrix> = ms.iter().collect();
        let dense_route = k.to_dense().mode_multiply(&refs).unwrap();
        let factor_route = k.mode_multiply(&refs).unwrap().to_dense();
        let err = dense_route.sub(&factor_route).unwrap().frobenius();
        assert!(err <= 1e-12 * factor_route.frobenius().max(1.0), "{err}");
    }

    #[test]
    fn norms_basic() {
        let z = DenseTensor::zeros(&[2, 2, 2]);
        assert_eq!((z.frobenius(), z.sum_norm(), z.max_norm()), (0.0, 0.0, 0.0));
        let mut t = DenseTensor::zeros(&[2, 2, 2]);
        t.set(&[1, 0, 1], -3.0);
        assert_eq!((t.frobenius(), t.sum_norm(), t.max_norm()), (3.0, 3.0, 3.0));
        assert!(t.inner(&DenseTensor::zeros(&[2, 2])).is_err());
    }

    #[test]
    fn spectral_rank_one_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_unit(4, &mut rng);
        let v = random_unit(3, &mut rng);
        let w = random_unit(5, &mut rng);
        let t = DenseTensor::rank_one(&[&u, &v, &w]).scale(5.0);
        assert!((spectral_norm_estimate(&t, 4, 200, 1) - 5.0).abs() < 1e-8);
        assert_eq!(
            spectral_norm_estimate(&DenseTensor::zeros(&[3, 3, 3]), 4, 50, 1),
            0.0
        );
    }

    #[test]
    fn power_iteration_trace_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let t = DenseTensor::gaussian(&[5, 6, 4], &mut rng);
        let start: Vec<Vector> = t.dims().iter().map(|&d| random_unit(d, &mut rng)).collect();
        let fit = rank_one_power_iteration(&t, start, 300, 0.0);
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn atomic_surrogate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cols: Vec<Matrix> = [3, 4, 2]
            .iter()
            .map(|&d| Matrix::from_column_slice(d, 1, random_unit(d, &mut rng).as_slice()))
            .collect();
        let k = KruskalTensor::with_weights(Vector::from_element(1, 2.5), cols).unwrap();
        assert!((k.atomic_norm_surrogate() - 2.5).abs() < 1e-12);
        for _ in 0..10 {
            let k = random_kruskal(&mut rng, &[4, 5, 3], 3);
            assert!(k.to_dense().frobenius() <= k.atomic_norm_surrogate() + 1e-8);
        }
    }

    #[test]
    fn normalized_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = random_kruskal(&mut rng, &[4, 5, 3], 3);
        let n = k.normalized();
        assert!(
            n.to_dense().sub(&k.to_dense()).unwrap().frobenius() < 1e-12 * k.to_dense().frobenius()
        );
        assert!((n.atomic_norm_surrogate() - k.atomic_norm_surrogate()).abs() < 1e-12);
    }

    #[test]
    fn tucker_rank_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let k = random_kruskal(&mut rng, &[5, 6, 7], 1);
        assert_eq!(
            tucker_rank(&k.to_dense(), 1e-8).unwrap().ranks,
            vec![1, 1, 1]
        );
        let z = tucker_rank(&DenseTensor::zeros(&[3, 3, 3]), 1e-8).unwrap();
        assert_eq!(z.ranks, vec![0, 0, 0]);
        assert_eq!(z.r_bar, Some(0.0));
        assert!(tucker_rank(&z_tensor(), 0.0).is_err());
    }

    fn z_tensor() -> DenseTensor {
        DenseTensor::zeros(&[2, 2, 2])
    }

    #[test]
    fn r_bar_formula() {
        assert!((r_bar([7, 7, 7], [3, 3, 3]) - 3.0).abs() < 1e-12);
        assert!((r_bar([5, 6, 7], [2, 3, 4]) - (150.0f64 / 18.0).sqrt()).abs() < 1e-12);
        assert!((r_bar([5, 6, 7], [2, 3, 4]) - 2.886751).abs() < 1e-6);
        assert_eq!(r_bar([4, 5, 6], [0, 0, 0]), 0.0);
    }

    #[test]
    fn from_vec_rejects_bad_input() {
        assert!(DenseTensor::from_vec(&[2, 2], vec![0.0; 3]).is_err());
        assert!(DenseTensor::from_vec(&[1], vec![f64::NAN]).is_err());
        assert!(DenseTensor::from_vec(&[0, 2], vec![]).is_err());
    }
}
