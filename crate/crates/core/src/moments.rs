//! Method-of-moments topic models.
//!
//! Under latent Dirichlet allocation with topic matrix `Φ = [ν_1 … ν_K]` and
//! Dirichlet parameter `β` (`β0 = Σ β_i`), the centered word moments are
//!
//! ```text
//! M2 = Σ_i β_i / ((β0 + 1) β0) ν_i ⊗ ν_i
//! M3 = Σ_i 2β_i / ((β0 + 2)(β0 + 1) β0) ν_i ⊗ ν_i ⊗ ν_i
//! ```
//!
//! so the topics are the rank-one terms of a symmetric decomposition of `M3`.
//! The pipeline estimates the moments from a corpus, projects `M3` onto the
//! leading `K'`-dimensional eigenspace of `M2`, decomposes the small tensor
//! with the symmetric solver, and maps the terms back to the simplex.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use rayon::prelude::*;

use crate::error::{arg_err, dim_err, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::solver::{symmetric_solve, SolveReport, SolverConfig};
use crate::tensor::DenseTensor;

/// Documents per parallel accumulation chunk. Partial sums are combined in
/// chunk order, so results do not depend on the thread count.
const CHUNK: usize = 2048;

/// Largest `d³` the dense third-moment estimator will allocate.
const MAX_DENSE_ENTRIES: usize = 1 << 27;

/// Bag-of-words documents over a vocabulary `0..vocab_size`.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    vocab_size: usize,
    docs: Vec<Vec<(usize, u32)>>,
}

impl Corpus {
    /// Builds a corpus; repeated ids in a document are merged and zero counts dropped.
    pub fn new(vocab_size: usize, docs: Vec<Vec<(usize, u32)>>) -> Result<Self> {
        let mut clean = Vec::with_capacity(docs.len());
        for (n, doc) in docs.into_iter().enumerate() {
            let mut merged = BTreeMap::new();
            for (w, c) in doc {
                if w >= vocab_size {
                    return Err(dim_err(format!(
                        "document {n}: word id {w} outside vocabulary of {vocab_size}"
                    )));
                }
                if c > 0 {
                    *merged.entry(w).or_insert(0u32) += c;
                }
            }
            clean.push(merged.into_iter().collect());
        }
        Ok(Self {
            vocab_size,
            docs: clean,
        })
    }

    /// Reads one document per line as space-separated `wordId:count` pairs.
    /// A blank line is an empty document. Without `vocab_size` the vocabulary
    /// is `0..=max id`.
    pub fn parse<R: BufRead>(reader: R, vocab_size: Option<usize>) -> Result<Self> {
        let mut docs = Vec::new();
        let mut max_id = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let mut doc = Vec::new();
            for tok in line.split_whitespace() {
                let bad = |message: String| Error::Parse {
                    line: lineno,
                    message,
                };
                let (w, c) = tok
                    .split_once(':')
                    .ok_or_else(|| bad(format!("expected wordId:count, got {tok:?}")))?;
                let w: usize = w.parse().map_err(|_| bad(format!("bad word id {w:?}")))?;
                let c: u32 = c.parse().map_err(|_| bad(format!("bad count {c:?}")))?;
                if let Some(d) = vocab_size {
                    if w >= d {
                        return Err(bad(format!("word id {w} outside vocabulary of {d}")));
                    }
                }
                max_id = max_id.max(Some(w));
                doc.push((w, c));
            }
            docs.push(doc);
        }
        let d = vocab_size.unwrap_or(max_id.map_or(0, |m| m + 1));
        Self::new(d, docs)
    }

    pub fn load(path: impl AsRef<Path>, vocab_size: Option<usize>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(f), vocab_size)
    }

    /// Writes the line format read by [`Corpus::parse`].
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for doc in &self.docs {
            let line: Vec<String> = doc.iter().map(|(id, c)| format!("{id}:{c}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn docs(&self) -> &[Vec<(usize, u32)>] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn total_tokens(&self) -> u64 {
        self.docs.iter().flatten().map(|&(_, c)| c as u64).sum()
    }
}

fn doc_len(doc: &[(usize, u32)]) -> u64 {
    doc.iter().map(|&(_, c)| c as u64).sum()
}

/// Reads a vocabulary file: the word on line `i` has id `i`.
pub fn read_vocab<R: BufRead>(reader: R) -> Result<Vec<String>> {
    Ok(reader
        .lines()
        .map(|l| l.map(|s| s.trim().to_string()))
        .collect::<std::io::Result<_>>()?)
}

/// Centered moments of a corpus or of a model.
#[derive(Clone, Debug)]
pub struct LdaMoments {
    pub m1: Vector,
    pub m2: Matrix,
    pub m3: DenseTensor,
    pub beta0: f64,
    /// Documents that contributed (at least three tokens).
    pub docs_used: usize,
    /// Documents skipped for having fewer than three tokens.
    pub docs_skipped: usize,
}

/// Raw moment sums over a set of documents.
struct RawSums {
    e1: Vec<f64>,
    e2: Vec<f64>,
    e3: Vec<f64>,
    used: usize,
}

impl RawSums {
    fn zeros(d: usize, third: usize) -> Self {
        Self {
            e1: vec![0.0; d],
            e2: vec![0.0; d * d],
            e3: vec![0.0; third],
            used: 0,
        }
    }

    fn absorb(&mut self, other: &Self) {
        for (a, b) in [
            (&mut self.e1, &other.e1),
            (&mut self.e2, &other.e2),
            (&mut self.e3, &other.e3),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.used += other.used;
    }
}

/// Adds one document's unbiased first and second moment estimates. Every
/// numerator is an exact integer, so symmetric entries receive identical values.
fn add_pairs(acc: &mut RawSums, d: usize, doc: &[(usize, u32)], l: f64) {
    let den2 = l * (l - 1.0);
    for &(i, ci) in doc {
        let ci = ci as f64;
        acc.e1[i] += ci / l;
        for &(j, cj) in doc {
            let num = ci * cj as f64 - if i == j { ci } else { 0.0 };
            acc.e2[i + d * j] += num / den2;
        }
    }
}

/// Within-document estimate of `E[w1 ⊗ w2 ⊗ w3]` entry numerator for count
/// vector `c` at positions with counts `(cp, cq, cr)`.
fn triple_numerator(p: usize, q: usize, r: usize, cp: f64, cq: f64, cr: f64) -> f64 {
    let mut num = cp * cq * cr;
    if p == q {
        num -= cp * cr;
    }
    if p == r {
        num -= cp * cq;
    }
    if q == r {
        num -= cp * cq;
    }
    if p == q && q == r {
        num += 2.0 * cp;
    }
    num
}

fn accumulate<F>(c: &Corpus, third: usize, add_third: F) -> (RawSums, usize)
where
    F: Fn(&mut RawSums, &[(usize, u32)], f64) + Sync,
{
    let d = c.vocab_size;
    let partials: Vec<RawSums> = c
        .docs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = RawSums::zeros(d, third);
            for doc in chunk {
                let l = doc_len(doc);
                if l < 3 {
                    continue;
                }
                let l = l as f64;
                add_pairs(&mut acc, d, doc, l);
                add_third(&mut acc, doc, l);
                acc.used += 1;
            }
            acc
        })
        .collect();
    let mut total = RawSums::zeros(d, third);
    for p in &partials {
        total.absorb(p);
    }
    let skipped = c.docs.len() - total.used;
    if total.used > 0 {
        let n = total.used as f64;
        for v in [&mut total.e1, &mut total.e2, &mut total.e3] {
            v.iter_mut().for_each(|x| *x /= n);
        }
    }
    (total, skipped)
}

fn check_beta0(beta0: f64) -> Result<()> {
    if !(beta0 > 0.0 && beta0.is_finite()) {
        return Err(arg_err("beta0 must be positive"));
    }
    Ok(())
}

/// Applies the centering that turns raw moments `E[w1]`, `E[w1 ⊗ w2]`,
/// `E[w1 ⊗ w2 ⊗ w3]` into `M1`, `M2`, `M3`. Each `M3` entry is computed once
/// at its sorted index and copied to all permutations.
pub(crate) fn center_moments(
    e1: &Vector,
    e2: &Matrix,
    e3: &DenseTensor,
    beta0: f64,
) -> (Matrix, DenseTensor) {
    let d = e1.len();
    let c2 = beta0 / (beta0 + 1.0);
    let m2 = Matrix::from_fn(d, d, |i, j| e2[(i, j)] - c2 * (e1[i] * e1[j]));
    let a = beta0 / (beta0 + 2.0);
    let b = 2.0 * beta0 * beta0 / ((beta0 + 2.0) * (beta0 + 1.0));
    let mut m3 = DenseTensor::zeros(&[d, d, d]);
    for i in 0..d {
        for j in i..d {
            for k in j..d {
                let v = e3.get(&[i, j, k])
                    - a * (e2[(i, j)] * e1[k] + e2[(i, k)] * e1[j] + e2[(j, k)] * e1[i])
                    + b * (e1[i] * e1[j] * e1[k]);
                for idx in [
                    [i, j, k],
                    [i, k, j],
                    [j, i, k],
                    [j, k, i],
                    [k, i, j],
                    [k, j, i],
                ] {
                    m3.set(&idx, v);
                }
            }
        }
    }
    (m2, m3)
}

/// Empirical centered moments from within-document count statistics.
/// Documents with fewer than three tokens are skipped and counted.
pub fn estimate_moments(c: &Corpus, beta0: f64) -> Result<LdaMoments> {
    check_beta0(beta0)?;
    let d = c.vocab_size;
    let third = d
        .checked_pow(3)
        .filter(|&n| n <= MAX_DENSE_ENTRIES)
        .ok_or_else(|| {
            arg_err(format!(
                "a dense third moment over {d} words is too large; use estimate_reduced_moments"
            ))
        })?;
    let (raw, skipped) = accumulate(c, third, |acc, doc, l| {
        let den3 = l * (l - 1.0) * (l - 2.0);
        for &(p, cp) in doc {
            for &(q, cq) in doc {
                for &(r, cr) in doc {
                    let num = triple_numerator(p, q, r, cp as f64, cq as f64, cr as f64);
                    acc.e3[p + d * (q + d * r)] += num / den3;
                }
            }
        }
    });
    let e1 = Vector::from_vec(raw.e1);
    let e2 = Matrix::from_vec(d, d, raw.e2);
    let e3 = DenseTensor::from_vec(&[d, d, d], raw.e3)?;
    let (m2, m3) = center_moments(&e1, &e2, &e3, beta0);
    Ok(LdaMoments {
        m1: e1,
        m2,
        m3,
        beta0,
        docs_used: raw.used,
        docs_skipped: skipped,
    })
}

/// `M1` and `M2` alone, with the used and skipped document counts.
pub fn estimate_second_moment(c: &Corpus, beta0: f64) -> Result<(Vector, Matrix, usize, usize)> {
    check_beta0(beta0)?;
    let d = c.vocab_size;
    let (raw, skipped) = accumulate(c, 0, |_, _, _| {});
    let e1 = Vector::from_vec(raw.e1);
    let c2 = beta0 / (beta0 + 1.0);
    let m2 = Matrix::from_fn(d, d, |i, j| raw.e2[i + d * j] - c2 * (e1[i] * e1[j]));
    Ok((e1, m2, raw.used, skipped))
}

/// First two centered moments plus `(Q, Q, Q) · M3`, without forming the
/// `d × d × d` tensor. `q` is `K' × d`.
#[derive(Clone, Debug)]
pub struct ReducedMoments {
    pub m1: Vector,
    pub m2: Matrix,
    pub m3_reduced: DenseTensor,
    pub docs_used: usize,
    pub docs_skipped: usize,
}

/// Streaming version of [`estimate_moments`] followed by [`reduce_m3`]; cost
/// per document is `O(nnz · K'³)`.
pub fn estimate_reduced_moments(c: &Corpus, beta0: f64, q: &Matrix) -> Result<ReducedMoments> {
    check_beta0(beta0)?;
    let d = c.vocab_size;
    if q.ncols() != d {
        return Err(dim_err(format!(
            "reduction has {} columns, vocabulary {d}",
            q.ncols()
        )));
    }
    let k = q.nrows();
    let (raw, skipped) = accumulate(c, k * k * k, |acc, doc, l| {
        let den3 = l * (l - 1.0) * (l - 2.0);
        let mut y = vec![0.0; k];
        for &(w, cw) in doc {
            for (a, ya) in y.iter_mut().enumerate() {
                *ya += q[(a, w)] * cw as f64;
            }
        }
        let mut add = |u: &[f64], v: &[f64], w: &[f64], s: f64| {
            for (c3, &wc) in w.iter().enumerate() {
                for (b, &vb) in v.iter().enumerate() {
                    let vw = s * vb * wc;
                    let base = k * (b + k * c3);
                    for (a, &ua) in u.iter().enumerate() {
                        acc.e3[a + base] += ua * vw;
                    }
                }
            }
        };
        add(&y, &y, &y, 1.0 / den3);
        for &(w, cw) in doc {
            let qw: Vec<f64> = (0..k).map(|a| q[(a, w)]).collect();
            let cw = cw as f64;
            add(&qw, &qw, &y, -cw / den3);
            add(&qw, &y, &qw, -cw / den3);
            add(&y, &qw, &qw, -cw / den3);
            add(&qw, &qw, &qw, 2.0 * cw / den3);
        }
    });
    let e1 = Vector::from_vec(raw.e1);
    let e2 = Matrix::from_vec(d, d, raw.e2);
    let c2 = beta0 / (beta0 + 1.0);
    let m2 = Matrix::from_fn(d, d, |i, j| e2[(i, j)] - c2 * (e1[i] * e1[j]));
    let qe1 = q * &e1;
    let qe2 = q * &e2 * q.transpose();
    let e3 = DenseTensor::from_vec(&[k, k, k], raw.e3)?;
    let (_, m3_reduced) = center_moments(&qe1, &qe2, &symmetrize(&e3), beta0);
    Ok(ReducedMoments {
        m1: e1,
        m2,
        m3_reduced,
        docs_used: raw.used,
        docs_skipped: skipped,
    })
}

/// Average over the six index permutations of an order-3 cube.
fn symmetrize(t: &DenseTensor) -> DenseTensor {
    let d = t.dims()[0];
    DenseTensor::from_fn(&[d, d, d], |ix| {
        let (i, j, k) = (ix[0], ix[1], ix[2]);
        let mut s = [i, j, k];
        s.sort_unstable();
        let [i, j, k] = s;
        let perms = [
            [i, j, k],
            [i, k, j],
            [j, i, k],
            [j, k, i],
            [k, i, j],
            [k, j, i],
        ];
        perms.iter().map(|p| t.get(p)).sum::<f64>() / 6.0
    })
}

/// Moments implied by a topic matrix (`d × K`, columns on the simplex) and
/// Dirichlet parameter `beta`.
pub fn population_moments(phi: &Matrix, beta: &[f64]) -> Result<LdaMoments> {
    if beta.len() != phi.ncols() {
        return Err(dim_err(format!(
            "{} Dirichlet parameters for {} topics",
            beta.len(),
            phi.ncols()
        )));
    }
    if beta.iter().any(|&b| !(b > 0.0)) {
        return Err(arg_err("Dirichlet parameters must be positive"));
    }
    let b0: f64 = beta.iter().sum();
    let d = phi.nrows();
    let m1 = phi * Vector::from_column_slice(beta) / b0;
    let mut m2 = Matrix::zeros(d, d);
    let mut m3 = DenseTensor::zeros(&[d, d, d]);
    for (i, &b) in beta.iter().enumerate() {
        let nu = phi.column(i).into_owned();
        m2 += &nu * nu.transpose() * (b / ((b0 + 1.0) * b0));
        let w = 2.0 * b / ((b0 + 2.0) * (b0 + 1.0) * b0);
        m3 = m3.add(&DenseTensor::rank_one(&[&nu, &nu, &nu]).scale(w))?;
    }
    Ok(LdaMoments {
        m1,
        m2,
        m3,
        beta0: b0,
        docs_used: 0,
        docs_skipped: 0,
    })
}

/// Draws `n_docs` documents of `doc_len` words each: a mixture
/// `h ~ Dir(β)` (normalized Gamma draws) per document, then words i.i.d. from
/// `Φ h`. Document `i` uses its own stream of the seeded generator.
pub fn sample_lda_corpus(
    phi: &Matrix,
    beta: &[f64],
    n_docs: usize,
    doc_len: usize,
    seed: u64,
) -> Result<Corpus> {
    let k = phi.ncols();
    if beta.len() != k || k == 0 {
        return Err(dim_err(format!(
            "{} Dirichlet parameters for {k} topics",
            beta.len()
        )));
    }
    let gammas = beta
        .iter()
        .map(|&b| Gamma::new(b, 1.0).map_err(|e| arg_err(format!("Dirichlet parameter {b}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if phi.iter().any(|&p| !(p >= 0.0)) {
        return Err(arg_err("topic entries must be nonnegative"));
    }
    let docs = (0..n_docs)
        .into_par_iter()
        .map(|n| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(n as u64);
            let mut h: Vec<f64> = gammas.iter().map(|g| g.sample(&mut rng)).collect();
            let s: f64 = h.iter().sum();
            if s > 0.0 {
                h.iter_mut().for_each(|x| *x /= s);
            } else {
                let pick = rng.random_range(0..k);
                h.iter_mut()
                    .enumerate()
                    .for_each(|(i, x)| *x = if i == pick { 1.0 } else { 0.0 });
            }
            let p = phi * Vector::from_vec(h);
            let dist = WeightedIndex::new(p.iter().copied())
                .map_err(|e| arg_err(format!("word distribution: {e}")))?;
            let mut counts = BTreeMap::new();
            for _ in 0..doc_len {
                *counts.entry(dist.sample(&mut rng)).or_insert(0u32) += 1;
            }
            Ok(counts.into_iter().collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(phi.nrows(), docs)
}

fn top_eigen(m2: &Matrix, k: usize) -> Result<(Matrix, Vec<f64>)> {
    let (d, c) = m2.shape();
    if d != c {
        return Err(dim_err(format!("second moment is {d}x{c}")));
    }
    if k == 0 || k > d {
        return Err(arg_err(format!(
            "reduced dimension {k} must lie in 1..={d}"
        )));
    }
    let dec = linalg::svd(m2)?;
    Ok((
        dec.leading_left(k),
        dec.singular_values.iter().take(k).copied().collect(),
    ))
}

/// `W = Σ_k^{-1/2} U_kᵀ` from the top-`k` singular pairs of `M2`, so that
/// `W M2 Wᵀ = I_k`.
pub fn whitening_matrix(m2: &Matrix, k: usize) -> Result<Matrix> {
    let (u, s) = top_eigen(m2, k)?;
    let tol = s[0] * m2.nrows() as f64 * f64::EPSILON * 16.0;
    if s[0] <= 0.0 || s[k - 1] <= tol {
        return Err(Error::Numerical(format!(
            "second moment has rank below {k}"
        )));
    }
    let mut w = u.transpose();
    for (r, &sv) in s.iter().enumerate() {
        w.row_mut(r).scale_mut(1.0 / sv.sqrt());
    }
    Ok(w)
}

/// `Q = U_{k'}ᵀ`, the top-`k'` left singular vectors of `M2` as rows. Its
/// rows are orthonormal and `Qᵀ` maps reduced vectors back.
pub fn reduction_matrix(m2: &Matrix, k_prime: usize) -> Result<Matrix> {
    Ok(top_eigen(m2, k_prime)?.0.transpose())
}

/// `(Q, Q, Q) · M3`.
pub fn reduce_m3(m3: &DenseTensor, q: &Matrix) -> Result<DenseTensor> {
    if m3.order() != 3 || m3.dims().iter().any(|&d| d != q.ncols()) {
        return Err(dim_err(format!(
            "cannot reduce {:?} with a {}x{} map",
            m3.dims(),
            q.nrows(),
            q.ncols()
        )));
    }
    m3.mode_multiply(&[q, q, q])
}

/// Smallest `K' ≥ k_topics` with
/// `k_topics ≤ ρ_r ((K'³ − m) / (3K' log(K'³ − m) α0⁴ μ0²))^{1/2}`, scanning
/// up to `vocab_size`.
pub fn oversample_k(
    k_topics: usize,
    m: usize,
    mu0: f64,
    alpha0: f64,
    rho_r: f64,
    vocab_size: usize,
) -> Result<usize> {
    if k_topics == 0 || !(mu0 > 0.0 && alpha0 > 0.0 && rho_r > 0.0) {
        return Err(arg_err(
            "oversampling needs positive topic count and constants",
        ));
    }
    (k_topics..=vocab_size)
        .find(|&kp| oversample_ok(k_topics, m, mu0, alpha0, rho_r, kp))
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "no reduced dimension up to {vocab_size} supports {k_topics} topics"
            ))
        })
}

fn oversample_ok(k_topics: usize, m: usize, mu0: f64, alpha0: f64, rho_r: f64, kp: usize) -> bool {
    let n = (kp as f64).powi(3) - m as f64;
    if n <= 1.0 {
        return false;
    }
    let bound = rho_r * (n / (3.0 * kp as f64 * n.ln() * alpha0.powi(4) * mu0 * mu0)).sqrt();
    k_topics as f64 <= bound
}

/// Topic distributions (columns of a `d × K` matrix) and their weights in `M3`.
#[derive(Clone, Debug, PartialEq)]
pub struct TopicModel {
    topics: Matrix,
    weights: Vec<f64>,
}

impl TopicModel {
    /// Columns must be nonnegative and sum to one within `1e-8`.
    pub fn new(topics: Matrix, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != topics.ncols() {
            return Err(dim_err(format!(
                "{} weights for {} topics",
                weights.len(),
                topics.ncols()
            )));
        }
        if topics.iter().any(|&p| !(p >= 0.0)) {
            return Err(arg_err("topic entries must be nonnegative"));
        }
        for (k, col) in topics.column_iter().enumerate() {
            if (col.sum() - 1.0).abs() > 1e-8 {
                return Err(arg_err(format!("topic {k} sums to {}", col.sum())));
            }
        }
        Ok(Self { topics, weights })
    }

    pub fn topics(&self) -> &Matrix {
        &self.topics
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_topics(&self) -> usize {
        self.topics.ncols()
    }

    pub fn vocab_size(&self) -> usize {
        self.topics.nrows()
    }

    /// Multiplies every weight by `s`.
    pub fn scale_weights(&mut self, s: f64) {
        self.weights.iter_mut().for_each(|w| *w *= s);
    }

    /// Word ids of the `n` most probable words of each topic.
    pub fn top_words(&self, n: usize) -> Vec<Vec<usize>> {
        self.topics
            .column_iter()
            .map(|col| {
                let mut ids: Vec<usize> = (0..col.len()).collect();
                ids.sort_by(|&a, &b| col[b].total_cmp(&col[a]).then(a.cmp(&b)));
                ids.truncate(n);
                ids
            })
            .collect()
    }

    /// CSV with a `word` column (vocabulary entry or id) and one column per
    /// topic, preceded by a `weight` row.
    pub fn write_csv<W: Write>(&self, w: W, vocab: Option<&[String]>) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["word".to_string()];
        header.extend((0..self.num_topics()).map(|k| format!("topic_{k}")));
        wr.write_record(&header)?;
        let mut row = vec!["weight".to_string()];
        row.extend(self.weights.iter().map(|w| format!("{w:e}")));
        wr.write_record(&row)?;
        for i in 0..self.vocab_size() {
            let name = vocab
                .and_then(|v| v.get(i))
                .cloned()
                .unwrap_or_else(|| i.to_string());
            let mut row = vec![name];
            row.extend(self.topics.row(i).iter().map(|p| format!("{p:e}")));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Maps the terms of a symmetric solve on a reduced tensor back to topics.
///
/// Term `r` with shared factor `a_r` contributes `a_r^{⊗3}`; its back-mapped
/// vector `v = Qᵀ a_r` equals `s ν` for a topic `ν` on the simplex with
/// `s = Σ v`, so the weight of `ν^{⊗3}` is `s³`. The `k_topics` terms with
/// the largest weights are kept, negative entries clipped, and each column
/// renormalized.
pub fn recover_topics(report: &SolveReport, q: &Matrix, k_topics: usize) -> Result<TopicModel> {
    let a = report
        .factors
        .factors()
        .first()
        .ok_or_else(|| arg_err("solve report has no factors"))?;
    if a.nrows() != q.nrows() {
        return Err(dim_err(format!(
            "factors have {} rows, reduction {}",
            a.nrows(),
            q.nrows()
        )));
    }
    let back = q.transpose() * a;
    let max_norm = back.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut terms: Vec<(f64, usize)> = back
        .column_iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > 1e-6 * max_norm && c.sum() > 0.0)
        .map(|(r, c)| (c.sum().powi(3), r))
        .collect();
    if terms.len() < k_topics || k_topics == 0 {
        return Err(Error::Infeasible(format!(
            "{} usable terms for {k_topics} topics",
            terms.len()
        )));
    }
    terms.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    terms.truncate(k_topics);
    let d = q.ncols();
    let mut topics = Matrix::zeros(d, k_topics);
    let mut weights = Vec::with_capacity(k_topics);
    for (col, &(w, r)) in terms.iter().enumerate() {
        let clipped = back.column(r).map(|x| x.max(0.0));
        topics.set_column(col, &(&clipped / clipped.sum()));
        weights.push(w);
    }
    TopicModel::new(topics, weights)
}

/// Pairs estimated topics with reference topics to maximize the smallest
/// cosine similarity, by exhaustive search over permutations (at most 8
/// topics). Returns `perm` with `est` column `perm[k]` matched to `truth`
/// column `k`, and that smallest cosine.
pub fn match_topics(est: &Matrix, truth: &Matrix) -> Result<(Vec<usize>, f64)> {
    let k = truth.ncols();
    if est.ncols() != k || est.nrows() != truth.nrows() {
        return Err(dim_err("topic matrices differ in shape"));
    }
    if k > 8 {
        return Err(arg_err("exhaustive matching supports at most 8 topics"));
    }
    let cos = Matrix::from_fn(k, k, |i, j| {
        let (a, b) = (est.column(i), truth.column(j));
        a.dot(&b) / (a.norm() * b.norm()).max(f64::MIN_POSITIVE)
    });
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    let mut perm: Vec<usize> = (0..k).collect();
    permute(&mut perm, 0, &mut |p| {
        let worst = p
            .iter()
            .enumerate()
            .map(|(j, &i)| cos[(i, j)])
            .fold(f64::INFINITY, f64::min);
        if worst > best.1 {
            best = (p.to_vec(), worst);
        }
    });
    Ok(best)
}

fn permute(p: &mut [usize], start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == p.len() {
        visit(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permute(p, start + 1, visit);
        p.swap(start, i);
    }
}

/// Held-out likelihood summary.
#[derive(Clone, Debug, PartialEq)]
pub struct PerplexityReport {
    /// `exp(−L / d)` with `d` the vocabulary size.
    pub perplexity: f64,
    /// Total log-likelihood `L` of the scored words.
    pub log_likelihood: f64,
    pub tokens: u64,
    /// Tokens whose word id lies outside the model's vocabulary.
    pub ignored_tokens: u64,
}

/// Fold-in iterations per held-out document.
pub const FOLD_IN_ITERS: usize = 50;

/// Word probabilities are floored here so a word missing from every clipped
/// topic does not make the likelihood `−∞`.
pub const PROB_FLOOR: f64 = 1e-12;

/// Perplexity of `test` under the model. Each document's mixture `θ` is
/// fitted by [`FOLD_IN_ITERS`] EM steps `θ_k ∝ α + Σ_w c_w θ_k Φ_wk / (Φθ)_w`
/// from the uniform mixture, then contributes `Σ_w c_w log (Φθ)_w`.
pub fn perplexity(test: &Corpus, phi: &TopicModel, alpha: f64) -> Result<PerplexityReport> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(arg_err("alpha must be finite and nonnegative"));
    }
    let d = phi.vocab_size();
    let k = phi.num_topics();
    let t = phi.topics();
    let per_doc: Vec<(f64, u64, u64)> = test
        .docs
        .par_iter()
        .map(|doc| {
            let words: Vec<(usize, f64)> = doc
                .iter()
                .filter(|&&(w, _)| w < d)
                .map(|&(w, c)| (w, c as f64))
                .collect();
            let ignored: u64 = doc
                .iter()
                .filter(|&&(w, _)| w >= d)
                .map(|&(_, c)| c as u64)
                .sum();
            let tokens: u64 = words.iter().map(|&(_, c)| c as u64).sum();
            let mut theta = vec![1.0 / k as f64; k];
            let mix = |theta: &[f64], w: usize| {
                (0..k)
                    .map(|j| theta[j] * t[(w, j)])
                    .sum::<f64>()
                    .max(PROB_FLOOR)
            };
            for _ in 0..FOLD_IN_ITERS {
                let mut next = vec![alpha; k];
                for &(w, c) in &words {
                    let p = mix(&theta, w);
                    for j in 0..k {
                        next[j] += c * theta[j] * t[(w, j)] / p;
                    }
                }
                let s: f64 = next.iter().sum();
                if s > 0.0 {
                    theta = next.into_iter().map(|x| x / s).collect();
                }
            }
            let ll: f64 = words.iter().map(|&(w, c)| c * mix(&theta, w).ln()).sum();
            (ll, tokens, ignored)
        })
        .collect();
    let log_likelihood: f64 = per_doc.iter().map(|x| x.0).sum();
    Ok(PerplexityReport {
        perplexity: (-log_likelihood / d as f64).exp(),
        log_likelihood,
        tokens: per_doc.iter().map(|x| x.1).sum(),
        ignored_tokens: per_doc.iter().map(|x| x.2).sum(),
    })
}

/// Default iteration cap of the reduced symmetric solve. The weak regularizer
/// leaves flat directions, so convergence takes thousands of cheap steps.
pub const LDA_MAX_ITERS: usize = 10_000;

/// Default number of seeded starts of the decomposition. Single starts
/// occasionally stall in a local minimum where spare terms fit sampling noise.
pub const LDA_RESTARTS: usize = 4;

/// End-to-end settings for [`fit_lda`].
#[derive(Clone, Debug)]
pub struct LdaConfig {
    pub topics: usize,
    /// Reduced dimension `K'`; `None` uses `min(2K, d)`.
    pub k_prime: Option<usize>,
    pub beta0: f64,
    /// Solver settings; the rank bound defaults to `K'` when zero. The
    /// reduced tensor is scaled to unit Frobenius norm before solving, so the
    /// weights here are relative to that scale.
    pub solver: SolverConfig,
    /// Independent starts, seeded `solver.seed, solver.seed + 1, …`; the
    /// solve with the lowest objective is kept.
    pub restarts: usize,
}

impl LdaConfig {
    pub fn new(topics: usize) -> Self {
        Self {
            topics,
            k_prime: None,
            beta0: 1.0,
            solver: SolverConfig {
                rank_bound: 0,
                lambda_x: 1e-8,
                lambda_s: 1e-3,
                max_iters: LDA_MAX_ITERS,
                ..SolverConfig::default()
            },
            restarts: LDA_RESTARTS,
        }
    }
}

/// Everything produced by [`fit_lda`].
#[derive(Clone, Debug)]
pub struct LdaFit {
    pub model: TopicModel,
    /// The `K' × d` reduction.
    pub reduction: Matrix,
    /// `(Q, Q, Q) · M3` before scaling.
    pub reduced_m3: DenseTensor,
    pub report: SolveReport,
    pub docs_used: usize,
    pub docs_skipped: usize,
}

/// Estimates moments, reduces, decomposes and recovers topics.
pub fn fit_lda(c: &Corpus, cfg: &LdaConfig) -> Result<LdaFit> {
    let d = c.vocab_size();
    if cfg.topics == 0 || cfg.topics > d {
        return Err(arg_err(format!(
            "topic count {} must lie in 1..={d}",
            cfg.topics
        )));
    }
    let kp = cfg.k_prime.unwrap_or((2 * cfg.topics).min(d));
    if kp < cfg.topics || kp > d {
        return Err(arg_err(format!(
            "reduced dimension {kp} must lie in {}..={d}",
            cfg.topics
        )));
    }
    check_beta0(cfg.beta0)?;
    if cfg.restarts == 0 {
        return Err(arg_err("need at least one start"));
    }
    // the reduction needs only M2, so estimate it first and stream M3
    let (_, m2, used, _) = estimate_second_moment(c, cfg.beta0)?;
    if used == 0 {
        return Err(Error::Infeasible(
            "no document has three or more tokens".into(),
        ));
    }
    let q = reduction_matrix(&m2, kp)?;
    let red = estimate_reduced_moments(c, cfg.beta0, &q)?;
    let scale = red.m3_reduced.frobenius();
    if !(scale > 0.0) {
        return Err(Error::Numerical("reduced third moment vanishes".into()));
    }
    let mut solver = cfg.solver.clone();
    if solver.rank_bound == 0 {
        solver.rank_bound = kp;
    }
    let target = red.m3_reduced.scale(1.0 / scale);
    let mut best: Option<SolveReport> = None;
    for i in 0..cfg.restarts {
        let rep = symmetric_solve(
            &target,
            &SolverConfig {
                seed: solver.seed.wrapping_add(i as u64),
                ..solver.clone()
            },
        )?;
        if best.as_ref().is_none_or(|b| rep.objective < b.objective) {
            best = Some(rep);
        }
    }
    let report = best.expect("at least one start");
    let mut model = recover_topics(&report, &q, cfg.topics)?;
    model.scale_weights(scale);
    Ok(LdaFit {
        model,
        reduction: q,
        reduced_m3: red.m3_reduced,
        report,
        docs_used: red.docs_used,
        docs_skipped: red.docs_skipped,
    })
}
