//! Synthetic recovery experiments.
//!
//! An instance is `Z = X + S` with `X = Σ_r a_r ⊗ b_r ⊗ c_r` built from
//! standard normal factors and `S` supported on a uniformly random set of `m`
//! entries with standard normal values. A phase grid runs many seeded
//! instances per (rank, sparsity) cell through one recovery method and counts
//! the trials whose relative error falls below [`RECOVERY_TOL`].

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analysis::SupportSet;
use crate::baselines::{self, AdmmConfig, ConstrainedConfig, LevelSetConfig};
use crate::error::{arg_err, dim_err, Error, Result};
use crate::linalg::Matrix;
use crate::solver::{lbfgs_solve, SolverConfig};
use crate::tensor::{tucker_rank, DenseTensor, KruskalTensor};

/// Relative error below which a trial counts as exact recovery.
pub const RECOVERY_TOL: f64 = 1e-3;

/// Extra rank-one terms the atomic solver is given beyond the true rank.
pub const RANK_SLACK: usize = 10;

/// Misfit budget `ε` for the matrix baseline.
pub const MATRIX_EPS: f64 = 1e-5;

/// Parameters of one synthetic instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthSpec {
    pub dims: [usize; 3],
    pub r_true: usize,
    /// Number of corrupted entries.
    pub m: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// `20 × 20 × 20` instance.
    pub fn new(r_true: usize, m: usize, seed: u64) -> Self {
        Self {
            dims: [20; 3],
            r_true,
            m,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.r_true == 0 {
            return Err(arg_err("true rank must be at least 1"));
        }
        if self.dims.contains(&0) {
            return Err(arg_err("dimensions must be positive"));
        }
        let n: usize = self.dims.iter().product();
        if self.m > n {
            return Err(arg_err(format!(
                "{} corruptions exceed {n} entries",
                self.m
            )));
        }
        Ok(())
    }
}

/// A generated problem with its ground truth.
#[derive(Clone, Debug)]
pub struct Instance {
    pub factors: KruskalTensor,
    pub lowrank: DenseTensor,
    pub sparse: DenseTensor,
    pub observed: DenseTensor,
    pub support: SupportSet,
}

impl Instance {
    /// `(min(R, d_1), min(R, d_2), min(R, d_3))`, the Tucker rank generic factors produce.
    pub fn expected_tucker_rank(&self) -> [usize; 3] {
        let r = self.factors.rank();
        let d = self.support.dims();
        [r.min(d[0]), r.min(d[1]), r.min(d[2])]
    }

    /// Whether the numerical Tucker rank of `X` equals [`Instance::expected_tucker_rank`].
    pub fn tucker_rank_matches(&self) -> Result<bool> {
        let rep = tucker_rank(&self.lowrank, 1e-10)?;
        Ok(rep.ranks == self.expected_tucker_rank())
    }
}

/// Draws an instance. Factor columns come first, then the support, then the
/// corruption values, all from one seeded stream.
pub fn gen_instance(spec: &SynthSpec) -> Result<Instance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let factors: Vec<Matrix> = spec
        .dims
        .iter()
        .map(|&d| Matrix::from_fn(d, spec.r_true, |_, _| rng.sample(StandardNormal)))
        .collect();
    let factors = KruskalTensor::new(factors)?;
    let lowrank = factors.to_dense();
    let n: usize = spec.dims.iter().product();
    let mut offsets = sample(&mut rng, n, spec.m).into_vec();
    offsets.sort_unstable();
    let mut sparse = DenseTensor::zeros(&spec.dims);
    for &o in &offsets {
        let idx = sparse.index_of(o);
        sparse.set(&idx, rng.sample(StandardNormal));
    }
    let observed = lowrank.add(&sparse)?;
    let support = SupportSet::from_offsets(spec.dims, offsets)?;
    Ok(Instance {
        factors,
        lowrank,
        sparse,
        observed,
        support,
    })
}

/// `‖x̂ − x‖_F / ‖x‖_F`.
pub fn rel_error(x_hat: &DenseTensor, x: &DenseTensor) -> Result<f64> {
    let den = x.frobenius();
    if den == 0.0 {
        return Err(arg_err("relative error against a zero tensor"));
    }
    Ok(x_hat.sub(x)?.frobenius() / den)
}

/// `r (d_1 + … + d_K)`, the parameter count of a rank-`r` CP model.
pub fn degrees_of_freedom(dims: &[usize], r: usize) -> usize {
    r * dims.iter().sum::<usize>()
}

/// Recovery method run on each instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Factored atomic-norm solver with rank bound `R + 10`.
    Atomic,
    /// Matrix RPCA on the mode-0 unfolding with the weight balanced at the truth.
    Matrix,
    /// Sum of nuclear norms of the unfoldings.
    Snn,
    /// ℓ1 fit under Tucker-rank caps `min(R + 1, d_i)`.
    Constrained,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Atomic,
        Method::Matrix,
        Method::Snn,
        Method::Constrained,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Atomic => "atomic",
            Method::Matrix => "matrix",
            Method::Snn => "snn",
            Method::Constrained => "constrained",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                arg_err(format!(
                    "unknown method {s:?}; expected atomic, matrix, snn or constrained"
                ))
            })
    }
}

/// Outcome of a single method run on an instance.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    /// `+∞` when the method failed.
    pub rel_error: f64,
    pub iterations: usize,
    pub seconds: f64,
}

impl TrialOutcome {
    pub fn recovered(&self) -> bool {
        self.rel_error < RECOVERY_TOL
    }
}

/// Runs `method` on an instance with the experiment's fixed parameters.
/// `max_iters` caps the iterations of the atomic solver.
pub fn run_method(method: Method, inst: &Instance, max_iters: usize, seed: u64) -> TrialOutcome {
    let start = Instant::now();
    let r = inst.factors.rank();
    let attempt = || -> Result<(DenseTensor, usize)> {
        let z = &inst.observed;
        match method {
            Method::Atomic => {
                let cfg = SolverConfig {
                    rank_bound: r + RANK_SLACK,
                    max_iters,
                    seed,
                    ..SolverConfig::default()
                };
                let rep = lbfgs_solve(z, &cfg)?;
                Ok((rep.lowrank, rep.iterations))
            }
            Method::Matrix => {
                let lambda =
                    baselines::matrix_rpca_lambda(z, 0, Some((&inst.lowrank, &inst.sparse)))?;
                let res =
                    baselines::matrix_rpca(z, 0, lambda, MATRIX_EPS, &LevelSetConfig::default())?;
                Ok((res.lowrank, res.iterations))
            }
            Method::Snn => {
                let res = baselines::horpca_s(z, &AdmmConfig::default())?;
                Ok((res.lowrank, res.iterations))
            }
            Method::Constrained => {
                let ranks: Vec<usize> = z.dims().iter().map(|&d| (r + 1).min(d)).collect();
                let res = baselines::horpca_c(z, &ranks, &ConstrainedConfig::default())?;
                Ok((res.lowrank, res.iterations))
            }
        }
    };
    let (rel_error, iterations) = match attempt() {
        Ok((x, it)) => match rel_error(&x, &inst.lowrank) {
            Ok(e) if e.is_finite() => (e, it),
            _ => (f64::INFINITY, it),
        },
        Err(_) => (f64::INFINITY, 0),
    };
    TrialOutcome {
        rel_error,
        iterations,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Grid definition.
#[derive(Clone, Debug)]
pub struct PhaseConfig {
    pub dims: [usize; 3],
    pub ranks: Vec<usize>,
    /// Fractions of corrupted entries; `m = round(fraction · d_1 d_2 d_3)`.
    pub sparsities: Vec<f64>,
    pub trials: usize,
    pub method: Method,
    pub base_seed: u64,
    pub max_iters: usize,
}

impl Default for PhaseConfig {
    /// Ranks `1, 3, …, 39`, sparsities `0.025, 0.05, …, 0.40`, 16 trials.
    fn default() -> Self {
        Self {
            dims: [20; 3],
            ranks: (1..=39).step_by(2).collect(),
            sparsities: (1..=16).map(|i| 0.025 * i as f64).collect(),
            trials: 16,
            method: Method::Atomic,
            base_seed: 0,
            max_iters: 1000,
        }
    }
}

impl PhaseConfig {
    fn validate(&self) -> Result<()> {
        if self.ranks.is_empty() || self.sparsities.is_empty() || self.trials == 0 {
            return Err(arg_err(
                "grid needs ranks, sparsities and at least one trial",
            ));
        }
        if self.ranks.contains(&0) {
            return Err(arg_err("ranks must be positive"));
        }
        if self.sparsities.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(arg_err("sparsity fractions must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Corrupted-entry count for a sparsity fraction.
    pub fn support_size(&self, fraction: f64) -> usize {
        let n: usize = self.dims.iter().product();
        ((fraction * n as f64).round() as usize).min(n)
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `t` in cell `(rank_idx, sparsity_idx)`.
pub fn trial_seed(base_seed: u64, rank_idx: usize, sparsity_idx: usize, trial: usize) -> u64 {
    [rank_idx, sparsity_idx, trial]
        .iter()
        .fold(mix(base_seed), |h, &x| mix(h ^ x as u64))
}

/// One row of the per-trial table.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub method: Method,
    pub rank: usize,
    pub sparsity_fraction: f64,
    pub trial: usize,
    pub seed: u64,
    pub rel_error: f64,
    pub recovered: bool,
    pub iterations: usize,
    pub seconds: f64,
}

/// Aggregate of one grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub rank: usize,
    pub sparsity_fraction: f64,
    pub trials: usize,
    pub recovered: usize,
    /// `+∞` if any trial failed outright.
    pub mean_rel_error: f64,
}

/// Results of a grid run, trials ordered by rank, then sparsity, then trial.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    pub method: Method,
    pub ranks: Vec<usize>,
    pub sparsities: Vec<f64>,
    pub trials: usize,
    pub records: Vec<TrialRecord>,
}

fn fmt_float(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:e}")
    }
}

impl PhaseGrid {
    pub fn cell(&self, rank_idx: usize, sparsity_idx: usize) -> CellSummary {
        let start = (rank_idx * self.sparsities.len() + sparsity_idx) * self.trials;
        let rows = &self.records[start..start + self.trials];
        CellSummary {
            rank: self.ranks[rank_idx],
            sparsity_fraction: self.sparsities[sparsity_idx],
            trials: rows.len(),
            recovered: rows.iter().filter(|r| r.recovered).count(),
            mean_rel_error: rows.iter().map(|r| r.rel_error).sum::<f64>() / rows.len() as f64,
        }
    }

    pub fn summaries(&self) -> Vec<CellSummary> {
        (0..self.ranks.len())
            .flat_map(|ri| (0..self.sparsities.len()).map(move |si| (ri, si)))
            .map(|(ri, si)| self.cell(ri, si))
            .collect()
    }

    /// Per-trial CSV. With `timings = false` the `seconds` column is left
    /// empty so reruns are byte-identical.
    pub fn write_trials_csv<W: Write>(&self, w: W, timings: bool) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "method",
            "rank",
            "sparsity_fraction",
            "trial",
            "seed",
            "rel_error",
            "recovered",
            "iterations",
            "seconds",
        ])?;
        for r in &self.records {
            wr.write_record([
                r.method.to_string(),
                r.rank.to_string(),
                r.sparsity_fraction.to_string(),
                r.trial.to_string(),
                r.seed.to_string(),
                fmt_float(r.rel_error),
                r.recovered.to_string(),
                r.iterations.to_string(),
                if timings {
                    format!("{:.6}", r.seconds)
                } else {
                    String::new()
                },
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Per-cell CSV: `method,rank,sparsity_fraction,trials,recovered,mean_rel_error`.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "method",
            "rank",
            "sparsity_fraction",
            "trials",
            "recovered",
            "mean_rel_error",
        ])?;
        for c in self.summaries() {
            wr.write_record([
                self.method.to_string(),
                c.rank.to_string(),
                c.sparsity_fraction.to_string(),
                c.trials.to_string(),
                c.recovered.to_string(),
                fmt_float(c.mean_rel_error),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Runs every trial of the grid in parallel on the current rayon pool.
/// Failed trials are recorded with error `+∞` and never abort the grid.
pub fn run_phase(cfg: &PhaseConfig) -> Result<PhaseGrid> {
    cfg.validate()?;
    let n_s = cfg.sparsities.len();
    let jobs: Vec<(usize, usize, usize)> = (0..cfg.ranks.len())
        .flat_map(|ri| (0..n_s).flat_map(move |si| (0..cfg.trials).map(move |t| (ri, si, t))))
        .collect();
    let records = jobs
        .into_par_iter()
        .map(|(ri, si, t)| {
            let seed = trial_seed(cfg.base_seed, ri, si, t);
            let rank = cfg.ranks[ri];
            let fraction = cfg.sparsities[si];
            let spec = SynthSpec {
                dims: cfg.dims,
                r_true: rank,
                m: cfg.support_size(fraction),
                seed,
            };
            let out = match gen_instance(&spec) {
                Ok(inst) => run_method(cfg.method, &inst, cfg.max_iters, seed),
                Err(_) => TrialOutcome {
                    rel_error: f64::INFINITY,
                    iterations: 0,
                    seconds: 0.0,
                },
            };
            TrialRecord {
                method: cfg.method,
                rank,
                sparsity_fraction: fraction,
                trial: t,
                seed,
                recovered: out.recovered(),
                rel_error: out.rel_error,
                iterations: out.iterations,
                seconds: out.seconds,
            }
        })
        .collect();
    Ok(PhaseGrid {
        method: cfg.method,
        ranks: cfg.ranks.clone(),
        sparsities: cfg.sparsities.clone(),
        trials: cfg.trials,
        records,
    })
}

/// Checks that `dims` describes an order-3 tensor.
pub fn cube_dims(dims: &[usize]) -> Result<[usize; 3]> {
    dims.try_into()
        .map_err(|_| dim_err(format!("expected three dimensions, got {dims:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_cases() {
        let inst = gen_instance(&SynthSpec::new(3, 0, 1)).unwrap();
        assert_eq!(inst.sparse.count_nonzero(0.0), 0);
        assert_eq!(inst.observed, inst.lowrank);

        let spec = SynthSpec::new(4, 50, 2);
        let a = gen_instance(&spec).unwrap();
        let b = gen_instance(&spec).unwrap();
        assert_eq!(a.observed.data(), b.observed.data());
        assert_eq!(a.support.len(), 50);
        assert_eq!(a.sparse.count_nonzero(0.0), 50);
        for &o in a.support.offsets() {
            assert_ne!(a.sparse.data()[o], 0.0);
        }
        assert!(
            a.observed
                .sub(&a.lowrank)
                .unwrap()
                .sub(&a.sparse)
                .unwrap()
                .frobenius()
                < 1e-12
        );

        for r in [1, 7, 20, 25] {
            let inst = gen_instance(&SynthSpec::new(r, 10, 3 + r as u64)).unwrap();
            assert_eq!(inst.expected_tucker_rank(), [r.min(20); 3]);
            assert!(inst.tucker_rank_matches().unwrap());
        }
        assert!(gen_instance(&SynthSpec::new(0, 0, 1)).is_err());
        assert!(gen_instance(&SynthSpec {
            dims: [2, 2, 2],
            r_true: 1,
            m: 9,
            seed: 0
        })
        .is_err());
    }

    #[test]
    fn rel_error_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DenseTensor::gaussian(&[3, 4, 2], &mut rng);
        assert_eq!(rel_error(&x, &x).unwrap(), 0.0);
        assert!((rel_error(&x.scale(2.0), &x).unwrap() - 1.0).abs() < 1e-15);
        let y = DenseTensor::gaussian(&[3, 4, 2], &mut rng);
        let num: f64 = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = y.data().iter().map(|b| b * b).sum();
        assert!((rel_error(&x, &y).unwrap() - (num / den).sqrt()).abs() < 1e-14);
        assert!(rel_error(&x, &DenseTensor::zeros(&[3, 4, 2])).is_err());
    }

    #[test]
    fn degrees_of_freedom_cases() {
        assert_eq!(degrees_of_freedom(&[130, 160, 200], 48), 23520);
        assert_eq!(degrees_of_freedom(&[20, 20, 20], 0), 0);
        assert_eq!(degrees_of_freedom(&[20, 20, 20], 1), 60);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("tucker".parse::<Method>().is_err());
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let mut seen = std::collections::HashSet::new();
        for ri in 0..5 {
            for si in 0..5 {
                for t in 0..5 {
                    assert!(seen.insert(trial_seed(7, ri, si, t)));
                }
            }
        }
        assert_eq!(trial_seed(7, 1, 2, 3), trial_seed(7, 1, 2, 3));
        assert_ne!(trial_seed(7, 1, 2, 3), trial_seed(8, 1, 2, 3));
    }

    #[test]
    fn default_grid_shape() {
        let cfg = PhaseConfig::default();
        assert_eq!(cfg.ranks.first(), Some(&1));
        assert_eq!(cfg.ranks.last(), Some(&39));
        assert_eq!(cfg.ranks.len(), 20);
        assert_eq!(cfg.sparsities.len(), 16);
        assert!((cfg.sparsities[15] - 0.4).abs() < 1e-12);
        assert_eq!(cfg.support_size(0.05), 400);
    }

    #[test]
    fn small_grid_runs_and_reports() {
        let cfg = PhaseConfig {
            dims: [6, 6, 6],
            ranks: vec![1, 2],
            sparsities: vec![0.0, 0.05],
            trials: 2,
            method: Method::Atomic,
            base_seed: 3,
            max_iters: 300,
        };
        let grid = run_phase(&cfg).unwrap();
        assert_eq!(grid.records.len(), 8);
        let cell = grid.cell(0, 0);
        assert_eq!((cell.rank, cell.trials), (1, 2));
        assert!(cell.recovered <= cell.trials);
        assert_eq!(grid.records[5].rank, 2);
        assert_eq!(grid.records[5].sparsity_fraction, 0.0);
        assert_eq!(grid.records[5].trial, 1);

        let mut a = Vec::new();
        grid.write_trials_csv(&mut a, false).unwrap();
        let text = String::from_utf8(a).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("method,rank,sparsity_fraction,trial,seed,rel_error,recovered,iterations,seconds")
        );
        assert!(lines.next().unwrap().starts_with("atomic,1,0,0,"));
        assert!(text.lines().skip(1).all(|l| l.ends_with(',')));
        let mut s = Vec::new();
        grid.write_summary_csv(&mut s).unwrap();
        assert_eq!(String::from_utf8(s).unwrap().lines().count(), 5);

        let again = run_phase(&cfg).unwrap();
        let strip = |g: &PhaseGrid| {
            g.records
                .iter()
                .map(|r| (r.seed, r.rel_error.to_bits(), r.iterations))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&grid), strip(&again));
        assert!(run_phase(&PhaseConfig {
            trials: 0,
            ..cfg.clone()
        })
        .is_err());
        assert!(run_phase(&PhaseConfig {
            sparsities: vec![1.5],
            ..cfg
        })
        .is_err());
    }

    #[test]
    fn failures_are_recorded_as_infinite() {
        let grid = PhaseGrid {
            method: Method::Snn,
            ranks: vec![1],
            sparsities: vec![0.1],
            trials: 1,
            records: vec![TrialRecord {
                method: Method::Snn,
                rank: 1,
                sparsity_fraction: 0.1,
                trial: 0,
                seed: 9,
                rel_error: f64::INFINITY,
                recovered: false,
                iterations: 0,
                seconds: 0.5,
            }],
        };
        let mut out = Vec::new();
        grid.write_trials_csv(&mut out, true).unwrap();
        assert!(String::from_utf8(out)
            .unwrap()
            .contains("snn,1,0.1,0,9,inf,false,0,0.500000"));
        assert!(grid.cell(0, 0).mean_rel_error.is_infinite());
    }
}
