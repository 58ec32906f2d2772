use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use trpca::analysis::{
    coherence_report, opnorm_pomega_px, recovery_condition_check, subspace_coherence,
    RecoveryConditionInput, SubspaceBases, SupportSet,
};
use trpca::baselines::{self, AdmmConfig, BaselineResult, ConstrainedConfig, LevelSetConfig};
use trpca::harness::{cube_dims, run_phase, PhaseConfig};
use trpca::io::{load_tensor, save_tensor};
use trpca::linalg::column_space_basis;
use trpca::moments::{fit_lda, perplexity, read_vocab, Corpus, LdaConfig};
use trpca::solver::{lbfgs_solve, symmetric_solve, SolveReport, SolverConfig, Status};
use trpca::tensor::{r_bar, spectral_norm_estimate, tucker_rank};
use trpca::{DenseTensor, KruskalTensor, Matrix};

use crate::{
    default_prefix, AnalyzeArgs, BaselineArgs, BaselineMethod, DecomposeArgs, Exit, Global,
    LdaArgs, PhaseArgs,
};

/// Singular values below this fraction of the largest do not count toward a reported rank.
const RANK_TOL: f64 = 1e-8;

fn check_input(path: &Path) -> Result<()> {
    let meta =
        std::fs::metadata(path).with_context(|| format!("cannot read {}", path.display()))?;
    if !meta.is_file() {
        bail!("{} is not a file", path.display());
    }
    Ok(())
}

fn check_prefix(prefix: &Path) -> Result<()> {
    let dir = match prefix.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !dir.is_dir() {
        bail!("output directory {} does not exist", dir.display());
    }
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Opens a text output, starting with a `# generated_unix=` line when timestamps are on.
fn create_text(path: &Path, g: &Global) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(f);
    if g.timestamp {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        writeln!(w, "# generated_unix={secs}")?;
    }
    Ok(w)
}

fn write_report(path: &Path, report: &str, g: &Global) -> Result<()> {
    let mut w = create_text(path, g)?;
    w.write_all(report.as_bytes())?;
    w.flush()?;
    if g.stdout {
        print!("{report}");
    } else {
        g.note(report.trim_end());
    }
    Ok(())
}

fn save(path: &Path, t: &DenseTensor) -> Result<()> {
    save_tensor(path, t).with_context(|| format!("cannot write {}", path.display()))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn sparsity_percent(s: &DenseTensor) -> f64 {
    100.0 * s.count_nonzero(0.0) as f64 / s.len().max(1) as f64
}

/// `(d1 + … + dK) × R` matrix of stacked factors, stored as an order-2 tensor.
fn stack_factors(k: &KruskalTensor) -> Result<DenseTensor> {
    let rows: usize = k.dims().iter().sum();
    let mut m = Matrix::zeros(rows, k.rank());
    let mut off = 0;
    for f in k.factors() {
        m.view_mut((off, 0), f.shape()).copy_from(f);
        off += f.nrows();
    }
    Ok(DenseTensor::from_vec(
        &[rows, k.rank()],
        m.as_slice().to_vec(),
    )?)
}

fn unstack_factors(t: &DenseTensor, dims: &[usize]) -> Result<KruskalTensor> {
    let total: usize = dims.iter().sum();
    if t.order() != 2 || t.dims()[0] != total {
        bail!(
            "stacked factors must be a {total} × R tensor for dims {dims:?}, got {:?}",
            t.dims()
        );
    }
    let m = Matrix::from_column_slice(total, t.dims()[1], t.data());
    let mut off = 0;
    let factors = dims
        .iter()
        .map(|&d| {
            let f = m.rows(off, d).into_owned();
            off += d;
            f
        })
        .collect();
    Ok(KruskalTensor::new(factors)?)
}

fn solve_exit(status: Status) -> Exit {
    match status {
        Status::Converged | Status::LineSearchFailed => Exit::Success,
        Status::MaxIterations | Status::Diverged => Exit::NotConverged,
    }
}

fn solve_summary(rep: &SolveReport, z: &DenseTensor, zero_tol: f64) -> Result<String> {
    let weights = rep.factors.term_weights();
    let wmax = weights.iter().copied().fold(0.0, f64::max);
    let rank = weights.iter().filter(|&&w| w > zero_tol * wmax).count();
    let residual = rep.lowrank.add(&rep.sparse)?.sub(z)?.frobenius();
    let mut s = String::new();
    writeln!(s, "status={}", rep.status.as_str())?;
    writeln!(s, "iterations={}", rep.iterations)?;
    writeln!(s, "objective={:e}", rep.objective)?;
    writeln!(s, "grad_norm={:e}", rep.final_grad_norm)?;
    writeln!(s, "global_cert={}", rep.global_cert)?;
    writeln!(s, "numerical_rank={rank}")?;
    if z.order() == 3 {
        writeln!(
            s,
            "tucker_rank={}",
            join(&tucker_rank(&rep.lowrank, RANK_TOL)?.ranks)
        )?;
    }
    writeln!(s, "sparsity_percent={}", sparsity_percent(&rep.sparse))?;
    writeln!(
        s,
        "degrees_of_freedom={}",
        rank * z.dims().iter().sum::<usize>()
    )?;
    writeln!(s, "residual={residual:e}")?;
    Ok(s)
}

pub fn decompose(a: &DecomposeArgs, g: &Global) -> Result<Exit> {
    check_input(&a.input)?;
    let prefix = a
        .out_prefix
        .clone()
        .unwrap_or_else(|| default_prefix(&a.input));
    check_prefix(&prefix)?;
    let z = load_tensor(&a.input).with_context(|| format!("cannot load {}", a.input.display()))?;
    let cfg = SolverConfig {
        rank_bound: a.rank_bound,
        lambda_x: a.lambda_x,
        lambda_s: a.lambda_s,
        order: z.order(),
        max_iters: a.max_iters,
        memory: a.memory,
        seed: a.seed,
        ..SolverConfig::default()
    };
    let rep = if a.symmetric {
        symmetric_solve(&z, &cfg)?
    } else {
        lbfgs_solve(&z, &cfg)?
    };

    save(&with_suffix(&prefix, ".lowrank.tnsr"), &rep.lowrank)?;
    save(&with_suffix(&prefix, ".sparse.tnsr"), &rep.sparse)?;
    save(
        &with_suffix(&prefix, ".factors.tnsr"),
        &stack_factors(&rep.factors)?,
    )?;
    let mut trace = create_text(&with_suffix(&prefix, ".trace.csv"), g)?;
    rep.write_trace_csv(&mut trace)?;
    trace.flush()?;
    write_report(
        &with_suffix(&prefix, ".summary.txt"),
        &solve_summary(&rep, &z, cfg.zero_tol)?,
        g,
    )?;
    let exit = solve_exit(rep.status);
    if exit == Exit::NotConverged {
        g.note(format!(
            "warning: solver stopped with status {}",
            rep.status.as_str()
        ));
    }
    Ok(exit)
}

pub fn phase(a: &PhaseArgs, g: &Global) -> Result<Exit> {
    check_prefix(&a.out)?;
    let defaults = PhaseConfig::default();
    let cfg = PhaseConfig {
        dims: cube_dims(&a.dims)?,
        ranks: if a.ranks.is_empty() {
            defaults.ranks
        } else {
            a.ranks.clone()
        },
        sparsities: if a.sparsities.is_empty() {
            defaults.sparsities
        } else {
            a.sparsities.clone()
        },
        trials: a.trials,
        method: a.method,
        base_seed: a.seed,
        max_iters: a.max_iters,
    };
    let grid = run_phase(&cfg)?;

    let mut trials = create_text(&with_suffix(&a.out, ".trials.csv"), g)?;
    grid.write_trials_csv(&mut trials, g.timestamp)?;
    trials.flush()?;
    let mut summary = Vec::new();
    grid.write_summary_csv(&mut summary)?;
    let mut w = create_text(&with_suffix(&a.out, ".summary.csv"), g)?;
    w.write_all(&summary)?;
    w.flush()?;
    if g.stdout {
        std::io::stdout().write_all(&summary)?;
    }
    let recovered = grid.records.iter().filter(|r| r.recovered).count();
    g.note(format!(
        "{}: {recovered}/{} trials recovered",
        cfg.method,
        grid.records.len()
    ));
    Ok(Exit::Success)
}

pub fn analyze(a: &AnalyzeArgs, g: &Global) -> Result<Exit> {
    check_input(&a.input)?;
    if let Some(p) = &a.support {
        check_input(p)?;
    }
    if let Some(p) = &a.out {
        check_prefix(p)?;
    }
    let input =
        load_tensor(&a.input).with_context(|| format!("cannot load {}", a.input.display()))?;
    let (dense, kruskal) = match &a.dims {
        Some(d) => {
            let k = unstack_factors(&input, d)?;
            (k.to_dense(), Some(k))
        }
        None => (input, None),
    };
    let dims = cube_dims(dense.dims())?;
    let bases = match &kruskal {
        Some(k) => trpca::analysis::bases_from_kruskal(k, a.rank_tol)?,
        None => {
            let b =
                |m| -> Result<Matrix> { Ok(column_space_basis(&dense.matricize(m)?, a.rank_tol)?) };
            SubspaceBases::new(b(0)?, b(1)?, b(2)?)?
        }
    };
    let per_mode = bases.bases().each_ref().map(subspace_coherence);
    let mu = per_mode.iter().copied().fold(0.0, f64::max);
    let ranks = bases.ranks();
    let rb = r_bar(dims, ranks);

    let mut s = String::new();
    writeln!(s, "dims={}", join(&dims))?;
    writeln!(s, "frobenius={:e}", dense.frobenius())?;
    writeln!(
        s,
        "spectral_norm_estimate={:e}",
        spectral_norm_estimate(&dense, 32, 200, a.seed)
    )?;
    writeln!(s, "tucker_rank={}", join(&ranks))?;
    writeln!(s, "r_bar={rb}")?;
    writeln!(s, "mu={mu}")?;
    for (k, m) in per_mode.iter().enumerate() {
        writeln!(s, "mu_mode{}={m}", k + 1)?;
    }
    let alpha = match (&kruskal, a.alpha0) {
        (_, Some(v)) => Some(v),
        (Some(k), None) => Some(coherence_report(k)?.alpha_estimate),
        (None, None) => None,
    };
    if let Some(al) = alpha {
        writeln!(s, "alpha0={al}")?;
    }
    let mut m = 0;
    if let Some(p) = &a.support {
        let t = load_tensor(p).with_context(|| format!("cannot load {}", p.display()))?;
        let omega = SupportSet::of_tensor(&t, 0.0)?;
        m = omega.len();
        writeln!(s, "support_size={m}")?;
        writeln!(
            s,
            "opnorm_pomega_px={}",
            opnorm_pomega_px(&bases, &omega, a.opnorm_iters, a.seed)?
        )?;
    }
    if let Some(alpha0) = alpha {
        let rep = recovery_condition_check(&RecoveryConditionInput {
            dims,
            r_bar: rb,
            m,
            mu0: mu,
            alpha0,
            rho_r: a.rho_r,
            rho_s: a.rho_s,
        })?;
        for line in rep.to_key_value().lines() {
            writeln!(s, "condition_{line}")?;
        }
    }
    match &a.out {
        Some(p) => write_report(p, &s, g)?,
        None if g.stdout => print!("{s}"),
        None => g.note(s.trim_end()),
    }
    Ok(Exit::Success)
}

pub fn lda(a: &LdaArgs, g: &Global) -> Result<Exit> {
    check_input(&a.corpus)?;
    for p in a.vocab.iter().chain(&a.test) {
        check_input(p)?;
    }
    let prefix = a
        .out_prefix
        .clone()
        .unwrap_or_else(|| default_prefix(&a.corpus));
    check_prefix(&prefix)?;
    let topics = a.topics.ok_or_else(|| anyhow!("--topics is required"))?;

    let vocab = match &a.vocab {
        Some(p) => Some(
            read_vocab(BufReader::new(File::open(p)?))
                .with_context(|| format!("in {}", p.display()))?,
        ),
        None => None,
    };
    let corpus = Corpus::load(&a.corpus, vocab.as_ref().map(Vec::len))
        .with_context(|| format!("in {}", a.corpus.display()))?;
    let test = match &a.test {
        Some(p) => Some(Corpus::load(p, None).with_context(|| format!("in {}", p.display()))?),
        None => None,
    };
    let mut cfg = LdaConfig::new(topics);
    cfg.k_prime = a.kprime;
    cfg.beta0 = a.beta0;
    cfg.solver.lambda_x = a.lambda_x;
    cfg.solver.lambda_s = a.lambda_s;
    cfg.solver.seed = a.seed;
    cfg.solver.max_iters = a.max_iters;
    cfg.restarts = a.restarts;
    let fit = fit_lda(&corpus, &cfg)?;
    let px = match &test {
        Some(t) => Some(perplexity(
            t,
            &fit.model,
            a.alpha.unwrap_or(a.beta0 / topics as f64),
        )?),
        None => None,
    };

    let mut w = create_text(&with_suffix(&prefix, ".topics.csv"), g)?;
    fit.model.write_csv(&mut w, vocab.as_deref())?;
    w.flush()?;
    let mut w = create_text(&with_suffix(&prefix, ".top_words.txt"), g)?;
    for (k, ids) in fit.model.top_words(a.top_words).iter().enumerate() {
        let words: Vec<String> = ids
            .iter()
            .map(|&i| {
                vocab
                    .as_ref()
                    .and_then(|v| v.get(i))
                    .cloned()
                    .unwrap_or_else(|| i.to_string())
            })
            .collect();
        writeln!(w, "topic_{k}\t{}", words.join(" "))?;
    }
    w.flush()?;

    let mut s = String::new();
    writeln!(s, "topics={topics}")?;
    writeln!(s, "k_prime={}", fit.reduction.nrows())?;
    writeln!(s, "vocab_size={}", corpus.vocab_size())?;
    writeln!(s, "docs_used={}", fit.docs_used)?;
    writeln!(s, "docs_skipped={}", fit.docs_skipped)?;
    writeln!(s, "status={}", fit.report.status.as_str())?;
    writeln!(s, "iterations={}", fit.report.iterations)?;
    writeln!(s, "objective={:e}", fit.report.objective)?;
    writeln!(
        s,
        "weights={}",
        fit.model
            .weights()
            .iter()
            .map(|w| format!("{w:e}"))
            .collect::<Vec<_>>()
            .join(",")
    )?;
    if let Some(p) = px {
        writeln!(s, "perplexity={}", p.perplexity)?;
        // the vocabulary-normalized value overflows on large test sets
        writeln!(
            s,
            "log_perplexity={}",
            -p.log_likelihood / corpus.vocab_size() as f64
        )?;
        writeln!(
            s,
            "token_perplexity={}",
            (-p.log_likelihood / p.tokens.max(1) as f64).exp()
        )?;
        writeln!(s, "log_likelihood={}", p.log_likelihood)?;
        writeln!(s, "test_tokens={}", p.tokens)?;
        writeln!(s, "ignored_tokens={}", p.ignored_tokens)?;
    }
    write_report(&with_suffix(&prefix, ".summary.txt"), &s, g)?;
    Ok(solve_exit(fit.report.status))
}

pub fn baseline(a: &BaselineArgs, g: &Global) -> Result<Exit> {
    check_input(&a.input)?;
    let prefix = a
        .out_prefix
        .clone()
        .unwrap_or_else(|| default_prefix(&a.input));
    check_prefix(&prefix)?;
    let method = a
        .method
        .ok_or_else(|| anyhow!("--method is required (matrix, snn or constrained)"))?;
    let z = load_tensor(&a.input).with_context(|| format!("cannot load {}", a.input.display()))?;
    let res: BaselineResult = match method {
        BaselineMethod::Matrix => {
            let lambda = match a.lambda {
                Some(l) => l,
                None => baselines::matrix_rpca_lambda(&z, a.mode, None)?,
            };
            let mut cfg = LevelSetConfig::default();
            if let Some(n) = a.max_iters {
                cfg.max_inner = n;
            }
            baselines::matrix_rpca(&z, a.mode, lambda, a.eps, &cfg)?
        }
        BaselineMethod::Snn => {
            let mut cfg = AdmmConfig {
                weights: a.weights.clone(),
                ..AdmmConfig::default()
            };
            if let Some(n) = a.max_iters {
                cfg.max_iters = n;
            }
            baselines::horpca_s(&z, &cfg)?
        }
        BaselineMethod::Constrained => {
            let ranks = a
                .ranks
                .as_ref()
                .ok_or_else(|| anyhow!("the constrained method needs --ranks"))?;
            let mut cfg = ConstrainedConfig {
                lambda: a.shrink,
                ..ConstrainedConfig::default()
            };
            if let Some(n) = a.max_iters {
                cfg.max_iters = n;
            }
            baselines::horpca_c(&z, ranks, &cfg)?
        }
    };

    save(&with_suffix(&prefix, ".lowrank.tnsr"), &res.lowrank)?;
    save(&with_suffix(&prefix, ".sparse.tnsr"), &res.sparse)?;
    let feas = res.feasibility(&z)?;
    let mut s = String::new();
    writeln!(
        s,
        "method={}",
        method
            .to_possible_value()
            .expect("no skipped variants")
            .get_name()
    )?;
    writeln!(s, "converged={}", res.converged)?;
    writeln!(s, "iterations={}", res.iterations)?;
    writeln!(s, "feasibility={feas:e}")?;
    writeln!(
        s,
        "relative_feasibility={:e}",
        feas / z.frobenius().max(f64::MIN_POSITIVE)
    )?;
    writeln!(s, "primal_residual={:e}", res.primal_residual)?;
    writeln!(s, "dual_residual={:e}", res.dual_residual)?;
    if z.order() == 3 {
        writeln!(
            s,
            "tucker_rank={}",
            join(&tucker_rank(&res.lowrank, RANK_TOL)?.ranks)
        )?;
    }
    writeln!(s, "sparsity_percent={}", sparsity_percent(&res.sparse))?;
    write_report(&with_suffix(&prefix, ".summary.txt"), &s, g)?;
    Ok(if res.converged {
        Exit::Success
    } else {
        Exit::NotConverged
    })
}
