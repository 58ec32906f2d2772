//! Command-line front end for `trpca`.
//!
//! Every subcommand reads its inputs, checks that output locations exist,
//! computes, and only then writes files. Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | bad input: usage error, unreadable or malformed file, invalid parameter |
//! | 3 | the solver did not converge (outputs are still written) |
//!
//! A flat `key = value` file passed with `--config` supplies long flags
//! without the leading dashes; flags on the command line win.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

pub use config::{expand_config, parse_config};

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    BadInput = 2,
    NotConverged = 3,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "trpca",
    version,
    about = "Robust low-rank plus sparse tensor decomposition"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Flat key=value file of long flags; command-line flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for parallel sections (1 gives the reference ordering).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Omit the generation-time header line and wall-clock columns from outputs.
    #[arg(long, global = true)]
    pub no_timestamp: bool,

    /// Also print the machine-readable report to stdout.
    #[arg(long, global = true)]
    pub stdout: bool,

    /// Suppress diagnostics on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Split a tensor into low-rank and sparse parts with the factored solver.
    Decompose(DecomposeArgs),
    /// Run a seeded recovery grid over ranks and sparsity levels.
    Phase(PhaseArgs),
    /// Report Tucker rank, coherence and recovery-condition diagnostics.
    Analyze(AnalyzeArgs),
    /// Fit a topic model from a bag-of-words corpus by moment tensors.
    Lda(LdaArgs),
    /// Run a convex baseline decomposition.
    Baseline(BaselineArgs),
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct DecomposeArgs {
    /// Input tensor in TNSR format.
    pub input: PathBuf,
    /// Number of rank-one terms (heuristic default).
    #[arg(long, default_value_t = 10)]
    pub rank_bound: usize,
    /// Weight of the factor regularizer.
    #[arg(long, default_value_t = 1e-5)]
    pub lambda_x: f64,
    /// Huber threshold, the weight of the ℓ1 term on the sparse part.
    #[arg(long, default_value_t = 1e-3)]
    pub lambda_s: f64,
    /// Tie all modes of each term to one shared vector.
    #[arg(long)]
    pub symmetric: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    /// L-BFGS memory.
    #[arg(long, default_value_t = 10)]
    pub memory: usize,
    /// Output path prefix; defaults to the input path without its extension.
    #[arg(long)]
    pub out_prefix: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct PhaseArgs {
    /// atomic, matrix, snn or constrained.
    #[arg(long, default_value = "atomic")]
    pub method: trpca::harness::Method,
    /// True CP ranks (default 1,3,…,39; heuristic grid).
    #[arg(long, value_delimiter = ',')]
    pub ranks: Vec<usize>,
    /// Fractions of corrupted entries (default 0.025,0.05,…,0.40; heuristic grid).
    #[arg(long, value_delimiter = ',')]
    pub sparsities: Vec<f64>,
    #[arg(long, default_value_t = 16)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "20,20,20")]
    pub dims: Vec<usize>,
    /// Iteration cap of the atomic solver.
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    /// Output prefix; writes `<out>.trials.csv` and `<out>.summary.csv`.
    #[arg(long, default_value = "phase")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct AnalyzeArgs {
    /// Dense tensor, or stacked factors when `--dims` is given.
    pub input: PathBuf,
    /// Side lengths; marks the input as a `(d1+d2+d3) × R` stack of factor matrices.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Tensor whose nonzero entries define the corruption support.
    #[arg(long)]
    pub support: Option<PathBuf>,
    /// Relative singular-value threshold for ranks (heuristic default).
    #[arg(long, default_value_t = 1e-8)]
    pub rank_tol: f64,
    /// Constant in the rank condition (heuristic default).
    #[arg(long, default_value_t = 1.0)]
    pub rho_r: f64,
    /// Constant in the sparsity condition (heuristic default).
    #[arg(long, default_value_t = 1.0)]
    pub rho_s: f64,
    /// Second coherence constant; estimated from factors when not given.
    #[arg(long)]
    pub alpha0: Option<f64>,
    /// Lanczos steps for the operator norm.
    #[arg(long, default_value_t = 500)]
    pub opnorm_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct LdaArgs {
    /// Corpus with one document per line of `wordId:count` pairs.
    pub corpus: PathBuf,
    /// Word list, one word per line; line i names word id i.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Number of topics.
    #[arg(long)]
    pub topics: Option<usize>,
    /// Dimension of the reduced moment space (default min(2K, vocabulary); heuristic).
    #[arg(long, alias = "oversample")]
    pub kprime: Option<usize>,
    /// Dirichlet concentration `β0` (heuristic default).
    #[arg(long, default_value_t = 1.0)]
    pub beta0: f64,
    /// Dirichlet pseudo-count for held-out fold-in (default β0 / K).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Held-out corpus for perplexity.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-8)]
    pub lambda_x: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda_s: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = trpca::moments::LDA_MAX_ITERS)]
    pub max_iters: usize,
    /// Seeded starts of the decomposition; the lowest objective wins (heuristic default).
    #[arg(long, default_value_t = trpca::moments::LDA_RESTARTS)]
    pub restarts: usize,
    /// Words listed per topic.
    #[arg(long, default_value_t = 10)]
    pub top_words: usize,
    /// Output prefix; defaults to the corpus path without its extension.
    #[arg(long)]
    pub out_prefix: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    /// Matrix RPCA on one unfolding.
    Matrix,
    /// Weighted sum of nuclear norms of the unfoldings.
    Snn,
    /// ℓ1 fit under a Tucker-rank cap.
    Constrained,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct BaselineArgs {
    /// Input tensor in TNSR format.
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub method: Option<BaselineMethod>,
    /// Matrix method: ℓ1 weight (default 1/sqrt(max side of the unfolding)).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Matrix method: misfit budget.
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Matrix method: unfolding mode (0-based).
    #[arg(long, default_value_t = 0)]
    pub mode: usize,
    /// Sum-of-nuclear-norms method: per-mode weights (default sqrt(d_i)).
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Constrained method: Tucker-rank caps.
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    /// Constrained method: final shrinkage threshold.
    #[arg(long, default_value_t = 1e-3)]
    pub shrink: f64,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Output prefix; defaults to the input path without its extension.
    #[arg(long)]
    pub out_prefix: Option<PathBuf>,
}

/// Settings shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Global {
    pub timestamp: bool,
    pub stdout: bool,
    pub quiet: bool,
}

impl Global {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(&Cli::command(), args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Exit::BadInput.code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                Exit::BadInput.code()
            } else {
                Exit::Success.code()
            };
        }
    };
    let global = Global {
        timestamp: !cli.no_timestamp,
        stdout: cli.stdout,
        quiet: cli.quiet,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return Exit::BadInput.code();
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return Exit::BadInput.code();
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Decompose(a) => commands::decompose(a, &global),
        Command::Phase(a) => commands::phase(a, &global),
        Command::Analyze(a) => commands::analyze(a, &global),
        Command::Lda(a) => commands::lda(a, &global),
        Command::Baseline(a) => commands::baseline(a, &global),
    });
    match result {
        Ok(exit) => exit.code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            Exit::BadInput.code()
        }
    }
}

/// `path` with its extension removed.
fn default_prefix(path: &Path) -> PathBuf {
    path.with_extension("")
}
