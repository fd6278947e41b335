use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

use rankfeat::ErrorKind;

#[derive(Debug, Parser)]
#[command(name = "rankfeat", version, about = "Rank-1 feature removal OOD scoring toolkit")]
struct Cli {
    /// Worker threads for per-sample work (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score every sample of a feature file.
    Score(ScoreArgs),
    /// Fuse two logit files by averaging, then take the energy.
    Fuse(FuseArgs),
    /// FPR at 95% TPR and AUROC for an ID/OOD pair of score files.
    Eval(EvalArgs),
    /// KL divergence between covariance spectra and a fitted Marchenko-Pastur law.
    Mp(MpArgs),
    /// Generate synthetic feature maps with a planted spectrum.
    Synth(SynthArgs),
    /// Time exact SVD against power iteration and report score agreement.
    Bench(BenchArgs),
    /// Score upper bounds for every sample.
    Bound(BoundArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Rankfeat,
    Energy,
    Msp,
    Odin,
    React,
    Gradnorm,
    Mahalanobis,
    Keep1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Exact,
    Pi,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub head: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Number of leading rank-1 components removed.
    #[arg(long, default_value_t = 1)]
    pub rank: usize,
    #[arg(long, value_enum, default_value_t = SolverArg::Exact)]
    pub solver: SolverArg,
    #[arg(long, default_value_t = 20)]
    pub pi_iters: usize,
    #[arg(long, default_value_t = rankfeat::scoring::ODIN_DEFAULT_TEMPERATURE)]
    pub odin_t: f64,
    /// Clip threshold; defaults to the 90th percentile of the input's pooled activations.
    #[arg(long, allow_hyphen_values = true)]
    pub react_tau: Option<f64>,
    /// JSON file with `class_means` and `shared_precision`.
    #[arg(long)]
    pub maha_stats: Option<PathBuf>,
    /// Seed of the power-iteration starting vector.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub emit_logits: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub logits_a: PathBuf,
    #[arg(long)]
    pub logits_b: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub id: PathBuf,
    #[arg(long)]
    pub ood: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MpArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub remove_rank: u8,
    #[arg(long, default_value_t = rankfeat::rmt::DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub channels: usize,
    /// Spatial size H·W; samples are stored with H = 1.
    #[arg(long)]
    pub hw: usize,
    /// Multiplier on the dominant singular value.
    #[arg(long, default_value_t = 1.0)]
    pub spike: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Power-law decay exponent of the base spectrum (0 = flat).
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long)]
    pub nonneg: bool,
    /// Sample `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a Gaussian head with entries scaled by 1/sqrt(C).
    #[arg(long)]
    pub head_out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub head_seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Comma-separated iteration counts, e.g. `5,10,20`.
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,50,100")]
    pub pi_iters: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Head used for the score comparison; without it only `s1` is compared.
    #[arg(long)]
    pub head: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub head: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::InvalidArgument => 1,
        ErrorKind::Format => 2,
        ErrorKind::Numeric => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Score(a) => commands::score(a),
        Command::Fuse(a) => commands::fuse(a),
        Command::Eval(a) => commands::eval(a),
        Command::Mp(a) => commands::mp(a),
        Command::Synth(a) => commands::synth(a),
        Command::Bench(a) => commands::bench(a),
        Command::Bound(a) => commands::bound(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
