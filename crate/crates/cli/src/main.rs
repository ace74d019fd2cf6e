use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod sidecar;

/// Stability-selection feature ranking experiments.
#[derive(Debug, Parser)]
#[command(name = "stabsel", version, about)]
struct Cli {
    /// Master seed; every random stream of a run derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (defaults to available parallelism). Outputs do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic benchmark: dataset, ground truth and spec echo.
    GenSynth(GenSynthArgs),
    /// Rank the features of a dataset with one method.
    Select(SelectArgs),
    /// Run a comparison experiment over the method battery.
    Compare(CompareArgs),
    /// LOOCV classification of an eval set on the top-k features of a ranking.
    EvalClassify(EvalClassifyArgs),
    /// Average several rankings score-wise by feature id.
    RankMerge(RankMergeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    #[value(name = "binary-f64")]
    BinaryF64,
}

#[derive(Debug, clap::Args)]
struct GenSynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Spec file to start from (defaults to the built-in layout).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    timepoints: Option<usize>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Debug, clap::Args)]
struct SelectArgs {
    /// Dataset (`.csv` or binary).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    method: Option<String>,
    /// Hyperparameter override, `key=value`; repeatable.
    #[arg(long = "param", value_parser = commands::parse_param)]
    params: Vec<(String, f64)>,
    /// TOML file with `method`, `tune` and a `[hyperparams]` table; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Choose penalty hyperparameters by 5-fold CV before ranking.
    #[arg(long)]
    tune: bool,
    /// Also write the per-resample selection sets (resampling methods only).
    #[arg(long)]
    keep_sets: bool,
    /// Draw resample rows uniformly instead of per class.
    #[arg(long)]
    no_stratify: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Experiment {
    Robustness,
    Pr,
    Topk,
}

#[derive(Debug, clap::Args)]
struct CompareArgs {
    #[arg(long, value_enum)]
    experiment: Experiment,
    #[arg(long)]
    out: PathBuf,
    /// Synthetic spec file (defaults to the built-in layout).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the spec's SNR (top-k on synthetic centers defaults to 0.25).
    #[arg(long)]
    snr: Option<f64>,
    /// Number of generator seeds, `seed .. seed + seeds`.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Largest flip count of the robustness sweep.
    #[arg(long, default_value_t = 10)]
    max_flips: usize,
    /// Flip count of the PR experiment.
    #[arg(long, default_value_t = 5)]
    flips: usize,
    /// Comma-separated method names (defaults to all methods; ours only for topk).
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Tune every method's penalties by CV on the seed's uncorrupted data first.
    #[arg(long)]
    tune: bool,
    /// Top-k: training center (synthetic centers are generated if absent).
    #[arg(long, requires = "eval")]
    train: Option<PathBuf>,
    /// Top-k: evaluation center.
    #[arg(long, requires = "train")]
    eval: Option<PathBuf>,
    /// Top-k: comma-separated k values.
    #[arg(long, value_delimiter = ',')]
    ks: Vec<usize>,
    /// Top-k: SVM cost; chosen by CV on the training center when omitted.
    #[arg(long)]
    c_reg: Option<f64>,
}

#[derive(Debug, clap::Args)]
struct EvalClassifyArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    eval: PathBuf,
    /// Ranking CSV written by `select` (its sidecar must sit next to it).
    #[arg(long)]
    ranking: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    c_reg: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct RankMergeArgs {
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::GenSynth(a) => commands::gen_synth(cli.seed, a),
        Command::Select(a) => commands::select(cli.seed, a),
        Command::Compare(a) => commands::compare(cli.seed, a),
        Command::EvalClassify(a) => commands::eval_classify(cli.seed, a),
        Command::RankMerge(a) => commands::rank_merge(cli.seed, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
