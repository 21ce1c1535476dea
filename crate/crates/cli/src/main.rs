use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod batch;
mod commands;
mod failure;

use failure::Failure;

/// Skeleton-topology metrics, losses and fixtures for 3D neurite segmentation.
#[derive(Parser)]
#[command(name = "skeltop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Voxel precision, recall, F1 and HD95 between two volumes.
    SegEval(SegEvalArgs),
    /// ESA, DSA and PDS between two SWC traces.
    TraceEval(TraceEvalArgs),
    /// Topology-aware skeleton loss between two volumes.
    Tasl(TaslArgs),
    /// Deep-supervision total loss from per-scale terms.
    Loss(LossArgs),
    /// Thin a binary (or thresholded) volume to its skeleton.
    Skeletonize(SkeletonizeArgs),
    /// Radius graph over the foreground voxels of a skeleton volume.
    Graph(GraphArgs),
    /// Inflate a 2D kernel to 3D, or check the inflation equivalences.
    Inflate(InflateArgs),
    /// Generate a synthetic tree with its mask and probability volume.
    Synth(SynthArgs),
}

/// Either a single pair or a pair of directories matched by file stem.
#[derive(Args)]
pub struct PairArgs {
    #[arg(
        long,
        required_unless_present = "pred_dir",
        conflicts_with = "pred_dir"
    )]
    pub pred: Option<PathBuf>,
    #[arg(long, required_unless_present = "gt_dir", conflicts_with = "gt_dir")]
    pub gt: Option<PathBuf>,
    #[arg(long, requires = "gt_dir")]
    pub pred_dir: Option<PathBuf>,
    #[arg(long, requires = "pred_dir")]
    pub gt_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct SegEvalArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Threshold applied to probability volumes.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum EsaModeArg {
    Directed,
    Symmetric,
}

#[derive(Args)]
pub struct TraceEvalArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Match distance.
    #[arg(long, default_value_t = 2.0)]
    pub theta: f64,
    /// Resample both traces to at most this spacing first.
    #[arg(long)]
    pub resample: Option<f64>,
    #[arg(long, value_enum, default_value = "directed")]
    pub esa: EsaModeArg,
}

#[derive(Args)]
pub struct TaslArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Graph edge radius.
    #[arg(long, default_value_t = 2.0)]
    pub r: f64,
    /// Node, edge and path weights.
    #[arg(long, default_value = "1.0,0.5,0.5")]
    pub weights: String,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
}

#[derive(Args)]
pub struct LossArgs {
    /// JSON file with per-scale `dice`, `ce` and `tasl_total`.
    #[arg(long)]
    pub scales: PathBuf,
}

#[derive(Args)]
pub struct SkeletonizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
}

#[derive(Args)]
pub struct GraphArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    pub r: f64,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum InflationModeArg {
    Center,
    Average,
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
pub struct InflateArgs {
    #[command(subcommand)]
    pub verify: Option<InflateCommand>,
    #[arg(long, required = true)]
    pub kernel: Option<PathBuf>,
    #[arg(long, required = true)]
    pub kd: Option<usize>,
    #[arg(long, value_enum, required = true)]
    pub mode: Option<InflationModeArg>,
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum InflateCommand {
    /// Report residuals of the slice and interior equivalences.
    Verify {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        kd: usize,
        #[arg(long)]
        volume: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum VolumeFormatArg {
    Raw,
    Nrrd,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Outputs are `<prefix>.swc`, `<prefix>_mask.*` and `<prefix>_prob.*`.
    #[arg(long)]
    pub out_prefix: PathBuf,
    #[arg(long, value_enum, default_value = "raw")]
    pub format: VolumeFormatArg,
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SKELTOP_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Failure::usage(format!(
            "SKELTOP_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(format!("cannot size thread pool: {e}")))
}

fn run(cli: Cli) -> Result<commands::Output, Failure> {
    configure_threads()?;
    match cli.command {
        Command::SegEval(a) => commands::seg_eval(&a),
        Command::TraceEval(a) => commands::trace_eval(&a),
        Command::Tasl(a) => commands::tasl(&a),
        Command::Loss(a) => commands::loss(&a),
        Command::Skeletonize(a) => commands::skeletonize(&a),
        Command::Graph(a) => commands::graph(&a),
        Command::Inflate(a) => commands::inflate(a),
        Command::Synth(a) => commands::synth(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            // a closed pipe on stdout is the reader's choice, not a failure
            let _ = writeln!(std::io::stdout().lock(), "{}", out.json);
            ExitCode::from(out.code)
        }
        Err(f) => {
            eprintln!("error[{}]: {f}", f.error.class());
            ExitCode::from(f.exit_code())
        }
    }
}
