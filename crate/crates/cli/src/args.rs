use std::path::PathBuf;

use attnscale_core::{ExecutionMode, MechanismKind};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "attnscale",
    version,
    about = "Causal sequence operators: scaling benchmark, invariant checks and a fusion-model demo"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep sequence lengths and record latency and peak scratch memory.
    Bench(BenchArgs),
    /// Run the invariant suite and print one line per property.
    Verify(VerifyArgs),
    /// Run the speech/text fusion model once on synthetic features.
    Demo(DemoArgs),
    /// Summarize a results CSV written by `bench`.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct ModelFlags {
    /// Model width D.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Number of heads H (must divide D).
    #[arg(long)]
    pub heads: Option<usize>,
    /// Slot count for GSA.
    #[arg(long)]
    pub slots: Option<usize>,
    /// Rank of the gate projections; 0 uses full-rank gates.
    #[arg(long)]
    pub gate_rank: Option<usize>,
    /// Seed for parameters and synthetic inputs [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// `key = value` file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Comma-separated mechanisms [default: all six].
    #[arg(long, value_delimiter = ',')]
    pub mechanisms: Option<Vec<MechanismKind>>,
    /// Execution mode for every mechanism [default: recurrent for bounded
    /// mechanisms, parallel for SA and FoX].
    #[arg(long)]
    pub mode: Option<ExecutionMode>,
    /// Strictly ascending comma-separated sequence lengths
    /// [default: 512,1024,2048,4096,8192,16384].
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<usize>>,
    /// Timed repeats per length (>= 3) [default: 5].
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Untimed warmup forwards per length [default: 2].
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Lengths above this are recorded as failures instead of run.
    #[arg(long)]
    pub max_length_cap: Option<usize>,
    /// Results CSV; fits, failures and panel files are written next to it
    /// [default: results.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Perturbs RetNet's decay in parallel mode only.
    RetnetGamma,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Only run properties that involve this mechanism.
    #[arg(long)]
    pub mechanism: Option<MechanismKind>,
    /// Also run the wall-clock scaling properties (a full length sweep;
    /// takes several minutes).
    #[arg(long)]
    pub with_timing: bool,
    /// Seed for the generated workloads.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, hide = true)]
    pub inject_fault: Option<Fault>,
}

#[derive(Debug, Clone, Args)]
pub struct DemoArgs {
    /// Sequence operator inside the fusion model [default: sa].
    #[arg(long)]
    pub mechanism: Option<MechanismKind>,
    /// Execution mode [default: the mechanism's natural mode].
    #[arg(long)]
    pub mode: Option<ExecutionMode>,
    /// Speech frames S.
    #[arg(long)]
    pub speech_len: Option<usize>,
    /// Text tokens E.
    #[arg(long)]
    pub text_len: Option<usize>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Results CSV written by `bench`.
    #[arg(long, default_value = "results.csv")]
    pub input: PathBuf,
}
