use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "decprog", version, about = "Decision programming over influence diagrams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a diagram file and list every finding.
    Validate { model: PathBuf },
    /// Compute an optimal strategy.
    Solve(SolveArgs),
    /// Evaluate a given strategy.
    Evaluate(EvaluateArgs),
    /// Enumerate the non-dominated strategies.
    Frontier(FrontierArgs),
    /// Run a benchmark suite.
    Bench(BenchArgs),
    /// Write a generated diagram as JSON.
    Generate(GenerateArgs),
    /// Write the path table as CSV.
    Paths(PathsArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CutArg {
    Off,
    Probability,
    ActivePath,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SenseArg {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Args)]
pub struct SolverFlags {
    /// Valid equalities handed to the solver.
    #[arg(long, value_enum, default_value = "off")]
    pub cuts: CutArg,
    /// Relative optimality gap.
    #[arg(long, default_value_t = 1e-9)]
    pub gap: f64,
    /// Shift path utilities so the smallest objective coefficient is zero.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub normalize: bool,
    /// Stop after this many nodes.
    #[arg(long)]
    pub node_limit: Option<usize>,
    /// Stop after this many seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub model: PathBuf,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Write the compiled model in LP format.
    #[arg(long)]
    pub export_lp: Option<PathBuf>,
    /// Maximize `w * EU + (1 - w) * CVaR_alpha`; takes ALPHA W.
    #[arg(long, num_args = 2, value_names = ["ALPHA", "W"])]
    pub cvar: Option<Vec<f64>>,
    /// Require `P(utility >= T) SENSE P`; takes T P SENSE.
    #[arg(long, num_args = 3, value_names = ["T", "P", "SENSE"])]
    pub chance: Option<Vec<String>>,
    /// Subtract `PHI` times the expected shortfall below `T`; takes T PHI.
    #[arg(long, num_args = 2, value_names = ["T", "PHI"])]
    pub edr: Option<Vec<f64>>,
    /// Directory for the run report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub model: PathBuf,
    /// Strategy JSON as printed by `solve`.
    pub strategy: PathBuf,
    /// Risk level for VaR and CVaR.
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    /// Target for the expected shortfall.
    #[arg(long)]
    pub target: Option<f64>,
    /// Directory for the utility distribution CSV and the run report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ObjectivesArg {
    /// Expected utility of each value node.
    Values,
    /// Expected utility and CVaR at `--alpha`.
    EuCvar,
}

#[derive(Debug, Args)]
pub struct FrontierArgs {
    pub model: PathBuf,
    /// Risk level of the CVaR objective.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Defaults to eu-cvar when `--alpha` is given, values otherwise.
    #[arg(long, value_enum)]
    pub objectives: Option<ObjectivesArg>,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Directory for frontier.csv, scatter.csv and the run report.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    PigFarm,
    NMonitoring,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    /// Sizes as `a..b` (inclusive), `a,b,c` or a single value. Defaults to
    /// 3..7 months for the pig farm and 2..4 reports for N-monitoring.
    #[arg(long)]
    pub sizes: Option<String>,
    /// Number of seeds per size, starting at `--seed`.
    #[arg(long, default_value_t = 100)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads across instances.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Directory for the results CSV and the run report.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(subcommand)]
    pub kind: GenerateKind,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum GenerateKind {
    PigFarm {
        #[arg(long, default_value_t = 4)]
        months: usize,
    },
    NMonitoring {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    DoubleMonitoring {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Random {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        chance: usize,
        #[arg(long, default_value_t = 2)]
        decisions: usize,
        #[arg(long, default_value_t = 1)]
        values: usize,
        #[arg(long, default_value_t = 2)]
        max_states: usize,
        #[arg(long, default_value_t = 2)]
        max_info: usize,
    },
}

#[derive(Debug, Args)]
pub struct PathsArgs {
    pub model: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}
