use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use altmin_core::NonzeroLaw;

/// Alternating minimization for dictionary learning: data generation, runs and sweeps.
#[derive(Parser, Debug)]
#[command(name = "altmin", version, about, args_override_self = true)]
pub struct Cli {
    /// Root seed for every random stream
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// Output directory (stdout when omitted, except for `gen`)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for per-sample recovery and sweeps
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Flat key=value file; keys are flag names, command-line flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate A*, X*, Y and a manifest
    Gen(ModelArgs),
    /// Run alternating minimization from a perturbed dictionary and write the trace
    Run(RunArgs),
    /// Initial vs. final error over a list of sample sizes
    Compare(CompareArgs),
    /// Success probability over an (r, n/r) grid
    Sweep(SweepArgs),
    /// Diagnostics report for a dictionary and its coefficients
    Check(CheckArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Signal dimension
    #[arg(long, default_value_t = 100)]
    pub d: usize,

    /// Number of atoms
    #[arg(long, default_value_t = 200)]
    pub r: usize,

    /// Number of samples
    #[arg(long, default_value_t = 8000)]
    pub n: usize,

    /// Nonzeros per coefficient column
    #[arg(long, default_value_t = 3)]
    pub s: usize,

    /// Nonzero law: rademacher, uniform_pm_1_2 or custom:LO:HI
    #[arg(long, default_value_t = NonzeroLaw::UniformPm12)]
    pub law: NonzeroLaw,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverArg {
    Grades,
    L1,
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    /// Sparse recovery solver
    #[arg(long, value_enum, default_value_t = SolverArg::Grades)]
    pub solver: SolverArg,

    /// Alternating minimization rounds
    #[arg(long, default_value_t = 25)]
    pub iters: usize,

    /// Perturbation scale of the initial dictionary
    #[arg(long, default_value_t = 0.5)]
    pub perturb: f64,

    /// Accuracy schedule: off, theory or fixed=V
    #[arg(long, default_value = "off")]
    pub threshold: String,

    /// Residual tolerance of the l1 solver when thresholding is off
    #[arg(long, default_value_t = 1e-9)]
    pub eps: f64,

    /// Stop once the dictionary error falls below this (0 runs every round)
    #[arg(long, default_value_t = 0.0)]
    pub stop_tol: f64,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Instance directory written by `gen`; generated from the model flags otherwise
    #[arg(long)]
    pub instance: Option<PathBuf>,

    #[command(flatten)]
    pub model: ModelArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Write a log-scale error-vs-iteration chart to this path
    #[arg(long)]
    pub svg: Option<PathBuf>,

    /// Record wall-clock seconds per round (otherwise the column is 0)
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Sample sizes; defaults to r, 2r, 5r, 10r and 2.5 s r ln r
    #[arg(long, action = ArgAction::Set, value_delimiter = ',')]
    pub ns: Vec<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    /// Atom counts
    #[arg(long, action = ArgAction::Set, value_delimiter = ',', default_value = "64,128")]
    pub r_values: Vec<usize>,

    /// Sample-to-atom ratios
    #[arg(long, action = ArgAction::Set, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
    pub n_over_r: Vec<f64>,

    /// Trials per cell
    #[arg(long, default_value_t = 10)]
    pub trials: usize,

    /// Signal dimension as a fraction of r
    #[arg(long, default_value_t = 0.5)]
    pub d_over_r: f64,

    /// Nonzeros per coefficient column
    #[arg(long, default_value_t = 3)]
    pub s: usize,

    /// Nonzero law: rademacher, uniform_pm_1_2 or custom:LO:HI
    #[arg(long, default_value_t = NonzeroLaw::UniformPm12)]
    pub law: NonzeroLaw,

    /// Rounds per trial
    #[arg(long, default_value_t = altmin_core::SUCCESS_ITERS)]
    pub iters: usize,

    /// A trial succeeds when its final error is below this
    #[arg(long, default_value_t = altmin_core::SUCCESS_TOL)]
    pub success_tol: f64,

    /// Perturbation scale of the initial dictionary
    #[arg(long, default_value_t = 0.5)]
    pub perturb: f64,

    /// Sparse recovery solver
    #[arg(long, value_enum, default_value_t = SolverArg::Grades)]
    pub solver: SolverArg,

    /// Write success-probability curves to this path
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CheckArgs {
    /// Instance directory written by `gen`; generated from the model flags otherwise
    #[arg(long)]
    pub instance: Option<PathBuf>,

    #[command(flatten)]
    pub model: ModelArgs,
}
