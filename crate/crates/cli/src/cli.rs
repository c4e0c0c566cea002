use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use slqr::NoiseKind;

#[derive(Parser, Debug)]
#[command(name = "slqr", version, about = "Stochastic LQR solvers and learners")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the generalized Riccati equation by policy iteration.
    Solve(SolveArgs),
    /// Model-based primal-dual iteration with KKT certificates.
    Pd(SolveArgs),
    /// Partially model-free learning on a simulated plant.
    Learn(LearnArgs),
    /// Arm reaching benchmark: policy iteration, primal-dual and learning.
    Arm(ArmArgs),
    /// Re-run a previous invocation from its run_manifest.json.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Fill the wall_time_s column of the CSV logs.
    #[arg(long)]
    pub record_timing: bool,
}

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    /// System JSON (A, B, C, D, Q, R).
    #[arg(long)]
    pub input: PathBuf,
    /// Stabilizing initial gain: a JSON file, or inline JSON.
    #[arg(long)]
    pub f0: Option<String>,
    #[arg(long, default_value_t = slqr::riccati::DEFAULT_TOLERANCE)]
    pub tol: f64,
    #[arg(long, default_value_t = slqr::riccati::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[command(flatten)]
    pub common: Common,
}

/// Learning overrides; unset flags keep the config file or default value.
#[derive(Args, Debug, Clone)]
pub struct LearnFlags {
    /// Learning configuration JSON (keys M, H, r, tol, max_iter, master_seed, noise_kind).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Truncation horizon M.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Sample paths H per expectation.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Independent repetitions of the learning run.
    #[arg(long, default_value_t = 1)]
    pub experiments: usize,
    #[arg(long)]
    pub noise: Option<NoiseKind>,
    /// Gain-step tolerance; 0 runs exactly --max-iter iterations.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct LearnArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub f0: Option<String>,
    #[command(flatten)]
    pub learn: LearnFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct ArmArgs {
    /// Arm parameter overrides (JSON keys m, b, tau, d1, d2, chi, dt, include_force_field).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Initial gain; defaults to the published gain when it stabilizes the model.
    #[arg(long)]
    pub f0: Option<String>,
    /// Skip the model-free stage.
    #[arg(long)]
    pub no_learn: bool,
    /// Tolerance of the model-based solvers.
    #[arg(long = "solver-tol", default_value_t = slqr::riccati::DEFAULT_TOLERANCE)]
    pub solver_tol: f64,
    #[arg(long = "solver-max-iter", default_value_t = slqr::riccati::DEFAULT_MAX_ITER)]
    pub solver_max_iter: usize,
    #[command(flatten)]
    pub learn: LearnFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct RerunArgs {
    /// Path to a run_manifest.json.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for the reproduced artifacts.
    #[arg(long)]
    pub out: PathBuf,
}
