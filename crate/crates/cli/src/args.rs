use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "vsg", version, about = "Entropy-regularised equilibrium solvers for tabular stochastic games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Soft Nash equilibrium by natural policy gradient (or backward induction on finite horizons).
    SolveNash(SolveArgs),
    /// Two-player zero-sum solve with the analytic opponent update.
    SolveZs(SolveArgs),
    /// Correlated equilibrium through a public signal.
    SolveCe(SolveArgs),
    /// Mean-field equilibrium of a finite-horizon population game.
    SolveMf(MfArgs),
    /// Exact exploitability of a fixed joint policy.
    Exploitability(PolicyArgs),
    /// Write a fixture or random game to `<out>/game.json`.
    GenGame(GenArgs),
    /// Exploitability plus an epsilon-Nash certificate for a fixed joint policy.
    Certify(CertifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Oracle,
    Empirical,
    Variational,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    /// Game file (JSON).
    #[arg(long)]
    pub game: PathBuf,
    /// Learning rate; defaults to (1 - gamma) / 2.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    /// Stop when successive policies differ by less than this (row TV).
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Oracle)]
    pub opponent_mode: ModeArg,
    /// Signal distribution for solve-ce: a JSON array file or `uniform:K`.
    #[arg(long)]
    pub signal: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent runs with seeds `seed, seed + 1, ...`; more than one adds a learning curve.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Compute exact exploitability every this many iterations.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub cadence: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MfArgs {
    /// Mean-field game file (JSON).
    #[arg(long)]
    pub game: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Weight kept on the previous mean field.
    #[arg(long, default_value_t = 0.5)]
    pub damping: f64,
    /// Use the previous outer iterate as the policy prior instead of uniform.
    #[arg(long)]
    pub previous_prior: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub cadence: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PolicyArgs {
    #[arg(long)]
    pub game: PathBuf,
    /// `uniform` or a final_policy.csv file.
    #[arg(long, default_value = "uniform")]
    pub policy: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertArg {
    /// `T ln max_i |A_i|` (finite horizons).
    FiniteHorizon,
    /// `delta + ln |A| / (1 - gamma)`, joint action count.
    DiscountedJoint,
    /// `delta + ln max_i |A_i| / (1 - gamma)`.
    DiscountedMax,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Certificate; defaults to finite-horizon or discounted-joint by the game's horizon.
    #[arg(long, value_enum)]
    pub mode: Option<CertArg>,
    /// Opponent-model KL error feeding the value-error term (0 for exact opponents).
    #[arg(long, default_value_t = 0.0)]
    pub model_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fixture {
    PrisonersDilemma,
    MatchingPennies,
    RockPaperScissors,
    Chicken,
    Coordination,
    Differential,
    RandomIdentical,
    RandomGeneral,
    /// Mean-field crowd-aversion ring.
    Crowd,
    /// The crowd ring without the crowd term.
    CrowdIndependent,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub fixture: Fixture,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub agents: usize,
    #[arg(long, default_value_t = 2)]
    pub states: usize,
    #[arg(long, default_value_t = 2)]
    pub actions: usize,
    /// Discount; fixtures keep their own when omitted.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Finite horizon T; the game is discounted when omitted.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}
