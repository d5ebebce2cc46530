//! Variational soft-game solvers for finite stochastic games.
//!
//! The crate evaluates entropy-regularised ("soft") Q-functions under
//! explicit opponent models, runs natural-policy-gradient learning with
//! several opponent-model modes, learns opponent models by importance-weighted
//! reward estimation, solves finite-horizon mean-field games, and computes
//! exact best responses and exploitability for certification.

pub mod equilibria;
pub mod error;
pub mod game;
pub mod mean_field;
pub mod opponent;
pub mod oracle;
pub mod soft_eval;
pub mod vpg;

pub use equilibria::{solve_correlated, solve_zero_sum, CorrelatedSolution, SignalScheme};
pub use error::{Result, VsgError};
pub use game::{GameKind, GameSpec, Horizon, JointActionSpace, Violation};
pub use mean_field::{run_mf_bayesian_q, MfConfig, MfGameSpec, MfPrior, MfResult};
pub use opponent::{fit_opponent_model, FitConfig, PriorMode, TrajectoryBuffer};
pub use oracle::{exploitability, CertMode, ExploitabilityReport, JointDist};
pub use soft_eval::{ConditionedPolicy, EvalMode, EvalOptions, OpponentModel, SoftQTable, StatePolicy};
pub use vpg::{run_vpg, OpponentMode, PotentialConvention, TraceRow, VpgConfig, VpgResult};
