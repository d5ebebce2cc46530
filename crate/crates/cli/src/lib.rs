//! Command-line harness: loads games, dispatches to the solvers and writes
//! byte-reproducible CSV/JSON artifacts.

pub mod args;
pub mod output;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use clap::Parser;
use rayon::prelude::*;
use serde::Serialize;

use args::*;
use output::{num, TraceLine};
use vsg_core::equilibria::{solve_correlated, solve_zero_sum, SignalScheme};
use vsg_core::game::*;
use vsg_core::mean_field::{crowd_ring, mf_exploitability, mf_policy_return, run_mf_bayesian_q, MfConfig, MfFile, MfPrior};
use vsg_core::oracle::{certificate_bound, delta_bound, exploitability_timed, CertMode, ExploitabilityReport};
use vsg_core::soft_eval::{kl, others_product_table, uniform_state_policy, OpponentModel, StatePolicy};
use vsg_core::vpg::{run_vpg, solve_finite_horizon, OpponentMode, VpgConfig, VpgResult};
use vsg_core::VsgError;

/// Why a command did not finish normally.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or unreadable input (exit 1).
    Usage(anyhow::Error),
    /// Input read but rejected (exit 2).
    Validation(String),
    /// Solver broke down numerically (exit 3).
    Solver(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(e) => write!(f, "{e:#}"),
            Failure::Validation(m) => write!(f, "validation failed: {m}"),
            Failure::Solver(m) => write!(f, "solver failed: {m}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

impl From<VsgError> for Failure {
    fn from(e: VsgError) -> Self {
        match e {
            VsgError::Parameter(_) => Failure::Usage(anyhow!(e)),
            VsgError::CapHit { .. }
            | VsgError::NonFinite(_)
            | VsgError::Divergence(_)
            | VsgError::DegenerateWeights { .. }
            | VsgError::DegenerateFisher => Failure::Solver(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    NotConverged,
}

pub type Outcome = Result<Status, Failure>;

pub fn exit_code(outcome: &Outcome) -> i32 {
    match outcome {
        Ok(Status::Done) => 0,
        Ok(Status::NotConverged) => 3,
        Err(Failure::Usage(_)) => 1,
        Err(Failure::Validation(_)) => 2,
        Err(Failure::Solver(_)) => 3,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let started = std::time::Instant::now();
    let outcome = run(&cli.command);
    match &outcome {
        Ok(Status::Done) => {}
        Ok(Status::NotConverged) => eprintln!("warning: solver did not converge; partial trace written"),
        Err(e) => eprintln!("error: {e}"),
    }
    eprintln!("wall-clock {:.3}s", started.elapsed().as_secs_f64());
    exit_code(&outcome)
}

pub fn run(command: &Command) -> Outcome {
    match command {
        Command::SolveNash(a) | Command::SolveZs(a) | Command::SolveCe(a) => solve(command, a),
        Command::SolveMf(a) => solve_mf(command, a),
        Command::Exploitability(a) => evaluate(command, a, None, 0.0),
        Command::Certify(a) => evaluate(command, &a.policy, a.mode, a.model_error),
        Command::GenGame(a) => gen_game(a),
    }
}

#[derive(Serialize)]
struct Echo<'a> {
    suite_version: &'static str,
    #[serde(flatten)]
    config: &'a Command,
}

fn echo(dir: &Path, command: &Command) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(&Echo {
        suite_version: env!("CARGO_PKG_VERSION"),
        config: command,
    })
    .context("serialising config")?;
    output::write(dir, "config_echo.json", &(text + "\n"))?;
    Ok(())
}

pub fn load_game(path: &Path) -> Result<GameSpec, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: GameFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let game = GameSpec::from_file(&file).map_err(|e| Failure::Validation(e.to_string()))?;
    let bad = game.validate();
    if !bad.is_empty() {
        let lines: Vec<String> = bad
            .iter()
            .map(|v| format!("{}{:?}: {}", v.tensor, v.index, v.message))
            .collect();
        return Err(Failure::Validation(lines.join("; ")));
    }
    Ok(game)
}

fn parse_signal(spec: Option<&str>) -> Result<SignalScheme, Failure> {
    let Some(spec) = spec else {
        return Ok(SignalScheme::uniform(2)?);
    };
    if let Some(k) = spec.strip_prefix("uniform:") {
        let k: usize = k.parse().with_context(|| format!("signal count in {spec:?}"))?;
        return Ok(SignalScheme::uniform(k).map_err(|e| Failure::Usage(anyhow!(e)))?);
    }
    let text = fs::read_to_string(spec).with_context(|| format!("reading signal file {spec}"))?;
    let sigma: Vec<f64> = serde_json::from_str(&text).with_context(|| format!("parsing signal file {spec}"))?;
    SignalScheme::new(sigma).map_err(|e| Failure::Validation(e.to_string()))
}

fn vpg_config(game: &GameSpec, a: &SolveArgs, seed: u64) -> VpgConfig {
    let mut cfg = VpgConfig::for_game(game);
    if let Some(eta) = a.eta {
        cfg.eta = eta;
    }
    cfg.max_iters = a.iters;
    cfg.policy_tol = a.tol;
    cfg.opponent_mode = match a.opponent_mode {
        ModeArg::Oracle => OpponentMode::Oracle,
        ModeArg::Empirical => OpponentMode::Empirical,
        ModeArg::Variational => OpponentMode::Variational,
    };
    cfg.seed = seed;
    cfg.exploitability_every = a.cadence as usize;
    cfg
}

/// Largest KL between a modeler's joint model and the product of the true marginals.
fn model_error(game: &GameSpec, models: &[OpponentModel], marginals: &[StatePolicy]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, m) in models.iter().enumerate() {
        let truth = others_product_table(game, i, marginals);
        for (s, row) in truth.iter().enumerate() {
            if let Ok(d) = kl(&m.joint_at(game, s), row) {
                worst = worst.max(d);
            } else {
                worst = f64::INFINITY;
            }
        }
    }
    worst
}

fn report_bound(game: &GameSpec, mode: CertMode, eps: f64) -> Result<Option<f64>, Failure> {
    let delta = if eps > 0.0 {
        (0..game.n_agents())
            .map(|i| delta_bound(eps, game.n_actions(i), game.gamma()))
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(certificate_bound(game, mode, delta)?)
}

fn default_mode(game: &GameSpec) -> CertMode {
    match game.horizon() {
        Horizon::Finite(_) => CertMode::FiniteHorizon,
        Horizon::InfiniteDiscounted => CertMode::DiscountedJoint,
    }
}

fn models_csv(models: &[OpponentModel]) -> String {
    let mut out = String::from("modeler,other,state,action,probability\n");
    for m in models {
        for (j, model) in m.models.iter().enumerate() {
            let Some(model) = model else { continue };
            for (s, row) in model.iter().enumerate() {
                for (a, p) in row.iter().enumerate() {
                    writeln!(out, "{},{j},{s},{a},{}", m.modeler, num(*p)).unwrap();
                }
            }
        }
    }
    out
}

fn vpg_trace(run_id: &str, res: &VpgResult) -> String {
    let mut lines = Vec::new();
    for row in &res.trace {
        for i in 0..row.elbo.len() {
            lines.push(TraceLine {
                run_id,
                iter: row.iter,
                agent: i,
                elbo: Some(row.elbo[i]),
                value: row.value.get(i).copied(),
                potential: row.potential,
                policy_tv_delta: Some(row.policy_tv_delta),
                exploitability: row.exploitability,
            });
        }
    }
    output::trace_csv(&lines)
}

struct JobSummary {
    converged: bool,
    /// Greedy per-step return by iteration.
    curve: Vec<f64>,
    iterations: usize,
    max_gap: f64,
}

/// One seeded solve writing its artifacts to `dir`.
fn solve_job(command: &Command, a: &SolveArgs, game: &GameSpec, seed: u64, dir: &Path) -> Result<JobSummary, Failure> {
    let run_id = format!("{}-seed{seed}", command_name(command));
    if let Horizon::Finite(_) = game.horizon() {
        if !matches!(command, Command::SolveNash(_)) {
            return Err(Failure::Validation("finite horizons are supported by solve-nash only".into()));
        }
        let eq = solve_finite_horizon(game, a.tol.min(1e-10), 100_000)?;
        let rep = exploitability_timed(game, &eq.marginals)?;
        let mut lines = Vec::new();
        for i in 0..game.n_agents() {
            let elbo: f64 = game.initial().iter().zip(&eq.values[i]).map(|(p, v)| p * v).sum();
            lines.push(TraceLine {
                run_id: &run_id,
                iter: 0,
                agent: i,
                elbo: Some(elbo),
                value: Some(rep.achieved[i]),
                potential: None,
                policy_tv_delta: None,
                exploitability: Some(rep.max_gap),
            });
        }
        output::write(dir, "trace.csv", &output::trace_csv(&lines))?;
        output::write(dir, "final_policy.csv", &output::policy_csv(&eq.marginals))?;
        output::write(dir, "models.csv", &models_csv(&eq.models[0]))?;
        let bound = report_bound(game, CertMode::FiniteHorizon, 0.0)?;
        output::write(dir, "report.csv", &output::report_csv(&rep.gaps, bound))?;
        return Ok(JobSummary {
            converged: true,
            curve: Vec::new(),
            iterations: 1,
            max_gap: rep.max_gap,
        });
    }
    let cfg = vpg_config(game, a, seed);
    let (res, rep, target): (VpgResult, ExploitabilityReport, GameSpec) = match command {
        Command::SolveZs(_) => {
            let res = solve_zero_sum(game, &cfg)?;
            let rep = exploitability_timed(game, std::slice::from_ref(&res.marginals))?;
            (res, rep, game.clone())
        }
        Command::SolveCe(_) => {
            let scheme = parse_signal(a.signal.as_deref())?;
            let sol = solve_correlated(game, &scheme, &vpg_config(&augment(game, &scheme)?, a, seed))?;
            let mut dev = String::from("state,joint_action,mass\n");
            for (s, row) in sol.device.iter().enumerate() {
                for (j, p) in row.iter().enumerate() {
                    writeln!(dev, "{s},{j},{}", num(*p)).unwrap();
                }
            }
            output::write(dir, "device.csv", &dev)?;
            (sol.run, sol.report, sol.augmented)
        }
        _ => {
            let res = run_vpg(game, &cfg)?;
            let rep = exploitability_timed(game, std::slice::from_ref(&res.marginals))?;
            (res, rep, game.clone())
        }
    };
    output::write(dir, "trace.csv", &vpg_trace(&run_id, &res))?;
    output::write(dir, "final_policy.csv", &output::policy_csv(std::slice::from_ref(&res.marginals)))?;
    output::write(dir, "models.csv", &models_csv(&res.models))?;
    let exact = matches!(command, Command::SolveNash(_) | Command::SolveCe(_)) && a.opponent_mode == ModeArg::Oracle;
    let eps = if exact { 0.0 } else { model_error(&target, &res.models, &res.marginals) };
    let bound = report_bound(&target, CertMode::DiscountedJoint, eps)?;
    output::write(dir, "report.csv", &output::report_csv(&rep.gaps, bound))?;
    Ok(JobSummary {
        converged: res.converged,
        curve: res.trace.iter().filter_map(|r| r.greedy_return).collect(),
        iterations: res.iterations,
        max_gap: rep.max_gap,
    })
}

fn augment(game: &GameSpec, scheme: &SignalScheme) -> Result<GameSpec, Failure> {
    Ok(vsg_core::equilibria::augment_with_signal(game, scheme)?)
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::SolveNash(_) => "solve-nash",
        Command::SolveZs(_) => "solve-zs",
        Command::SolveCe(_) => "solve-ce",
        Command::SolveMf(_) => "solve-mf",
        Command::Exploitability(_) => "exploitability",
        Command::GenGame(_) => "gen-game",
        Command::Certify(_) => "certify",
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("VSG_THREADS") {
        let n: usize = v.parse().with_context(|| format!("VSG_THREADS={v:?}"))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Failure::Usage(anyhow!(e)))
}

fn solve(command: &Command, a: &SolveArgs) -> Outcome {
    if a.seeds == 0 {
        return Err(Failure::Usage(anyhow!("--seeds must be at least 1")));
    }
    let game = load_game(&a.game)?;
    if matches!(command, Command::SolveZs(_)) {
        game.require_kind(GameKind::ZeroSumTwoPlayer)?;
    }
    echo(&a.out, command)?;
    let seeds: Vec<u64> = (0..a.seeds as u64).map(|k| a.seed.wrapping_add(k)).collect();
    let summaries: Vec<(u64, Result<JobSummary, Failure>)> = if seeds.len() == 1 {
        vec![(seeds[0], solve_job(command, a, &game, seeds[0], &a.out))]
    } else {
        let pool = thread_pool()?;
        pool.install(|| {
            seeds
                .par_iter()
                .map(|&s| (s, solve_job(command, a, &game, s, &a.out.join(format!("seed-{s}")))))
                .collect()
        })
    };
    let mut status = Status::Done;
    let mut series: Vec<(u64, Vec<f64>)> = Vec::with_capacity(summaries.len());
    for (seed, summary) in summaries {
        let s = summary?;
        println!(
            "seed {seed}: {} after {} iterations, max exploitability {}",
            if s.converged { "converged" } else { "not converged" },
            s.iterations,
            num(s.max_gap)
        );
        if !s.converged {
            status = Status::NotConverged;
        }
        series.push((seed, s.curve));
    }
    if matches!(command, Command::SolveNash(_)) && series.iter().all(|(_, c)| !c.is_empty()) {
        output::write(&a.out, "learning_curve.txt", &learning_curve(&series))?;
    }
    Ok(status)
}

/// Greedy per-step return by iteration, averaged over seeds; runs that
/// stopped early hold their last value. Per-seed columns follow when more
/// than one seed ran.
pub fn learning_curve(series: &[(u64, Vec<f64>)]) -> String {
    let len = series.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    let mut out = String::from("# iter mean_return");
    if series.len() > 1 {
        for (seed, _) in series {
            write!(out, " seed_{seed}").unwrap();
        }
    }
    out.push('\n');
    for k in 0..len {
        let vals: Vec<f64> = series.iter().map(|(_, c)| c[k.min(c.len() - 1)]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        write!(out, "{k} {}", num(mean)).unwrap();
        if vals.len() > 1 {
            for v in &vals {
                write!(out, " {}", num(*v)).unwrap();
            }
        }
        out.push('\n');
    }
    out
}

fn load_mf(path: &Path) -> Result<vsg_core::mean_field::MfGameSpec, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: MfFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(file.build()?)
}

fn solve_mf(command: &Command, a: &MfArgs) -> Outcome {
    let game = load_mf(&a.game)?;
    echo(&a.out, command)?;
    let cfg = MfConfig {
        outer_iters: a.iters,
        residual_tol: a.tol,
        damping: a.damping,
        prior: if a.previous_prior { MfPrior::PreviousIterate } else { MfPrior::Uniform },
        record_history: true,
    };
    let res = run_mf_bayesian_q(&game, &cfg)?;
    let run_id = format!("solve-mf-seed{}", a.seed);
    let mut lines = Vec::new();
    for k in 0..res.iterations {
        let pol = &res.policy_history[k];
        let l = &res.history[k + 1];
        let expl = if k as u64 % a.cadence == 0 || k + 1 == res.iterations {
            Some(mf_exploitability(&game, pol, l)?)
        } else {
            None
        };
        lines.push(TraceLine {
            run_id: &run_id,
            iter: k,
            agent: 0,
            elbo: None,
            value: Some(mf_policy_return(&game, pol, l)?),
            potential: None,
            policy_tv_delta: Some(res.policy_deltas[k]),
            exploitability: expl,
        });
    }
    output::write(&a.out, "trace.csv", &output::trace_csv(&lines))?;
    let na = game.n_actions();
    let mut mf = String::from("iter,t,s,a,mass\n");
    for (k, field) in res.history.iter().enumerate() {
        for (t, slice) in field.iter().enumerate() {
            for (idx, m) in slice.iter().enumerate() {
                writeln!(mf, "{k},{t},{},{},{}", idx / na, idx % na, num(*m)).unwrap();
            }
        }
    }
    output::write(&a.out, "mean_field.csv", &mf)?;
    let policy: Vec<Vec<StatePolicy>> = res.policy.iter().map(|p| vec![p.clone()]).collect();
    output::write(&a.out, "final_policy.csv", &output::policy_csv(&policy))?;
    let gap = mf_exploitability(&game, &res.policy, &res.mean_field)?;
    let bound = game.horizon() as f64 * (na as f64).ln();
    output::write(&a.out, "report.csv", &output::report_csv(&[gap], Some(bound)))?;
    println!(
        "{} after {} outer iterations, final residual {}, exploitability {}",
        if res.converged { "converged" } else { "not converged" },
        res.iterations,
        num(res.residuals.last().copied().unwrap_or(f64::NAN)),
        num(gap)
    );
    Ok(if res.converged { Status::Done } else { Status::NotConverged })
}

/// Policies for every step of the horizon, `[t][agent][state][action]`.
fn load_policy(game: &GameSpec, spec: &str) -> Result<Vec<Vec<StatePolicy>>, Failure> {
    let steps = match game.horizon() {
        Horizon::Finite(t) => t + 1,
        Horizon::InfiniteDiscounted => 1,
    };
    let mut pol = if spec == "uniform" {
        vec![(0..game.n_agents()).map(|i| uniform_state_policy(game, i)).collect()]
    } else {
        let text = fs::read_to_string(spec).with_context(|| format!("reading {spec}"))?;
        output::parse_policy_csv(&text)?
    };
    if pol.len() == 1 && steps > 1 {
        pol = vec![pol[0].clone(); steps];
    }
    if pol.len() != steps {
        return Err(Failure::Validation(format!("policy has {} steps, game needs {steps}", pol.len())));
    }
    for step in &pol {
        if step.len() != game.n_agents() {
            return Err(Failure::Validation("policy agent count does not match the game".into()));
        }
        for (i, p) in step.iter().enumerate() {
            if p.len() != game.n_states() || p.iter().any(|r| r.len() != game.n_actions(i)) {
                return Err(Failure::Validation(format!("policy of agent {i} has the wrong shape")));
            }
            for row in p {
                let z: f64 = row.iter().sum();
                if row.iter().any(|x| !(*x >= 0.0)) || (z - 1.0).abs() > 1e-9 {
                    return Err(Failure::Validation(format!("policy row of agent {i} is not a distribution")));
                }
            }
        }
    }
    Ok(pol)
}

fn evaluate(command: &Command, a: &PolicyArgs, mode: Option<CertArg>, eps: f64) -> Outcome {
    let game = load_game(&a.game)?;
    let policy = load_policy(&game, &a.policy)?;
    echo(&a.out, command)?;
    let rep = exploitability_timed(&game, &policy)?;
    let mode = match mode {
        Some(CertArg::FiniteHorizon) => CertMode::FiniteHorizon,
        Some(CertArg::DiscountedJoint) => CertMode::DiscountedJoint,
        Some(CertArg::DiscountedMax) => CertMode::DiscountedMax,
        None => default_mode(&game),
    };
    let bound = report_bound(&game, mode, eps)?;
    output::write(&a.out, "report.csv", &output::report_csv(&rep.gaps, bound))?;
    let verdict = match bound {
        Some(b) if rep.max_gap <= b => format!("certified: max gap {} <= {}", num(rep.max_gap), num(b)),
        Some(b) => format!("not certified: max gap {} > {}", num(rep.max_gap), num(b)),
        None => format!("max gap {}; bound not applicable", num(rep.max_gap)),
    };
    println!("{verdict}");
    Ok(Status::Done)
}

fn gen_game(a: &GenArgs) -> Outcome {
    let gamma = a.gamma.unwrap_or(0.9);
    let text = match a.fixture {
        Fixture::Crowd | Fixture::CrowdIndependent => {
            let weight = if a.fixture == Fixture::Crowd { 1.0 } else { 0.0 };
            let file = crowd_ring(weight, a.horizon.unwrap_or(20));
            serde_json::to_string_pretty(&file).context("serialising game")?
        }
        f => {
            let game = match f {
                Fixture::PrisonersDilemma => prisoners_dilemma(gamma),
                Fixture::MatchingPennies => matching_pennies(gamma),
                Fixture::RockPaperScissors => rock_paper_scissors(gamma),
                Fixture::Chicken => chicken(gamma),
                Fixture::Coordination => coordination_game(&vec![1.0; a.actions], gamma)?,
                Fixture::Differential => {
                    let g = make_differential_game(DIFFERENTIAL_GRID)?;
                    match a.gamma {
                        Some(x) => g.with_gamma(x),
                        None => g,
                    }
                }
                Fixture::RandomIdentical => {
                    make_random_identical_interest_mpg(a.seed, a.agents, a.states, a.actions)?.with_gamma(gamma)
                }
                Fixture::RandomGeneral => make_random_general_sum(a.seed, a.agents, a.states, a.actions)?.with_gamma(gamma),
                Fixture::Crowd | Fixture::CrowdIndependent => unreachable!(),
            };
            let game = match a.horizon {
                Some(t) => game.with_horizon(Horizon::Finite(t)),
                None => game,
            };
            let bad = game.validate();
            if !bad.is_empty() {
                return Err(Failure::Validation(format!("{} violations in the generated game", bad.len())));
            }
            game.to_json()
        }
    };
    output::write(&a.out, "game.json", &(text + "\n"))?;
    println!("wrote {}", a.out.join("game.json").display());
    Ok(Status::Done)
}
