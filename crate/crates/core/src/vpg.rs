//! Decentralised variational policy gradient: every agent keeps a policy
//! conditioned on the others' joint action and an opponent model, and in
//! each synchronous round refreshes the model, evaluates its soft Q and
//! applies the closed-form natural-gradient update
//!
//! ```text
//! pi'(a | s, o) ∝ pi(a | s, o)^(1 - eta / (1 - gamma)) * exp(eta Q(s, a, o) / (1 - gamma))
//! ```

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, VsgError};
use crate::game::{GameKind, GameSpec, Horizon};
use crate::opponent::{
    empirical_model, fit_opponent_model, horizon_trunc, simulate, FitConfig, FittedModel,
    TrajectoryBuffer, BUFFER_CAPACITY,
};
use crate::oracle::{exploitability, joint_from_marginals, policy_values, policy_values_with_bonus, JointDist};
use crate::soft_eval::{
    entropy, expect_initial, others_product_table, soft_policy_evaluation, softmax,
    ConditionedPolicy, EvalMode, EvalOptions, OpponentModel, SoftQTable, StatePolicy,
};

/// Closed-form natural-gradient update of one conditioned policy.
pub fn npg_step(pi: &ConditionedPolicy, q: &SoftQTable, eta: f64, gamma: f64) -> Result<ConditionedPolicy> {
    let max_eta = 1.0 - gamma;
    if !(eta > 0.0 && eta <= max_eta * (1.0 + 1e-12)) {
        return Err(VsgError::Parameter(format!(
            "learning rate {eta} outside (0, {max_eta}]"
        )));
    }
    if q.n_actions() != pi.n_actions() || q.n_others() != pi.n_others() || q.n_states() != pi.n_states() {
        return Err(VsgError::Dimension("Q table does not match the policy".into()));
    }
    Ok(npg_step_raw(pi, q, eta, gamma))
}

/// [`npg_step`] without argument checks; `eta = 0` returns `pi` unchanged.
pub(crate) fn npg_step_raw(pi: &ConditionedPolicy, q: &SoftQTable, eta: f64, gamma: f64) -> ConditionedPolicy {
    let keep = (1.0 - eta / (1.0 - gamma)).max(0.0);
    let gain = eta / (1.0 - gamma);
    let mut out = pi.clone();
    let mut logits = vec![0.0; pi.n_actions()];
    for s in 0..pi.n_states() {
        for o in 0..pi.n_others() {
            let old = pi.row(s, o);
            let qr = q.row(s, o);
            for (a, l) in logits.iter_mut().enumerate() {
                let base = if keep == 0.0 {
                    0.0
                } else if old[a] > 0.0 {
                    keep * old[a].ln()
                } else {
                    f64::NEG_INFINITY
                };
                *l = base + gain * qr[a];
            }
            out.row_mut(s, o).copy_from_slice(&softmax(&logits));
        }
    }
    out
}

/// `pi(a | s) = sum_o rho(o | s) pi(a | s, o)`.
pub fn marginal_policy(game: &GameSpec, pi: &ConditionedPolicy, rho: &OpponentModel) -> StatePolicy {
    (0..game.n_states())
        .map(|s| {
            let r = rho.joint_at(game, s);
            let mut row = vec![0.0; pi.n_actions()];
            for (o, &w) in r.iter().enumerate() {
                for (x, p) in row.iter_mut().zip(pi.row(s, o)) {
                    *x += w * p;
                }
            }
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= z);
            row
        })
        .collect()
}

/// Normalised discounted state visitation `d = (1 - gamma) mu0 + gamma P_pi^T d`
/// under independent play of `marginals`.
pub fn discounted_visitation(game: &GameSpec, marginals: &[StatePolicy]) -> Result<Vec<f64>> {
    discounted_visitation_of(game, &joint_from_marginals(game, marginals))
}

/// Visitation under an arbitrary per-state joint-action distribution.
///
/// On pre-discounted games the absorbing state is excluded and the occupancy
/// of the remaining states is normalised.
pub fn discounted_visitation_of(game: &GameSpec, dist: &JointDist) -> Result<Vec<f64>> {
    if game.horizon() != Horizon::InfiniteDiscounted {
        return Err(VsgError::Horizon("visitation needs a discounted game".into()));
    }
    let ns = game.n_states();
    let live: Vec<usize> = (0..ns).filter(|&s| game.absorbing_state() != Some(s)).collect();
    let gamma = game.effective_gamma();
    let n = live.len();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (c, &s) in live.iter().enumerate() {
        b[c] = (1.0 - gamma) * game.initial()[s];
        if game.is_pre_discounted() {
            b[c] = game.initial()[s];
        }
        for (j, &p) in dist[s].iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (r, &sp) in live.iter().enumerate() {
                m[(r, c)] -= gamma * p * game.transition_row(s, j)[sp];
            }
        }
    }
    let x = m
        .lu()
        .solve(&b)
        .ok_or_else(|| VsgError::Parameter("visitation system is singular".into()))?;
    let mut d = vec![0.0; ns];
    for (c, &s) in live.iter().enumerate() {
        d[s] = x[c].max(0.0);
    }
    let z: f64 = d.iter().sum();
    d.iter_mut().for_each(|x| *x /= z);
    Ok(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialConvention {
    /// Agent 0's regularised value, which carries only its own entropy.
    OwnEntropy,
    /// Shared reward plus the entropies of every agent's marginal policy,
    /// discounted along independent play.
    JointEntropy,
    /// Shared reward only.
    Unregularized,
}

impl PotentialConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            PotentialConvention::OwnEntropy => "own-entropy",
            PotentialConvention::JointEntropy => "joint-entropy",
            PotentialConvention::Unregularized => "unregularized",
        }
    }
}

fn marginals_of(game: &GameSpec, policies: &[ConditionedPolicy], models: &[OpponentModel]) -> Vec<StatePolicy> {
    policies
        .iter()
        .zip(models)
        .map(|(pi, rho)| marginal_policy(game, pi, rho))
        .collect()
}

/// Potential of an identical-interest game at the given policies and models.
pub fn potential_value(
    game: &GameSpec,
    policies: &[ConditionedPolicy],
    models: &[OpponentModel],
    convention: PotentialConvention,
    opts: &EvalOptions,
) -> Result<f64> {
    game.require_kind(GameKind::IdenticalInterest)?;
    let marginals = marginals_of(game, policies, models);
    potential_at(game, policies, models, &marginals, convention, opts)
}

fn potential_at(
    game: &GameSpec,
    policies: &[ConditionedPolicy],
    models: &[OpponentModel],
    marginals: &[StatePolicy],
    convention: PotentialConvention,
    opts: &EvalOptions,
) -> Result<f64> {
    match convention {
        PotentialConvention::OwnEntropy => {
            let q = soft_policy_evaluation(
                game,
                0,
                &policies[0],
                &models[0],
                EvalMode::OracleOpponent,
                Some(marginals),
                opts,
            )?;
            Ok(expect_initial(game, &q.v))
        }
        PotentialConvention::JointEntropy => {
            let bonus: Vec<f64> = (0..game.n_states())
                .map(|s| marginals.iter().map(|m| entropy(&m[s])).sum())
                .collect();
            let v = policy_values_with_bonus(game, 0, &joint_from_marginals(game, marginals), &bonus)?;
            Ok(expect_initial(game, &v))
        }
        PotentialConvention::Unregularized => {
            let v = policy_values(game, 0, &joint_from_marginals(game, marginals))?;
            Ok(expect_initial(game, &v))
        }
    }
}

/// Smoothness constant of the regularised potential for `n` agents.
pub fn smoothness_constant(n: usize, gamma: f64, max_actions: usize) -> f64 {
    let n = n as f64;
    let k = 1.0 - gamma;
    2.0 * (n + 1.0).powi(2) / k.powi(3)
        + 2.0 * (n * n + n + 1.0) * (1.0 + (max_actions as f64).ln()) / k.powi(2)
        + (3.0 * n + 2.0) / k
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpponentMode {
    /// Models are the other agents' true marginals.
    Oracle,
    /// Laplace-smoothed action counts from sampled play.
    Empirical,
    /// Reward-estimation fit of each opponent from sampled play.
    Variational,
}

impl OpponentMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "oracle" => Some(OpponentMode::Oracle),
            "empirical" => Some(OpponentMode::Empirical),
            "variational" => Some(OpponentMode::Variational),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OpponentMode::Oracle => "oracle",
            OpponentMode::Empirical => "empirical",
            OpponentMode::Variational => "variational",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VpgConfig {
    pub eta: f64,
    pub max_iters: usize,
    /// Stop once successive policies differ by less than this in row TV.
    pub policy_tol: f64,
    pub opponent_mode: OpponentMode,
    pub seed: u64,
    pub eval: EvalOptions,
    /// Compute exact exploitability every this many rounds; 0 disables.
    pub exploitability_every: usize,
    pub potential: PotentialConvention,
    /// Sampled episodes per round in the sampling modes.
    pub episodes_per_iter: usize,
    /// Episode length; defaults to the reward-estimation truncation horizon.
    pub episode_len: Option<usize>,
    pub buffer_capacity: usize,
    pub fit: FitConfig,
    /// Record exact unregularised values in the trace.
    pub track_values: bool,
    /// Starting policies; uniform when `None`.
    pub init: Option<Vec<ConditionedPolicy>>,
}

impl VpgConfig {
    /// Defaults for `game`: `eta = (1 - gamma) / 2`, oracle opponents.
    pub fn for_game(game: &GameSpec) -> Self {
        Self {
            eta: (1.0 - game.gamma()) / 2.0,
            max_iters: 1000,
            policy_tol: 1e-8,
            opponent_mode: OpponentMode::Oracle,
            seed: 0,
            eval: EvalOptions::default(),
            exploitability_every: 0,
            potential: PotentialConvention::OwnEntropy,
            episodes_per_iter: 16,
            episode_len: None,
            buffer_capacity: BUFFER_CAPACITY,
            fit: FitConfig {
                inner_iters: 5,
                ..FitConfig::default()
            },
            track_values: true,
            init: None,
        }
    }

    fn check(&self, game: &GameSpec) -> Result<()> {
        let max_eta = 1.0 - game.gamma();
        if !(self.eta > 0.0 && self.eta <= max_eta * (1.0 + 1e-12)) {
            return Err(VsgError::Parameter(format!(
                "learning rate {} outside (0, {max_eta}]",
                self.eta
            )));
        }
        if !(self.policy_tol > 0.0) {
            return Err(VsgError::Parameter("policy_tol must be > 0".into()));
        }
        if game.horizon() != Horizon::InfiniteDiscounted {
            return Err(VsgError::Horizon(
                "policy-gradient learning needs a discounted game; use solve_finite_horizon".into(),
            ));
        }
        Ok(())
    }
}

/// One round of the learning trace, measured at the policies the round started from.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub potential: Option<f64>,
    pub elbo: Vec<f64>,
    pub value: Vec<f64>,
    /// Per-step return of the argmax joint policy, averaged over agents.
    pub greedy_return: Option<f64>,
    /// Largest row TV between the round's input and output policies.
    pub policy_tv_delta: f64,
    pub exploitability: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VpgResult {
    pub policies: Vec<ConditionedPolicy>,
    pub models: Vec<OpponentModel>,
    pub marginals: Vec<StatePolicy>,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub iterations: usize,
}

/// How opponent models are refreshed inside a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Refresh {
    Mode(OpponentMode),
    /// Analytic zero-sum update applied after Q is evaluated.
    ZeroSum,
}

pub fn run_vpg(game: &GameSpec, config: &VpgConfig) -> Result<VpgResult> {
    run_vpg_inner(game, config, Refresh::Mode(config.opponent_mode))
}

struct Sampler {
    rng: ChaCha8Rng,
    buffer: TrajectoryBuffer,
    fitted: Vec<Vec<Option<FittedModel>>>,
}

pub(crate) fn run_vpg_inner(game: &GameSpec, config: &VpgConfig, refresh: Refresh) -> Result<VpgResult> {
    config.check(game)?;
    let n = game.n_agents();
    let gamma = game.gamma();
    let mut policies: Vec<ConditionedPolicy> = match &config.init {
        Some(init) => {
            if init.len() != n || init.iter().enumerate().any(|(i, p)| p.owner != i) {
                return Err(VsgError::Dimension("initial policies: one per agent, in order".into()));
            }
            init.clone()
        }
        None => (0..n).map(|i| ConditionedPolicy::uniform(game, i)).collect(),
    };
    let mut models: Vec<OpponentModel> = (0..n).map(|i| OpponentModel::uniform(game, i)).collect();
    let identical = game.detect_kind() == GameKind::IdenticalInterest;
    let mut sampler = Sampler {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        buffer: TrajectoryBuffer::new(config.buffer_capacity),
        fitted: vec![vec![None; n]; n],
    };
    let episode_len = config.episode_len.unwrap_or_else(|| horizon_trunc(gamma));
    let mut trace = Vec::new();
    let mut converged = false;
    for iter in 0..config.max_iters {
        let marginals = marginals_of(game, &policies, &models);
        let oracle_eval = matches!(refresh, Refresh::Mode(OpponentMode::Oracle));
        match refresh {
            Refresh::Mode(OpponentMode::Oracle) => {
                models = (0..n).map(|i| OpponentModel::from_marginals(i, &marginals)).collect();
            }
            Refresh::Mode(mode) => {
                for traj in simulate(game, &marginals, config.episodes_per_iter, episode_len, &mut sampler.rng) {
                    sampler.buffer.push(traj);
                }
                let data = sampler.buffer.trajectories();
                for i in 0..n {
                    for j in 0..n {
                        if j == i {
                            continue;
                        }
                        let model = if mode == OpponentMode::Empirical {
                            empirical_model(game, &data, j, 1.0)
                        } else {
                            // the modeler knows its own marginal; third parties come from its models
                            let context: Vec<StatePolicy> = (0..n)
                                .map(|k| if k == i { marginals[i].clone() } else { models[i].model(k).clone() })
                                .collect();
                            let fit_cfg = FitConfig {
                                horizon: Some(config.fit.horizon.unwrap_or(episode_len)),
                                ..config.fit
                            };
                            let warm = sampler.fitted[i][j].take();
                            let fit = fit_opponent_model(game, &data, j, &context, warm, &fit_cfg, &mut sampler.rng)?;
                            let rho = fit.rho.clone();
                            sampler.fitted[i][j] = Some(fit);
                            rho
                        };
                        models[i].set_model(j, model);
                    }
                }
            }
            Refresh::ZeroSum => {}
        }
        let mut qs = Vec::with_capacity(n);
        for i in 0..n {
            let q = if oracle_eval {
                soft_policy_evaluation(
                    game,
                    i,
                    &policies[i],
                    &models[i],
                    EvalMode::OracleOpponent,
                    Some(&marginals),
                    &config.eval,
                )?
            } else {
                soft_policy_evaluation(game, i, &policies[i], &models[i], EvalMode::ModeledOpponent, None, &config.eval)?
            };
            qs.push(q);
        }
        let elbo: Vec<f64> = qs.iter().map(|q| expect_initial(game, &q.v)).collect();
        if refresh == Refresh::ZeroSum {
            for i in 0..n {
                let j = 1 - i;
                let prior = crate::soft_eval::uniform_state_policy(game, j);
                let row = crate::equilibria::zero_sum_opponent_update(game, &qs[i], &prior, &models[i], &marginals[i])?;
                models[i].set_model(j, row);
            }
        }
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            next.push(npg_step(&policies[i], &qs[i], config.eta, gamma)?);
        }
        let delta = policies
            .iter()
            .zip(&next)
            .map(|(a, b)| a.max_tv(b))
            .fold(0.0, f64::max);
        let (value, greedy_return) = if config.track_values {
            let dist = joint_from_marginals(game, &marginals);
            let value = (0..n)
                .map(|i| policy_values(game, i, &dist).map(|v| expect_initial(game, &v)))
                .collect::<Result<Vec<_>>>()?;
            (value, Some(greedy_return(game, &marginals)?))
        } else {
            (Vec::new(), None)
        };
        let potential = if identical {
            Some(match config.potential {
                PotentialConvention::OwnEntropy if oracle_eval => elbo[0],
                conv => potential_at(game, &policies, &models, &marginals, conv, &config.eval)?,
            })
        } else {
            None
        };
        let expl = if config.exploitability_every > 0 && iter % config.exploitability_every == 0 {
            Some(exploitability(game, &marginals)?.max_gap)
        } else {
            None
        };
        trace.push(TraceRow {
            iter,
            potential,
            elbo,
            value,
            greedy_return,
            policy_tv_delta: delta,
            exploitability: expl,
        });
        policies = next;
        if delta < config.policy_tol {
            converged = true;
            break;
        }
    }
    let marginals = marginals_of(game, &policies, &models);
    Ok(VpgResult {
        iterations: trace.len(),
        policies,
        models,
        marginals,
        trace,
        converged,
    })
}

/// `(1 - gamma)` times the agent-averaged value of playing each marginal's argmax.
pub fn greedy_return(game: &GameSpec, marginals: &[StatePolicy]) -> Result<f64> {
    let greedy: Vec<StatePolicy> = marginals
        .iter()
        .map(|pol| {
            pol.iter()
                .map(|row| {
                    let best = (0..row.len()).fold(0, |b, a| if row[a] > row[b] { a } else { b });
                    (0..row.len()).map(|a| if a == best { 1.0 } else { 0.0 }).collect()
                })
                .collect()
        })
        .collect();
    let dist = joint_from_marginals(game, &greedy);
    let n = game.n_agents();
    let mut total = 0.0;
    for i in 0..n {
        total += expect_initial(game, &policy_values(game, i, &dist)?);
    }
    Ok((1.0 - game.gamma()) * total / n as f64)
}

/// Time-indexed soft equilibrium of a finite-horizon game.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteEquilibrium {
    /// `[t][agent]`
    pub policies: Vec<Vec<ConditionedPolicy>>,
    /// `[t][agent]`
    pub models: Vec<Vec<OpponentModel>>,
    /// `[t][agent]`
    pub marginals: Vec<Vec<StatePolicy>>,
    /// Soft values at `t = 0`, `[agent][state]`.
    pub values: Vec<Vec<f64>>,
}

/// Backward induction for the soft equilibrium of a `Finite(T)` game.
///
/// At each step the conditioned policies are the soft best responses to the
/// continuation values, and the marginals are the fixed point of
/// `m_i = sum_o prod_{j != i} m_j(o_j) pi_i(. | s, o)`, solved per state by
/// Gauss-Seidel sweeps to `tol`.
pub fn solve_finite_horizon(game: &GameSpec, tol: f64, max_sweeps: usize) -> Result<FiniteEquilibrium> {
    let Horizon::Finite(t_max) = game.horizon() else {
        return Err(VsgError::Horizon("solve_finite_horizon needs Finite(T)".into()));
    };
    let n = game.n_agents();
    let ns = game.n_states();
    let space = game.joint();
    let mut v_next = vec![vec![0.0; ns]; n];
    let mut policies = Vec::with_capacity(t_max + 1);
    let mut models = Vec::with_capacity(t_max + 1);
    let mut marginals_t = Vec::with_capacity(t_max + 1);
    for _t in (0..=t_max).rev() {
        let mut pis: Vec<ConditionedPolicy> = (0..n).map(|i| ConditionedPolicy::uniform(game, i)).collect();
        for (i, pi) in pis.iter_mut().enumerate() {
            for s in 0..ns {
                for o in 0..space.others_len(i) {
                    let logits: Vec<f64> = (0..game.n_actions(i))
                        .map(|a| {
                            let j = space.join(i, a, o);
                            let cont: f64 = game.transition_row(s, j).iter().zip(&v_next[i]).map(|(p, v)| p * v).sum();
                            game.reward(i, s, j) + cont
                        })
                        .collect();
                    pi.row_mut(s, o).copy_from_slice(&softmax(&logits));
                }
            }
        }
        let mut marg: Vec<StatePolicy> = (0..n).map(|i| crate::soft_eval::uniform_state_policy(game, i)).collect();
        for s in 0..ns {
            let mut done = false;
            for _ in 0..max_sweeps {
                let mut change: f64 = 0.0;
                for i in 0..n {
                    let rho = crate::soft_eval::product_over_others(game, i, s, |j, s, a| marg[j][s][a]);
                    let mut row = vec![0.0; game.n_actions(i)];
                    for (o, &w) in rho.iter().enumerate() {
                        for (x, p) in row.iter_mut().zip(pis[i].row(s, o)) {
                            *x += w * p;
                        }
                    }
                    change = change.max(crate::soft_eval::tv(&row, &marg[i][s]));
                    marg[i][s] = row;
                }
                if change < tol {
                    done = true;
                    break;
                }
            }
            if !done {
                return Err(VsgError::CapHit {
                    cap: max_sweeps,
                    residual: f64::NAN,
                });
            }
        }
        let rhos: Vec<OpponentModel> = (0..n).map(|i| OpponentModel::from_marginals(i, &marg)).collect();
        let mut v = vec![vec![0.0; ns]; n];
        for i in 0..n {
            let rho_t = others_product_table(game, i, &marg);
            for s in 0..ns {
                let mut acc = 0.0;
                for (o, &w) in rho_t[s].iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for (a, &p) in pis[i].row(s, o).iter().enumerate() {
                        let j = space.join(i, a, o);
                        let cont: f64 = game.transition_row(s, j).iter().zip(&v_next[i]).map(|(q, x)| q * x).sum();
                        acc += w * p * (game.reward(i, s, j) + cont - p.ln());
                    }
                }
                v[i][s] = acc;
            }
        }
        v_next = v;
        policies.push(pis);
        models.push(rhos);
        marginals_t.push(marg);
    }
    policies.reverse();
    models.reverse();
    marginals_t.reverse();
    Ok(FiniteEquilibrium {
        policies,
        models,
        marginals: marginals_t,
        values: v_next,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{make_random_identical_interest_mpg, prisoners_dilemma};
    use crate::soft_eval::{soft_best_response, uniform, uniform_state_policy};

    fn table(rows: Vec<f64>) -> SoftQTable {
        let n = rows.len();
        SoftQTable::from_parts(0, EvalMode::ModeledOpponent, 1, n, rows, vec![0.0])
    }

    fn single_row_policy(p: &[f64]) -> ConditionedPolicy {
        let g = crate::game::make_matrix_game(&[p.len(), 1], &[vec![0.0; p.len()], vec![0.0; p.len()]], 0.5).unwrap();
        ConditionedPolicy::from_marginal(&g, 0, &vec![p.to_vec()]).unwrap()
    }

    #[test]
    fn npg_examples() {
        let pi = single_row_policy(&[0.5, 0.5]);
        let out = npg_step(&pi, &table(vec![1.0, 0.0]), 0.25, 0.5).unwrap();
        assert!((out.row(0, 0)[0] - 0.6224593312018546).abs() < 1e-12);
        let out = npg_step(&pi, &table(vec![2.0, 2.0]), 0.25, 0.5).unwrap();
        assert_eq!(out.row(0, 0), &[0.5, 0.5]);
        let pi = single_row_policy(&[0.9, 0.1]);
        let out = npg_step(&pi, &table(vec![1.0, 0.0]), 0.5, 0.5).unwrap();
        assert!((out.row(0, 0)[0] - 0.7310585786300049).abs() < 1e-12);
        assert!(npg_step(&pi, &table(vec![1.0, 0.0]), 0.6, 0.5).is_err());
        assert!(npg_step(&pi, &table(vec![1.0, 0.0]), 0.0, 0.5).is_err());
    }

    #[test]
    fn best_response_is_npg_fixed_point() {
        let q = table(vec![0.3, -1.2, 2.0]);
        let br = soft_best_response(&q);
        let out = npg_step(&br, &q, 0.1, 0.8).unwrap();
        assert!(out.max_tv(&br) < 1e-12);
    }

    #[test]
    fn marginal_examples() {
        let g = prisoners_dilemma(0.5);
        let pi = ConditionedPolicy::from_rows(&g, 0, &[vec![vec![0.9, 0.1], vec![0.2, 0.8]]]).unwrap();
        let mut rho = OpponentModel::uniform(&g, 0);
        rho.set_model(1, vec![vec![1.0, 0.0]]);
        assert_eq!(marginal_policy(&g, &pi, &rho), vec![vec![0.9, 0.1]]);
        rho.set_model(1, vec![vec![0.25, 0.75]]);
        let m = marginal_policy(&g, &pi, &rho);
        assert!((m[0][0] - (0.25 * 0.9 + 0.75 * 0.2)).abs() < 1e-15);
    }

    #[test]
    fn visitation_examples() {
        let g = prisoners_dilemma(0.7);
        let m = vec![uniform_state_policy(&g, 0), uniform_state_policy(&g, 1)];
        assert_eq!(discounted_visitation(&g, &m).unwrap(), vec![1.0]);
        let g = make_random_identical_interest_mpg(5, 2, 3, 2).unwrap().with_gamma(0.0).with_initial(vec![0.2, 0.3, 0.5]).unwrap();
        let m = vec![uniform_state_policy(&g, 0), uniform_state_policy(&g, 1)];
        let d = discounted_visitation(&g, &m).unwrap();
        for (a, b) in d.iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn smoothness_examples() {
        assert!((smoothness_constant(2, 0.9, 2) - 20450.406052783925).abs() < 1e-6);
        assert!(smoothness_constant(3, 0.9, 2) > smoothness_constant(2, 0.9, 2));
        assert!(smoothness_constant(2, 0.95, 2) > smoothness_constant(2, 0.9, 2));
        let at0 = 2.0 * 9.0 + 2.0 * 7.0 * (1.0 + 3f64.ln()) + 8.0;
        assert!((smoothness_constant(2, 0.0, 3) - at0).abs() < 1e-9);
    }

    #[test]
    fn potential_of_zero_game() {
        let g = crate::game::make_matrix_game(&[2, 3], &[vec![0.0; 6], vec![0.0; 6]], 0.5).unwrap();
        let pis = vec![ConditionedPolicy::uniform(&g, 0), ConditionedPolicy::uniform(&g, 1)];
        let rhos = vec![OpponentModel::uniform(&g, 0), OpponentModel::uniform(&g, 1)];
        let opts = EvalOptions::default();
        let joint = potential_value(&g, &pis, &rhos, PotentialConvention::JointEntropy, &opts).unwrap();
        assert!((joint - (2f64.ln() + 3f64.ln()) / 0.5).abs() < 1e-9);
        let own = potential_value(&g, &pis, &rhos, PotentialConvention::OwnEntropy, &opts).unwrap();
        assert!((own - 2f64.ln() / 0.5).abs() < 1e-9);
        assert!(potential_value(&prisoners_dilemma(0.5), &pis, &rhos, PotentialConvention::JointEntropy, &opts).is_err());
    }

    #[test]
    fn pd_soft_equilibrium_tilts_to_defect() {
        let g = prisoners_dilemma(0.5);
        let res = run_vpg(&g, &VpgConfig::for_game(&g)).unwrap();
        assert!(res.converged);
        for m in &res.marginals {
            assert!(m[0][1] > 0.5);
        }
    }

    #[test]
    fn finite_solver_one_shot_is_softmax() {
        let g = crate::game::make_matrix_game(&[2, 2], &[vec![1.0, 1.0, 0.0, 0.0], vec![0.0; 4]], 0.5)
            .unwrap()
            .with_horizon(Horizon::Finite(0));
        let eq = solve_finite_horizon(&g, 1e-13, 100_000).unwrap();
        let m = &eq.marginals[0];
        assert!((m[0][0][0] - softmax(&[1.0, 0.0])[0]).abs() < 1e-12);
        assert_eq!(m[1][0], uniform(2));
    }
}
