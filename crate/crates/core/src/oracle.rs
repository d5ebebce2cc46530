//! Exact, regularisation-free reference computations: policy values, best
//! responses, exploitability, epsilon-Nash certification, and the dense
//! global natural-gradient step used to cross-check per-agent updates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, VsgError};
use crate::game::{GameSpec, Horizon};
use crate::soft_eval::{
    others_product_table, soft_best_response, soft_policy_evaluation, softmax, tv,
    ConditionedPolicy, EvalMode, EvalOptions, OpponentModel, StatePolicy,
};
use crate::vpg::{discounted_visitation_of, npg_step_raw};

/// Value-iteration tolerance used by the oracles.
pub const ORACLE_TOL: f64 = 1e-12;
const ORACLE_CAP: usize = 10_000_000;
/// Relative eigenvalue cutoff of the Fisher pseudo-inverse.
pub const FISHER_CUTOFF: f64 = 1e-8;
/// Central-difference step of the reference gradient.
pub const FD_STEP: f64 = 1e-5;

/// Per-state distribution over joint actions, `[state][joint]`.
pub type JointDist = Vec<Vec<f64>>;

/// Product of per-agent marginals as a joint distribution per state.
pub fn joint_from_marginals(game: &GameSpec, marginals: &[StatePolicy]) -> JointDist {
    let space = game.joint();
    (0..game.n_states())
        .map(|s| {
            (0..space.len())
                .map(|j| {
                    space
                        .decode(j)
                        .iter()
                        .enumerate()
                        .map(|(i, &a)| marginals[i][s][a])
                        .product()
                })
                .collect()
        })
        .collect()
}

fn expected_reward(game: &GameSpec, agent: usize, s: usize, dist: &[f64]) -> f64 {
    game.rewards_at(agent, s).iter().zip(dist).map(|(r, p)| r * p).sum()
}

fn state_kernel(game: &GameSpec, s: usize, dist: &[f64]) -> Vec<f64> {
    let mut row = vec![0.0; game.n_states()];
    for (j, &p) in dist.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (sp, q) in game.transition_row(s, j).iter().enumerate() {
            row[sp] += p * q;
        }
    }
    row
}

/// Solves `(I - gamma P) V = r` over non-absorbing states.
fn solve_values(game: &GameSpec, rewards: &[f64], kernel: &[Vec<f64>]) -> Result<Vec<f64>> {
    let gamma = game.effective_gamma();
    let live: Vec<usize> = (0..game.n_states())
        .filter(|&s| game.absorbing_state() != Some(s))
        .collect();
    let n = live.len();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (r, &s) in live.iter().enumerate() {
        b[r] = rewards[s];
        for (c, &sp) in live.iter().enumerate() {
            m[(r, c)] -= gamma * kernel[s][sp];
        }
    }
    let x = m
        .lu()
        .solve(&b)
        .ok_or_else(|| VsgError::Parameter("policy evaluation system is singular".into()))?;
    let mut v = vec![0.0; game.n_states()];
    for (r, &s) in live.iter().enumerate() {
        v[s] = x[r];
    }
    Ok(v)
}

/// Unregularised values of `agent` when play follows `dist`.
///
/// Infinite horizon: discounted values by a direct linear solve.
/// `Finite(T)`: undiscounted values at `t = 0` by backward induction.
pub fn policy_values(game: &GameSpec, agent: usize, dist: &JointDist) -> Result<Vec<f64>> {
    policy_values_timed(game, agent, std::slice::from_ref(dist))
}

/// Discounted values of `agent` for reward plus a per-state `bonus`.
pub fn policy_values_with_bonus(game: &GameSpec, agent: usize, dist: &JointDist, bonus: &[f64]) -> Result<Vec<f64>> {
    if game.horizon() != Horizon::InfiniteDiscounted {
        return Err(VsgError::Horizon("bonus values need a discounted game".into()));
    }
    let ns = game.n_states();
    let rewards: Vec<f64> = (0..ns)
        .map(|s| expected_reward(game, agent, s, &dist[s]) + bonus[s])
        .collect();
    let kernel: Vec<Vec<f64>> = (0..ns).map(|s| state_kernel(game, s, &dist[s])).collect();
    solve_values(game, &rewards, &kernel)
}

/// As [`policy_values`], with one joint distribution per step on finite horizons.
pub fn policy_values_timed(game: &GameSpec, agent: usize, dists: &[JointDist]) -> Result<Vec<f64>> {
    let ns = game.n_states();
    match game.horizon() {
        Horizon::InfiniteDiscounted => {
            let dist = &dists[0];
            let rewards: Vec<f64> = (0..ns).map(|s| expected_reward(game, agent, s, &dist[s])).collect();
            let kernel: Vec<Vec<f64>> = (0..ns).map(|s| state_kernel(game, s, &dist[s])).collect();
            solve_values(game, &rewards, &kernel)
        }
        Horizon::Finite(t_max) => {
            let mut v = vec![0.0; ns];
            for t in (0..=t_max).rev() {
                let dist = if dists.len() == 1 { &dists[0] } else { &dists[t] };
                v = (0..ns)
                    .map(|s| {
                        let k = state_kernel(game, s, &dist[s]);
                        expected_reward(game, agent, s, &dist[s])
                            + k.iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
                    })
                    .collect();
            }
            Ok(v)
        }
    }
}

/// Deterministic best response: `policy[t][s]` (one step for infinite
/// horizons) and the values it attains at `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    pub policy: Vec<Vec<usize>>,
    pub values: Vec<f64>,
}

/// Lowest index within `ORACLE_TOL` of the maximum.
fn argmax_low(row: &[f64]) -> (usize, f64) {
    let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let k = row
        .iter()
        .position(|&x| x >= best - ORACLE_TOL * best.abs().max(1.0))
        .unwrap_or(0);
    (k, best)
}

/// Own-action values at `s` against the frozen opponent distribution.
fn br_q_row(game: &GameSpec, agent: usize, s: usize, opp: &[f64], v: &[f64], gamma: f64) -> Vec<f64> {
    let space = game.joint();
    (0..game.n_actions(agent))
        .map(|a| {
            let mut acc = 0.0;
            for (o, &p) in opp.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let j = space.join(agent, a, o);
                let cont: f64 = game.transition_row(s, j).iter().zip(v).map(|(q, x)| q * x).sum();
                acc += p * (game.reward(agent, s, j) + gamma * cont);
            }
            acc
        })
        .collect()
}

/// Unregularised optimal deterministic policy of `agent` against a frozen
/// opponent distribution `opponents[s][o]` (or `[t][s][o]` for finite horizons
/// when more than one step is supplied). Ties go to the lowest action.
pub fn exact_best_response(game: &GameSpec, agent: usize, opponents: &[Vec<f64>]) -> Result<BestResponse> {
    exact_best_response_timed(game, agent, std::slice::from_ref(&opponents.to_vec()))
}

pub fn exact_best_response_timed(
    game: &GameSpec,
    agent: usize,
    opponents: &[Vec<Vec<f64>>],
) -> Result<BestResponse> {
    let ns = game.n_states();
    match game.horizon() {
        Horizon::InfiniteDiscounted => {
            let opp = &opponents[0];
            let gamma = game.effective_gamma();
            let mut v = vec![0.0; ns];
            let mut converged = false;
            for _ in 0..ORACLE_CAP {
                let next: Vec<f64> = (0..ns)
                    .map(|s| {
                        if game.absorbing_state() == Some(s) {
                            0.0
                        } else {
                            argmax_low(&br_q_row(game, agent, s, &opp[s], &v, gamma)).1
                        }
                    })
                    .collect();
                let res = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                v = next;
                if res < ORACLE_TOL {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(VsgError::CapHit { cap: ORACLE_CAP, residual: f64::NAN });
            }
            let policy: Vec<usize> = (0..ns)
                .map(|s| argmax_low(&br_q_row(game, agent, s, &opp[s], &v, gamma)).0)
                .collect();
            // exact values of the greedy policy
            let dist: JointDist = (0..ns)
                .map(|s| {
                    let mut row = vec![0.0; game.n_joint()];
                    for (o, &p) in opp[s].iter().enumerate() {
                        row[game.joint().join(agent, policy[s], o)] += p;
                    }
                    row
                })
                .collect();
            let values = policy_values(game, agent, &dist)?;
            Ok(BestResponse {
                policy: vec![policy],
                values,
            })
        }
        Horizon::Finite(t_max) => {
            let mut v = vec![0.0; ns];
            let mut policy = vec![vec![0; ns]; t_max + 1];
            for t in (0..=t_max).rev() {
                let opp = if opponents.len() == 1 { &opponents[0] } else { &opponents[t] };
                let mut next = vec![0.0; ns];
                for s in 0..ns {
                    let (k, best) = argmax_low(&br_q_row(game, agent, s, &opp[s], &v, 1.0));
                    policy[t][s] = k;
                    next[s] = best;
                }
                v = next;
            }
            Ok(BestResponse { policy, values: v })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertMode {
    /// `T ln max_i |A^i|` for finite horizons.
    FiniteHorizon,
    /// `delta + ln |A| / (1 - gamma)` with `|A|` the joint action count.
    DiscountedJoint,
    /// `delta + ln max_i |A^i| / (1 - gamma)`.
    DiscountedMax,
}

impl CertMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CertMode::FiniteHorizon => "finite-horizon",
            CertMode::DiscountedJoint => "discounted-joint",
            CertMode::DiscountedMax => "discounted-max",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExploitabilityReport {
    /// Best-response value minus achieved value, per agent, over the initial distribution.
    pub gaps: Vec<f64>,
    pub max_gap: f64,
    pub achieved: Vec<f64>,
    pub best: Vec<f64>,
    /// Certifying bound used and its value; `None` until certified or when not applicable.
    pub bound: Option<(CertMode, f64)>,
    pub pass: Option<bool>,
}

fn initial_mean(game: &GameSpec, v: &[f64]) -> f64 {
    game.initial().iter().zip(v).map(|(p, x)| p * x).sum()
}

/// Exact exploitability of independent play by `marginals`.
pub fn exploitability(game: &GameSpec, marginals: &[StatePolicy]) -> Result<ExploitabilityReport> {
    exploitability_timed(game, std::slice::from_ref(&marginals.to_vec()))
}

/// As [`exploitability`] with per-step marginals (`[t][agent][s][a]`) on finite horizons.
pub fn exploitability_timed(game: &GameSpec, marginals: &[Vec<StatePolicy>]) -> Result<ExploitabilityReport> {
    let n = game.n_agents();
    let dists: Vec<JointDist> = marginals.iter().map(|m| joint_from_marginals(game, m)).collect();
    let mut gaps = Vec::with_capacity(n);
    let mut achieved = Vec::with_capacity(n);
    let mut best = Vec::with_capacity(n);
    for i in 0..n {
        let v = initial_mean(game, &policy_values_timed(game, i, &dists)?);
        let opp: Vec<Vec<Vec<f64>>> = marginals.iter().map(|m| others_product_table(game, i, m)).collect();
        let br = exact_best_response_timed(game, i, &opp)?;
        let b = initial_mean(game, &br.values);
        achieved.push(v);
        best.push(b);
        gaps.push(b - v);
    }
    let max_gap = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ExploitabilityReport {
        gaps,
        max_gap,
        achieved,
        best,
        bound: None,
        pass: None,
    })
}

/// Value-error bound `2(1 + ln|A^i|)/(1-gamma)^2 sqrt(eps/2) + eps/(1-gamma)`
/// for Q evaluated with an opponent model at KL distance `eps` from the truth.
pub fn delta_bound(eps: f64, n_actions: usize, gamma: f64) -> f64 {
    let k = 1.0 - gamma;
    2.0 * (1.0 + (n_actions as f64).ln()) / (k * k) * (eps / 2.0).sqrt() + eps / k
}

/// Bound certified by `mode`, or `None` when it does not apply (a nonzero
/// model error on a game with rewards outside `[-1, 1]`).
pub fn certificate_bound(game: &GameSpec, mode: CertMode, delta: f64) -> Result<Option<f64>> {
    let max_a = game.max_actions() as f64;
    match (mode, game.horizon()) {
        (CertMode::FiniteHorizon, Horizon::Finite(t)) => Ok(Some(t as f64 * max_a.ln())),
        (CertMode::FiniteHorizon, Horizon::InfiniteDiscounted) => Err(VsgError::Horizon(
            "finite-horizon certificate on a discounted game".into(),
        )),
        (_, Horizon::Finite(_)) => Err(VsgError::Horizon(
            "discounted certificate on a finite-horizon game".into(),
        )),
        (m, Horizon::InfiniteDiscounted) => {
            if delta > 0.0 && game.max_abs_reward() > 1.0 {
                return Ok(None);
            }
            let card = if m == CertMode::DiscountedJoint {
                game.n_joint() as f64
            } else {
                max_a
            };
            Ok(Some(delta + card.ln() / (1.0 - game.gamma())))
        }
    }
}

/// Attaches the bound of `mode` to `report`; `pass` stays `None` when not applicable.
pub fn certify_eps_nash(
    report: &ExploitabilityReport,
    game: &GameSpec,
    mode: CertMode,
    delta: f64,
) -> Result<ExploitabilityReport> {
    let mut out = report.clone();
    match certificate_bound(game, mode, delta)? {
        Some(b) => {
            out.bound = Some((mode, b));
            out.pass = Some(report.max_gap <= b);
        }
        None => {
            out.bound = None;
            out.pass = None;
        }
    }
    Ok(out)
}

/// Largest row TV between each policy and the soft best response to its own
/// soft values (modeled-opponent evaluation). Zero at a soft equilibrium.
pub fn soft_nash_residual(
    game: &GameSpec,
    policies: &[ConditionedPolicy],
    models: &[OpponentModel],
    opts: &EvalOptions,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (i, (pi, rho)) in policies.iter().zip(models).enumerate() {
        let q = soft_policy_evaluation(game, i, pi, rho, EvalMode::ModeledOpponent, None, opts)?;
        worst = worst.max(pi.max_tv(&soft_best_response(&q)));
    }
    Ok(worst)
}

/// Logits (natural log of the probabilities) of a conditioned policy.
pub fn policy_logits(pi: &ConditionedPolicy) -> Vec<f64> {
    let mut out = Vec::new();
    for s in 0..pi.n_states() {
        for o in 0..pi.n_others() {
            out.extend(pi.row(s, o).iter().map(|p| p.ln()));
        }
    }
    out
}

fn policy_from_logits(template: &ConditionedPolicy, theta: &[f64]) -> ConditionedPolicy {
    let mut pi = template.clone();
    let na = pi.n_actions();
    for s in 0..pi.n_states() {
        for o in 0..pi.n_others() {
            let base = (s * pi.n_others() + o) * na;
            pi.row_mut(s, o).copy_from_slice(&softmax(&theta[base..base + na]));
        }
    }
    pi
}

/// Dense Fisher information and the block offsets of each agent.
#[derive(Clone, Debug)]
pub struct FisherMatrix {
    pub matrix: DMatrix<f64>,
    pub offsets: Vec<usize>,
}

impl FisherMatrix {
    /// Largest absolute entry outside the agent-diagonal blocks.
    pub fn max_cross_block(&self) -> f64 {
        let n = self.offsets.len() - 1;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for r in self.offsets[i]..self.offsets[i + 1] {
                    for c in self.offsets[j]..self.offsets[j + 1] {
                        worst = worst.max(self.matrix[(r, c)].abs());
                    }
                }
            }
        }
        worst
    }
}

/// Distribution of agent `i`'s variational play at each state: `o ~ rho`, `a ~ pi(. | s, o)`.
fn variational_joint(game: &GameSpec, pi: &ConditionedPolicy, rho: &OpponentModel) -> JointDist {
    let i = pi.owner;
    (0..game.n_states())
        .map(|s| {
            let r = rho.joint_at(game, s);
            let mut row = vec![0.0; game.n_joint()];
            for (o, &w) in r.iter().enumerate() {
                for (a, &p) in pi.row(s, o).iter().enumerate() {
                    row[game.joint().join(i, a, o)] += w * p;
                }
            }
            row
        })
        .collect()
}

/// Score-function outer products of the softmax parameterisation, in closed form.
///
/// Diagonal blocks weight state `s` by agent `i`'s own variational visitation;
/// cross blocks use the independent-play visitation, where the per-row score
/// means vanish.
pub fn fisher_matrix(
    game: &GameSpec,
    policies: &[ConditionedPolicy],
    models: &[OpponentModel],
) -> Result<FisherMatrix> {
    let mut offsets = vec![0];
    for pi in policies {
        offsets.push(offsets.last().unwrap() + pi.n_states() * pi.n_others() * pi.n_actions());
    }
    let dim = *offsets.last().unwrap();
    let mut f = DMatrix::<f64>::zeros(dim, dim);
    // E[score | s] for each agent and state, under the joint-play visitation
    let marginals: Vec<StatePolicy> = policies
        .iter()
        .zip(models)
        .map(|(pi, rho)| crate::vpg::marginal_policy(game, pi, rho))
        .collect();
    let d_play = discounted_visitation_of(game, &joint_from_marginals(game, &marginals))?;
    let mut mean_scores = Vec::new();
    for (i, (pi, rho)) in policies.iter().zip(models).enumerate() {
        let d_i = discounted_visitation_of(game, &variational_joint(game, pi, rho))?;
        let na = pi.n_actions();
        let no = pi.n_others();
        let mut means = vec![vec![0.0; no * na]; game.n_states()];
        for s in 0..game.n_states() {
            let r = rho.joint_at(game, s);
            for o in 0..no {
                let p = pi.row(s, o);
                let w = d_i[s] * r[o];
                let base = offsets[i] + (s * no + o) * na;
                // E_a[(e_a - p)(e_a - p)^T] = diag(p) - p p^T
                for x in 0..na {
                    for y in 0..na {
                        let v = if x == y { p[x] - p[x] * p[y] } else { -p[x] * p[y] };
                        f[(base + x, base + y)] += w * v;
                    }
                }
                for x in 0..na {
                    let e: f64 = p
                        .iter()
                        .enumerate()
                        .map(|(a, pa)| pa * (f64::from(u8::from(a == x)) - p[x]))
                        .sum();
                    means[s][o * na + x] += r[o] * e;
                }
            }
        }
        mean_scores.push(means);
    }
    for i in 0..policies.len() {
        for j in 0..policies.len() {
            if i == j {
                continue;
            }
            for s in 0..game.n_states() {
                for (x, mx) in mean_scores[i][s].iter().enumerate() {
                    let s_off_i = offsets[i] + s * mean_scores[i][s].len();
                    for (y, my) in mean_scores[j][s].iter().enumerate() {
                        let s_off_j = offsets[j] + s * mean_scores[j][s].len();
                        f[(s_off_i + x, s_off_j + y)] += d_play[s] * mx * my;
                    }
                }
            }
        }
    }
    Ok(FisherMatrix { matrix: f, offsets })
}

/// Sum over agents of `E_{s0}[V^i]` with every opponent model frozen; `theta`
/// concatenates the agents' logits.
fn frozen_potential(
    game: &GameSpec,
    policies: &[ConditionedPolicy],
    models: &[OpponentModel],
    offsets: &[usize],
    theta: &[f64],
    true_marginals: &[StatePolicy],
    opts: &EvalOptions,
) -> Result<f64> {
    let mut total = 0.0;
    for (i, (pi, rho)) in policies.iter().zip(models).enumerate() {
        let p = policy_from_logits(pi, &theta[offsets[i]..offsets[i + 1]]);
        let q = soft_policy_evaluation(
            game,
            i,
            &p,
            rho,
            EvalMode::OracleOpponent,
            Some(true_marginals),
            opts,
        )?;
        total += initial_mean(game, &q.v);
    }
    Ok(total)
}

/// Result of one dense natural-gradient step.
#[derive(Clone, Debug)]
pub struct ReferenceStep {
    pub policies: Vec<ConditionedPolicy>,
    pub fisher: FisherMatrix,
    pub gradient: Vec<f64>,
}

/// One step `theta + eta F^+ grad Phi` of natural gradient ascent on the
/// potential, with the gradient from central finite differences and the
/// Fisher matrix assembled explicitly. Opponent models and the log-opponent
/// terms stay frozen at `true_marginals` during differentiation.
pub fn global_npg_reference_step(
    game: &GameSpec,
    policies: &[ConditionedPolicy],
    models: &[OpponentModel],
    true_marginals: &[StatePolicy],
    eta: f64,
) -> Result<ReferenceStep> {
    if game.horizon() != Horizon::InfiniteDiscounted {
        return Err(VsgError::Horizon("reference step needs a discounted game".into()));
    }
    let fisher = fisher_matrix(game, policies, models)?;
    let offsets = fisher.offsets.clone();
    let dim = *offsets.last().unwrap();
    if dim > 1000 {
        return Err(VsgError::Parameter(format!("{dim} parameters is too many for a dense step")));
    }
    let theta: Vec<f64> = policies.iter().flat_map(policy_logits).collect();
    let opts = EvalOptions {
        tol: 1e-14,
        max_iter: ORACLE_CAP,
    };
    let mut grad = vec![0.0; dim];
    let mut probe = theta.clone();
    for k in 0..dim {
        probe[k] = theta[k] + FD_STEP;
        let up = frozen_potential(game, policies, models, &offsets, &probe, true_marginals, &opts)?;
        probe[k] = theta[k] - FD_STEP;
        let down = frozen_potential(game, policies, models, &offsets, &probe, true_marginals, &opts)?;
        probe[k] = theta[k];
        grad[k] = (up - down) / (2.0 * FD_STEP);
    }
    let eig = SymmetricEigen::new(fisher.matrix.clone());
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cut = FISHER_CUTOFF * top;
    if top <= 0.0 || !eig.eigenvalues.iter().any(|&l| l > cut) {
        return Err(VsgError::DegenerateFisher);
    }
    let g = DVector::from_vec(grad.clone());
    let proj = eig.eigenvectors.transpose() * &g;
    let scaled = DVector::from_iterator(
        dim,
        proj.iter()
            .zip(eig.eigenvalues.iter())
            .map(|(x, &l)| if l > cut { x / l } else { 0.0 }),
    );
    let dir = &eig.eigenvectors * scaled;
    let new_theta: Vec<f64> = theta.iter().zip(dir.iter()).map(|(t, d)| t + eta * d).collect();
    let out = policies
        .iter()
        .enumerate()
        .map(|(i, pi)| policy_from_logits(pi, &new_theta[offsets[i]..offsets[i + 1]]))
        .collect();
    Ok(ReferenceStep {
        policies: out,
        fisher,
        gradient: grad,
    })
}

/// Per-agent natural-gradient round for comparison with the reference step:
/// each agent applies the closed-form update to its own soft Q.
pub fn per_agent_npg_round(
    game: &GameSpec,
    policies: &[ConditionedPolicy],
    models: &[OpponentModel],
    true_marginals: &[StatePolicy],
    eta: f64,
) -> Result<Vec<ConditionedPolicy>> {
    let opts = EvalOptions {
        tol: 1e-14,
        max_iter: ORACLE_CAP,
    };
    policies
        .iter()
        .zip(models)
        .enumerate()
        .map(|(i, (pi, rho))| {
            let q = soft_policy_evaluation(
                game,
                i,
                pi,
                rho,
                EvalMode::OracleOpponent,
                Some(true_marginals),
                &opts,
            )?;
            Ok(npg_step_raw(pi, &q, eta, game.gamma()))
        })
        .collect()
}

/// Largest row TV across several agents' policies.
pub fn max_policy_tv(a: &[ConditionedPolicy], b: &[ConditionedPolicy]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.max_tv(y)).fold(0.0, f64::max)
}

/// TV between two joint distributions, maximised over states.
pub fn max_state_tv(a: &JointDist, b: &JointDist) -> f64 {
    a.iter().zip(b).map(|(x, y)| tv(x, y)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{make_random_general_sum, matching_pennies, prisoners_dilemma};
    use crate::soft_eval::{uniform, uniform_state_policy};

    #[test]
    fn pd_best_response_is_defect() {
        let g = prisoners_dilemma(0.0);
        for q in [0.0, 0.3, 1.0] {
            let br = exact_best_response(&g, 0, &[vec![q, 1.0 - q]]).unwrap();
            assert_eq!(br.policy[0], vec![1]);
        }
    }

    #[test]
    fn pd_cooperate_gap_is_two() {
        let g = prisoners_dilemma(0.0);
        let coop = vec![vec![vec![1.0, 0.0]]; 2];
        let rep = exploitability(&g, &coop).unwrap();
        for gap in &rep.gaps {
            assert!((gap - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matching_pennies_uniform_is_exact_nash() {
        let g = matching_pennies(0.9);
        let m = vec![uniform_state_policy(&g, 0), uniform_state_policy(&g, 1)];
        assert!(exploitability(&g, &m).unwrap().max_gap <= 1e-9);
    }

    #[test]
    fn zero_rewards_break_ties_low() {
        let g = crate::game::make_matrix_game(&[3, 2], &[vec![0.0; 6], vec![0.0; 6]], 0.5).unwrap();
        let br = exact_best_response(&g, 0, &[uniform(2)]).unwrap();
        assert_eq!(br.policy[0], vec![0]);
        assert_eq!(br.values, vec![0.0]);
    }

    #[test]
    fn gaps_nonnegative_on_random_play() {
        let g = make_random_general_sum(11, 2, 3, 3).unwrap();
        let m: Vec<StatePolicy> = (0..2)
            .map(|i| (0..3).map(|s| softmax(&[(i + s) as f64 * 0.3, -0.2, 0.5])).collect())
            .collect();
        let rep = exploitability(&g, &m).unwrap();
        assert!(rep.gaps.iter().all(|&x| x >= -1e-9));
    }

    #[test]
    fn bound_arithmetic() {
        let g = crate::game::make_matrix_game(&[3, 2], &[vec![0.0; 6], vec![0.0; 6]], 0.9)
            .unwrap()
            .with_horizon(Horizon::Finite(10));
        let b = certificate_bound(&g, CertMode::FiniteHorizon, 0.0).unwrap().unwrap();
        assert!((b - 10.0 * 3f64.ln()).abs() < 1e-12);
        let g2 = matching_pennies(0.9);
        let b = certificate_bound(&g2, CertMode::DiscountedJoint, 0.0).unwrap().unwrap();
        assert!((b - 4f64.ln() / 0.1).abs() < 1e-9);
        assert!((delta_bound(0.02, 2, 0.9) - 34.0629).abs() < 1e-3);
        assert!(certificate_bound(&g2, CertMode::FiniteHorizon, 0.0).is_err());
        // unnormalised rewards with model error: not applicable
        let pd = prisoners_dilemma(0.9);
        assert_eq!(certificate_bound(&pd, CertMode::DiscountedMax, 0.1).unwrap(), None);
    }

    #[test]
    fn residual_zero_for_uniform_on_zero_game() {
        let g = crate::game::make_matrix_game(&[2, 2], &[vec![0.0; 4], vec![0.0; 4]], 0.5).unwrap();
        let pis = vec![ConditionedPolicy::uniform(&g, 0), ConditionedPolicy::uniform(&g, 1)];
        let rhos = vec![OpponentModel::uniform(&g, 0), OpponentModel::uniform(&g, 1)];
        let r = soft_nash_residual(&g, &pis, &rhos, &EvalOptions::default()).unwrap();
        assert!(r < 1e-12);
    }
}
