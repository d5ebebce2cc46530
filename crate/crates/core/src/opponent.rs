//! Variational opponent modeling: a tabular reward estimate for the modelee
//! is fitted by a self-normalised importance-weighted gradient, and the
//! opponent model is refreshed as the prior tilted by the modelee's soft
//! action values.

use std::collections::VecDeque;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;

use crate::error::{Result, VsgError};
use crate::game::GameSpec;
use crate::soft_eval::{
    kl, product_over_others, tilt, EvalOptions, StatePolicy, DEFAULT_EVAL_CAP,
};

/// Bound on reward-table entries.
pub const REWARD_CLIP: f64 = 10.0;
/// Bound on importance log-weights.
pub const LOG_WEIGHT_CLIP: f64 = 50.0;
/// Model rollouts per gradient step.
pub const MODEL_ROLLOUTS: usize = 64;
/// Default buffer capacity in transitions.
pub const BUFFER_CAPACITY: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub joint: usize,
    pub rewards: Option<Vec<f64>>,
}

/// A sampled episode with the log-probability of each step's joint action
/// under the policy that generated it.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<Transition>,
    pub log_probs: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn log_prob(&self) -> f64 {
        self.log_probs.iter().sum()
    }
}

/// FIFO trajectory store bounded by total transitions.
#[derive(Clone, Debug)]
pub struct TrajectoryBuffer {
    capacity: usize,
    transitions: usize,
    trajs: VecDeque<Trajectory>,
}

impl TrajectoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            transitions: 0,
            trajs: VecDeque::new(),
        }
    }

    pub fn push(&mut self, traj: Trajectory) {
        self.transitions += traj.len();
        self.trajs.push_back(traj);
        while self.transitions > self.capacity && self.trajs.len() > 1 {
            let old = self.trajs.pop_front().expect("non-empty");
            self.transitions -= old.len();
        }
    }

    pub fn transitions(&self) -> usize {
        self.transitions
    }

    pub fn len(&self) -> usize {
        self.trajs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajs.is_empty()
    }

    pub fn trajectories(&self) -> Vec<Trajectory> {
        self.trajs.iter().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Trajectory> {
        self.trajs.iter()
    }
}

/// `ceil(ln(1e-3) / ln(gamma))`, the steps after which `gamma^t < 1e-3`; 1 when `gamma = 0`.
pub fn horizon_trunc(gamma: f64) -> usize {
    if gamma <= 0.0 {
        1
    } else {
        ((1e-3f64).ln() / gamma.ln()).ceil().max(1.0) as usize
    }
}

fn samplers(policies: &[StatePolicy]) -> Vec<Vec<WeightedIndex<f64>>> {
    policies
        .iter()
        .map(|p| {
            p.iter()
                .map(|row| WeightedIndex::new(row).expect("valid distribution"))
                .collect()
        })
        .collect()
}

/// Samples episodes of at most `len` steps where every agent acts
/// independently from its state policy. Episodes stop at an absorbing state.
pub fn simulate<R: Rng>(
    game: &GameSpec,
    policies: &[StatePolicy],
    episodes: usize,
    len: usize,
    rng: &mut R,
) -> Vec<Trajectory> {
    let pick = samplers(policies);
    let init = WeightedIndex::new(game.initial()).expect("valid initial distribution");
    let next: Vec<Vec<WeightedIndex<f64>>> = (0..game.n_states())
        .map(|s| {
            (0..game.n_joint())
                .map(|j| WeightedIndex::new(game.transition_row(s, j)).expect("valid kernel"))
                .collect()
        })
        .collect();
    let n = game.n_agents();
    (0..episodes)
        .map(|_| {
            let mut traj = Trajectory::default();
            let mut s = init.sample(rng);
            for _ in 0..len {
                if game.absorbing_state() == Some(s) {
                    break;
                }
                let acts: Vec<usize> = (0..n).map(|i| pick[i][s].sample(rng)).collect();
                let lp = (0..n).map(|i| policies[i][s][acts[i]].ln()).sum();
                let joint = game.joint().encode(&acts);
                let rewards = (0..n).map(|i| game.reward(i, s, joint)).collect();
                traj.steps.push(Transition {
                    state: s,
                    joint,
                    rewards: Some(rewards),
                });
                traj.log_probs.push(lp);
                s = next[s][joint].sample(rng);
            }
            traj
        })
        .collect()
}

/// Laplace-smoothed action frequencies of agent `j` per state.
pub fn empirical_model<'a>(
    game: &GameSpec,
    data: impl IntoIterator<Item = &'a Trajectory>,
    j: usize,
    alpha: f64,
) -> StatePolicy {
    let mut counts = vec![vec![alpha; game.n_actions(j)]; game.n_states()];
    for traj in data {
        for step in &traj.steps {
            counts[step.state][game.joint().own(j, step.joint)] += 1.0;
        }
    }
    for row in &mut counts {
        let z: f64 = row.iter().sum();
        if z > 0.0 {
            row.iter_mut().for_each(|c| *c /= z);
        }
    }
    counts
}

/// Tabular reward estimate `r^j(s, a)` over states and joint actions.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardEstimate {
    pub agent: usize,
    n_joint: usize,
    table: Vec<f64>,
    pub step: f64,
    pub clip: f64,
}

impl RewardEstimate {
    pub fn zeros(game: &GameSpec, agent: usize, step: f64) -> Self {
        Self {
            agent,
            n_joint: game.n_joint(),
            table: vec![0.0; game.n_states() * game.n_joint()],
            step,
            clip: REWARD_CLIP,
        }
    }

    /// Estimate initialised at the true rewards of `agent`, clipped.
    pub fn from_game(game: &GameSpec, agent: usize, step: f64) -> Self {
        let mut r = Self::zeros(game, agent, step);
        for s in 0..game.n_states() {
            for j in 0..game.n_joint() {
                r.table[s * r.n_joint + j] = game.reward(agent, s, j).clamp(-r.clip, r.clip);
            }
        }
        r
    }

    #[inline]
    pub fn get(&self, s: usize, joint: usize) -> f64 {
        self.table[s * self.n_joint + joint]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// `psi <- clip(psi - step * grad)`.
    pub fn descend(&mut self, grad: &[f64]) {
        for (x, g) in self.table.iter_mut().zip(grad) {
            *x = (*x - self.step * g).clamp(-self.clip, self.clip);
        }
    }
}

/// Per-state distribution of the joint action when `j` follows `rho_j` and
/// everyone else follows `context`.
fn joint_play(game: &GameSpec, j: usize, rho_j: &StatePolicy, context: &[StatePolicy]) -> Vec<Vec<f64>> {
    let space = game.joint();
    (0..game.n_states())
        .map(|s| {
            let others = product_over_others(game, j, s, |k, s, a| context[k][s][a]);
            let mut row = vec![0.0; space.len()];
            for (a, &p) in rho_j[s].iter().enumerate() {
                for (o, &q) in others.iter().enumerate() {
                    row[space.join(j, a, o)] = p * q;
                }
            }
            row
        })
        .collect()
}

/// Soft action values of modelee `j` under its model `rho_j`:
///
/// ```text
/// Q(s, a) = r(s, a) - KL(rho_-j(.|s) || pi_-j(.|s))
///         + gamma E_{s' ~ P, a' ~ rho}[ Q(s', a') - KL(rho_j(.|s') || prior_j(.|s')) ]
/// ```
///
/// `context` supplies the distribution of every other agent (`rho_-j`). The
/// first KL is only charged when `true_others` is given; otherwise it is zero.
/// Returns a `[state * n_joint + joint]` table.
#[allow(clippy::too_many_arguments)]
pub fn soft_q_rho(
    game: &GameSpec,
    j: usize,
    rho_j: &StatePolicy,
    context: &[StatePolicy],
    reward: &RewardEstimate,
    prior: &StatePolicy,
    true_others: Option<&[StatePolicy]>,
    opts: &EvalOptions,
) -> Result<Vec<f64>> {
    let ns = game.n_states();
    let na = game.n_joint();
    let gamma = game.effective_gamma();
    if !game.is_pre_discounted() && !(0.0..1.0).contains(&gamma) {
        return Err(VsgError::Parameter(format!("discount {gamma} is not contractive")));
    }
    let play = joint_play(game, j, rho_j, context);
    let mut immediate_kl = vec![0.0; ns];
    if let Some(truth) = true_others {
        for (s, k) in immediate_kl.iter_mut().enumerate() {
            let model = product_over_others(game, j, s, |m, s, a| context[m][s][a]);
            let real = product_over_others(game, j, s, |m, s, a| truth[m][s][a]);
            *k = kl(&model, &real)?;
        }
    }
    let mut own_kl = vec![0.0; ns];
    for (s, k) in own_kl.iter_mut().enumerate() {
        *k = kl(&rho_j[s], &prior[s])?;
    }
    // W(s) = E_{a ~ rho}[Q(s, a)] - KL_j(s)
    let mut w = vec![0.0; ns];
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let q_of = |s: usize, a: usize, w: &[f64]| -> f64 {
        let cont: f64 = game.transition_row(s, a).iter().zip(w).map(|(p, x)| p * x).sum();
        reward.get(s, a) - immediate_kl[s] + gamma * cont
    };
    for _ in 0..opts.max_iter {
        let next: Vec<f64> = (0..ns)
            .map(|s| {
                if game.absorbing_state() == Some(s) {
                    return 0.0;
                }
                let e: f64 = play[s]
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(a, &p)| p * q_of(s, a, &w))
                    .sum();
                e - own_kl[s]
            })
            .collect();
        residual = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        w = next;
        if !residual.is_finite() {
            return Err(VsgError::NonFinite("opponent soft values diverged".into()));
        }
        if residual < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(VsgError::CapHit {
            cap: opts.max_iter,
            residual,
        });
    }
    let mut q = vec![0.0; ns * na];
    for s in 0..ns {
        if game.absorbing_state() == Some(s) {
            continue;
        }
        for a in 0..na {
            q[s * na + a] = q_of(s, a, &w);
        }
    }
    Ok(q)
}

/// `rho_j(a^j|s) ∝ prior(a^j|s) exp(E_{a^-j ~ context}[Q(s, a^j, a^-j)])`.
pub fn optimal_opponent_policy(
    game: &GameSpec,
    j: usize,
    q_rho: &[f64],
    prior: &StatePolicy,
    context: &[StatePolicy],
) -> StatePolicy {
    let space = game.joint();
    let na = space.len();
    (0..game.n_states())
        .map(|s| {
            let others = product_over_others(game, j, s, |k, s, a| context[k][s][a]);
            let expect: Vec<f64> = (0..game.n_actions(j))
                .map(|a| {
                    others
                        .iter()
                        .enumerate()
                        .map(|(o, &p)| p * q_rho[s * na + space.join(j, a, o)])
                        .sum()
                })
                .collect();
            tilt(&prior[s], &expect)
        })
        .collect()
}

/// `E_data[sum_t gamma^t 1{(s_t, a_t) = (s, a)}]` over at most `horizon` steps.
pub fn discounted_visits<'a>(
    game: &GameSpec,
    trajs: impl IntoIterator<Item = &'a Trajectory>,
    gamma: f64,
    horizon: usize,
) -> Vec<f64> {
    let na = game.n_joint();
    let mut visits = vec![0.0; game.n_states() * na];
    let mut count = 0usize;
    for traj in trajs {
        count += 1;
        let mut g = 1.0;
        for step in traj.steps.iter().take(horizon) {
            visits[step.state * na + step.joint] += g;
            g *= gamma;
        }
    }
    if count > 0 {
        visits.iter_mut().for_each(|v| *v /= count as f64);
    }
    visits
}

/// Self-normalised estimate of `E_{p_psi}[sum_t gamma^t 1{(s_t, a_t) = (s, a)}]`
/// where `p_psi(tau) ∝ exp(sum_t gamma^t r(s_t, a_t))`, from rollouts of the model.
fn model_visits(
    game: &GameSpec,
    model: &[Trajectory],
    reward: &RewardEstimate,
    gamma: f64,
    horizon: usize,
) -> Result<Vec<f64>> {
    if model.is_empty() {
        return Err(VsgError::DegenerateWeights { z: 0.0 });
    }
    let log_w: Vec<f64> = model
        .iter()
        .map(|t| {
            let mut g = 1.0;
            let mut ret = 0.0;
            for step in t.steps.iter().take(horizon) {
                ret += g * reward.get(step.state, step.joint);
                g *= gamma;
            }
            let lp: f64 = t.log_probs.iter().take(horizon).sum();
            (ret - lp).clamp(-LOG_WEIGHT_CLIP, LOG_WEIGHT_CLIP)
        })
        .collect();
    let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let mean_shifted = w.iter().sum::<f64>() / w.len() as f64;
    let z = mean_shifted * top.exp();
    if !(z >= 1e-300) {
        return Err(VsgError::DegenerateWeights { z });
    }
    let na = game.n_joint();
    let mut visits = vec![0.0; game.n_states() * na];
    for (t, wt) in model.iter().zip(&w) {
        let mut g = 1.0;
        for step in t.steps.iter().take(horizon) {
            visits[step.state * na + step.joint] += wt * g;
            g *= gamma;
        }
    }
    let norm = w.iter().sum::<f64>();
    visits.iter_mut().for_each(|v| *v /= norm);
    Ok(visits)
}

/// Gradient of the trajectory KL objective with respect to the reward table:
/// `-E_data[visits] + E_model[w visits] / Z`.
pub fn reward_gradient(
    game: &GameSpec,
    data: &[Trajectory],
    model: &[Trajectory],
    reward: &RewardEstimate,
    gamma: f64,
    horizon: usize,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(VsgError::Parameter("no data trajectories".into()));
    }
    let d = discounted_visits(game, data, gamma, horizon);
    let m = model_visits(game, model, reward, gamma, horizon)?;
    Ok(m.iter().zip(&d).map(|(m, d)| m - d).collect())
}

/// Samples rollouts where `j` follows `rho_j` and the others follow `context`.
pub fn model_rollouts<R: Rng>(
    game: &GameSpec,
    j: usize,
    rho_j: &StatePolicy,
    context: &[StatePolicy],
    n: usize,
    len: usize,
    rng: &mut R,
) -> Vec<Trajectory> {
    let mut policies = context.to_vec();
    policies[j] = rho_j.clone();
    simulate(game, &policies, n, len, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorMode {
    Uniform,
    /// Laplace-smoothed action frequencies of the data.
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitConfig {
    pub step: f64,
    pub inner_iters: usize,
    pub n_rollouts: usize,
    /// Defaults to [`horizon_trunc`] of the game's discount.
    pub horizon: Option<usize>,
    pub prior: PriorMode,
    pub eval: EvalOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            step: 1.0,
            inner_iters: 200,
            n_rollouts: MODEL_ROLLOUTS,
            horizon: None,
            prior: PriorMode::Uniform,
            eval: EvalOptions {
                tol: 1e-10,
                max_iter: DEFAULT_EVAL_CAP,
            },
        }
    }
}

/// Current model and reward estimate for one modelee.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedModel {
    pub rho: StatePolicy,
    pub reward: RewardEstimate,
}

/// Alternates reward-gradient descent and the closed-form model refresh
/// for modelee `j`, starting from `warm` when given.
#[allow(clippy::too_many_arguments)]
pub fn fit_opponent_model<R: Rng>(
    game: &GameSpec,
    data: &[Trajectory],
    j: usize,
    context: &[StatePolicy],
    warm: Option<FittedModel>,
    cfg: &FitConfig,
    rng: &mut R,
) -> Result<FittedModel> {
    if data.is_empty() {
        return Err(VsgError::Parameter("empty trajectory buffer".into()));
    }
    let gamma = game.gamma();
    let horizon = cfg.horizon.unwrap_or_else(|| horizon_trunc(gamma));
    let prior = match cfg.prior {
        PriorMode::Uniform => crate::soft_eval::uniform_state_policy(game, j),
        PriorMode::Empirical => empirical_model(game, data, j, 1.0),
    };
    let FittedModel { mut rho, mut reward } = warm.unwrap_or_else(|| FittedModel {
        rho: prior.clone(),
        reward: RewardEstimate::zeros(game, j, cfg.step),
    });
    reward.step = cfg.step;
    let data_term = discounted_visits(game, data, gamma, horizon);
    for _ in 0..cfg.inner_iters {
        let model = model_rollouts(game, j, &rho, context, cfg.n_rollouts, horizon, rng);
        let m = model_visits(game, &model, &reward, gamma, horizon)?;
        let grad: Vec<f64> = m.iter().zip(&data_term).map(|(m, d)| m - d).collect();
        reward.descend(&grad);
        let q = soft_q_rho(game, j, &rho, context, &reward, &prior, None, &cfg.eval)?;
        rho = optimal_opponent_policy(game, j, &q, &prior, context);
    }
    Ok(FittedModel { rho, reward })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::make_matrix_game;
    use crate::soft_eval::uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_state(gamma: f64) -> GameSpec {
        make_matrix_game(&[2, 2], &[vec![1.0, 0.0, 0.0, 1.0], vec![0.5, 0.0, 0.0, 0.5]], gamma).unwrap()
    }

    #[test]
    fn trunc_horizon() {
        assert_eq!(horizon_trunc(0.0), 1);
        assert_eq!(horizon_trunc(0.5), 10);
        assert_eq!(horizon_trunc(0.9), 66);
    }

    #[test]
    fn buffer_evicts_oldest() {
        let mut b = TrajectoryBuffer::new(5);
        for k in 0..4 {
            b.push(Trajectory {
                steps: vec![Transition { state: k, joint: 0, rewards: None }; 2],
                log_probs: vec![0.0; 2],
            });
        }
        assert_eq!(b.transitions(), 4);
        assert_eq!(b.iter().next().unwrap().steps[0].state, 2);
    }

    #[test]
    fn zero_reward_and_prior_model_give_zero_q() {
        let g = one_state(0.5);
        let r = RewardEstimate::zeros(&g, 1, 1.0);
        let prior = vec![vec![0.3, 0.7]];
        let ctx = vec![vec![uniform(2)], vec![uniform(2)]];
        let q = soft_q_rho(&g, 1, &prior, &ctx, &r, &prior, None, &EvalOptions::default()).unwrap();
        assert!(q.iter().all(|x| x.abs() < 1e-12));
        let rho = optimal_opponent_policy(&g, 1, &q, &prior, &ctx);
        assert!((rho[0][0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn gamma_zero_q_is_reward() {
        let g = one_state(0.0);
        let r = RewardEstimate::from_game(&g, 1, 1.0);
        let ctx = vec![vec![uniform(2)], vec![uniform(2)]];
        let q = soft_q_rho(&g, 1, &vec![vec![0.9, 0.1]], &ctx, &r, &vec![uniform(2)], None, &EvalOptions::default())
            .unwrap();
        assert_eq!(q, vec![0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn eq5_examples() {
        // agent 1 modelled; the others' joint action is agent 0's
        let g = one_state(0.0);
        let ctx = vec![vec![vec![1.0, 0.0]], vec![uniform(2)]];
        // E_{a0}[Q(a0, a1)] with a0 = 0: row [1, 0]
        let q = vec![1.0, 0.0, 7.0, 7.0];
        let rho = optimal_opponent_policy(&g, 1, &q, &vec![uniform(2)], &ctx);
        assert!((rho[0][0] - 0.7310585786300049).abs() < 1e-15);
        let q = vec![0.0, 4f64.ln(), 0.0, 0.0];
        let rho = optimal_opponent_policy(&g, 1, &q, &vec![vec![0.8, 0.2]], &ctx);
        assert!((rho[0][0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_deterministic_step_gradient() {
        let g = one_state(0.5);
        let data = vec![Trajectory {
            steps: vec![Transition { state: 0, joint: 0, rewards: None }],
            log_probs: vec![0.0],
        }];
        let model = vec![Trajectory {
            steps: vec![Transition { state: 0, joint: 3, rewards: None }],
            log_probs: vec![0.25f64.ln()],
        }];
        let r = RewardEstimate::zeros(&g, 1, 1.0);
        let grad = reward_gradient(&g, &data, &model, &r, 0.5, 1).unwrap();
        assert_eq!(grad[0], -1.0);
        assert_eq!(grad[3], 1.0);
        assert!(matches!(
            reward_gradient(&g, &data, &[], &r, 0.5, 1),
            Err(VsgError::DegenerateWeights { .. })
        ));
    }

    #[test]
    fn duplicated_data_leaves_gradient_unchanged() {
        let g = one_state(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pols = vec![vec![vec![0.6, 0.4]], vec![vec![0.2, 0.8]]];
        let data = simulate(&g, &pols, 20, 4, &mut rng);
        let model = simulate(&g, &pols, 16, 4, &mut rng);
        let r = RewardEstimate::zeros(&g, 1, 1.0);
        let g1 = reward_gradient(&g, &data, &model, &r, 0.5, 4).unwrap();
        let doubled: Vec<Trajectory> = data.iter().chain(&data).cloned().collect();
        let g2 = reward_gradient(&g, &doubled, &model, &r, 0.5, 4).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn frozen_reward_keeps_prior() {
        let g = one_state(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pols = vec![vec![uniform(2)], vec![vec![0.9, 0.1]]];
        let data = simulate(&g, &pols, 10, 10, &mut rng);
        let cfg = FitConfig {
            step: 0.0,
            inner_iters: 3,
            ..FitConfig::default()
        };
        let fit = fit_opponent_model(&g, &data, 1, &pols, None, &cfg, &mut rng).unwrap();
        assert_eq!(fit.rho, vec![uniform(2)]);
    }

    #[test]
    fn empirical_counts_are_smoothed() {
        let g = one_state(0.5);
        let data = vec![Trajectory {
            steps: vec![
                Transition { state: 0, joint: 1, rewards: None },
                Transition { state: 0, joint: 3, rewards: None },
                Transition { state: 0, joint: 2, rewards: None },
            ],
            log_probs: vec![0.0; 3],
        }];
        // agent 1 played 1, 1, 0
        let m = empirical_model(&g, &data, 1, 1.0);
        assert!((m[0][0] - 0.4).abs() < 1e-15);
    }
}
