//! Finite-horizon mean-field games with a representative agent: forward
//! Kolmogorov flow of the population state-action distribution, backward soft
//! Q recursion against a prior, and the damped outer fixed-point loop.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VsgError};
use crate::soft_eval::{entropy, tilt, tv, uniform, StatePolicy};

type RewardFn = dyn Fn(usize, usize, &[f64]) -> f64 + Send + Sync;
type KernelFn = dyn Fn(usize, usize, &[f64], &mut [f64]) + Send + Sync;

/// Population distribution over `(state, action)` per step, `[t][s * |A| + a]`.
pub type MeanField = Vec<Vec<f64>>;
/// Per-step state policies, `[t][s][a]`.
pub type TimePolicy = Vec<StatePolicy>;

/// Mean-field game whose reward and kernel may depend on the current
/// population distribution `L` (laid out `[s * |A| + a]`).
pub struct MfGameSpec {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    initial: Vec<f64>,
    reward: Box<RewardFn>,
    transition: Box<KernelFn>,
}

impl std::fmt::Debug for MfGameSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfGameSpec")
            .field("n_states", &self.n_states)
            .field("n_actions", &self.n_actions)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl MfGameSpec {
    /// `horizon = T` gives steps `t = 0..=T`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        initial: Vec<f64>,
        reward: Box<RewardFn>,
        transition: Box<KernelFn>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(VsgError::Dimension("mean-field game needs states and actions".into()));
        }
        if initial.len() != n_states {
            return Err(VsgError::Dimension("initial distribution has wrong length".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            horizon,
            initial,
            reward,
            transition,
        })
    }

    /// Tabular game with reward `base(s, a) - crowd_weight * L(s, a)` and an
    /// `L`-independent kernel `[s][a][s']`.
    pub fn crowd_aversion(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        initial: Vec<f64>,
        base: Vec<f64>,
        kernel: Vec<f64>,
        crowd_weight: f64,
    ) -> Result<Self> {
        if base.len() != n_states * n_actions || kernel.len() != n_states * n_actions * n_states {
            return Err(VsgError::Dimension("base reward or kernel has wrong size".into()));
        }
        let na = n_actions;
        let ns = n_states;
        Self::new(
            n_states,
            n_actions,
            horizon,
            initial,
            Box::new(move |s, a, l| base[s * na + a] - crowd_weight * l[s * na + a]),
            Box::new(move |s, a, _l, out| {
                let base = (s * na + a) * ns;
                out.copy_from_slice(&kernel[base..base + ns]);
            }),
        )
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize, l: &[f64]) -> f64 {
        (self.reward)(s, a, l)
    }

    pub fn transition(&self, s: usize, a: usize, l: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states];
        (self.transition)(s, a, l, &mut out);
        out
    }

    /// Lists kernel rows that are not distributions at `l`, and non-finite rewards.
    pub fn validate_at(&self, l: &[f64]) -> Vec<String> {
        let mut out = Vec::new();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.transition(s, a, l);
                let z: f64 = row.iter().sum();
                if row.iter().any(|p| *p < 0.0 || !p.is_finite()) || (z - 1.0).abs() > 1e-12 {
                    out.push(format!("transition[{s}][{a}] is not a distribution"));
                }
                if !self.reward(s, a, l).is_finite() {
                    out.push(format!("reward[{s}][{a}] is not finite"));
                }
            }
        }
        out
    }

    /// `initial(s) * uniform(a)`.
    pub fn initial_mean_field(&self) -> Vec<f64> {
        let ua = 1.0 / self.n_actions as f64;
        self.initial
            .iter()
            .flat_map(|p| std::iter::repeat(p * ua).take(self.n_actions))
            .collect()
    }
}

/// On-disk JSON layout of a tabular crowd-aversion game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfFile {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub initial: Vec<f64>,
    /// `[state][action]`
    pub base_reward: Vec<Vec<f64>>,
    /// `[state][action][next_state]`
    pub transition: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub crowd_weight: f64,
}

impl MfFile {
    pub fn build(&self) -> Result<MfGameSpec> {
        let base: Vec<f64> = self.base_reward.iter().flatten().copied().collect();
        let kernel: Vec<f64> = self.transition.iter().flatten().flatten().copied().collect();
        let g = MfGameSpec::crowd_aversion(
            self.states,
            self.actions,
            self.horizon,
            self.initial.clone(),
            base,
            kernel,
            self.crowd_weight,
        )?;
        let probe = g.initial_mean_field();
        let bad = g.validate_at(&probe);
        if !bad.is_empty() {
            return Err(VsgError::Format(bad.join("; ")));
        }
        Ok(g)
    }
}

/// Three-cell ring: actions stay / step right / step left, each move slipping
/// to "stay" with probability 0.1; cell 0 pays 1, moving costs 0.1, and
/// `crowd_weight` scales the congestion penalty. Uniform start.
pub fn crowd_ring(crowd_weight: f64, horizon: usize) -> MfFile {
    let n = 3;
    let transition = (0..n)
        .map(|s| {
            (0..n)
                .map(|a| {
                    let to = match a {
                        0 => s,
                        1 => (s + 1) % n,
                        _ => (s + n - 1) % n,
                    };
                    let mut row = vec![0.0; n];
                    row[to] += 0.9;
                    row[s] += 0.1;
                    row
                })
                .collect()
        })
        .collect();
    let base_reward = (0..n)
        .map(|s| {
            (0..n)
                .map(|a| if s == 0 { 1.0 } else { 0.0 } - if a == 0 { 0.0 } else { 0.1 })
                .collect()
        })
        .collect();
    MfFile {
        states: n,
        actions: n,
        horizon,
        initial: vec![1.0 / n as f64; n],
        base_reward,
        transition,
        crowd_weight,
    }
}

/// `L_t(s, a) = pi_t(a | s) sum_{s~, a~} P(s | s~, a~, L_prev) L_prev(s~, a~)`.
pub fn kolmogorov_step(game: &MfGameSpec, l_prev: &[f64], pi_t: &StatePolicy) -> Vec<f64> {
    let ns = game.n_states;
    let na = game.n_actions;
    let mut state_mass = vec![0.0; ns];
    for s in 0..ns {
        for a in 0..na {
            let w = l_prev[s * na + a];
            if w == 0.0 {
                continue;
            }
            for (sp, p) in game.transition(s, a, l_prev).iter().enumerate() {
                state_mass[sp] += w * p;
            }
        }
    }
    let mut out = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            out[s * na + a] = pi_t[s][a] * state_mass[s];
        }
    }
    out
}

/// Mean field induced by `policy` from the initial state distribution.
pub fn forward_flow(game: &MfGameSpec, policy: &TimePolicy) -> MeanField {
    let na = game.n_actions;
    let l0: Vec<f64> = (0..game.n_states * na)
        .map(|k| game.initial[k / na] * policy[0][k / na][k % na])
        .collect();
    let mut out = vec![l0];
    for t in 1..=game.horizon {
        let next = kolmogorov_step(game, &out[t - 1], &policy[t]);
        out.push(next);
    }
    out
}

fn check_slices(game: &MfGameSpec, l: &MeanField) -> Result<()> {
    if l.len() != game.horizon + 1 || l.iter().any(|x| x.len() != game.n_states * game.n_actions) {
        return Err(VsgError::Dimension(format!(
            "mean field needs {} slices of {} entries",
            game.horizon + 1,
            game.n_states * game.n_actions
        )));
    }
    Ok(())
}

/// Soft Q of a given policy against a frozen mean field:
/// `Q_T = r(., ., L_T)` and
/// `Q_t(s, a) = r(s, a, L_t) + sum_s' P(s' | s, a, L_t) E_{a' ~ pi_{t+1}}[Q_{t+1} - log pi_{t+1} + log prior_{t+1}]`.
/// Returns `[t][s * |A| + a]`.
pub fn soft_q_backward(
    game: &MfGameSpec,
    l: &MeanField,
    policy: &TimePolicy,
    prior: &TimePolicy,
) -> Result<Vec<Vec<f64>>> {
    check_slices(game, l)?;
    let ns = game.n_states;
    let na = game.n_actions;
    let t_max = game.horizon;
    let mut q = vec![vec![0.0; ns * na]; t_max + 1];
    for t in (0..=t_max).rev() {
        let cont: Vec<f64> = if t == t_max {
            vec![0.0; ns]
        } else {
            (0..ns)
                .map(|s| {
                    (0..na)
                        .map(|a| {
                            let p = policy[t + 1][s][a];
                            if p == 0.0 {
                                0.0
                            } else {
                                p * (q[t + 1][s * na + a] - p.ln() + prior[t + 1][s][a].ln())
                            }
                        })
                        .sum()
                })
                .collect()
        };
        for s in 0..ns {
            for a in 0..na {
                let next: f64 = if t == t_max {
                    0.0
                } else {
                    game.transition(s, a, &l[t]).iter().zip(&cont).map(|(p, v)| p * v).sum()
                };
                q[t][s * na + a] = game.reward(s, a, &l[t]) + next;
            }
        }
    }
    Ok(q)
}

/// `pi(a | s) ∝ prior(a | s) exp(Q(s, a))` row by row.
pub fn closed_form_policy(q_t: &[f64], prior_t: &StatePolicy) -> StatePolicy {
    let na = prior_t.first().map_or(0, Vec::len);
    prior_t
        .iter()
        .enumerate()
        .map(|(s, prior)| tilt(prior, &q_t[s * na..(s + 1) * na]))
        .collect()
}

/// Backward pass that plugs the closed-form policy in at every step; returns
/// the Q tables and the policy.
pub fn optimal_backward(game: &MfGameSpec, l: &MeanField, prior: &TimePolicy) -> Result<(Vec<Vec<f64>>, TimePolicy)> {
    check_slices(game, l)?;
    let ns = game.n_states;
    let na = game.n_actions;
    let t_max = game.horizon;
    let mut q = vec![vec![0.0; ns * na]; t_max + 1];
    let mut pi: TimePolicy = vec![Vec::new(); t_max + 1];
    let mut cont = vec![0.0; ns];
    for t in (0..=t_max).rev() {
        for s in 0..ns {
            for a in 0..na {
                let next: f64 = if t == t_max {
                    0.0
                } else {
                    game.transition(s, a, &l[t]).iter().zip(&cont).map(|(p, v)| p * v).sum()
                };
                q[t][s * na + a] = game.reward(s, a, &l[t]) + next;
            }
        }
        pi[t] = closed_form_policy(&q[t], &prior[t]);
        // E_pi[Q - log pi + log prior] = log sum_a prior e^Q
        cont = (0..ns)
            .map(|s| {
                let row = &q[t][s * na..(s + 1) * na];
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                m + row
                    .iter()
                    .zip(&prior[t][s])
                    .map(|(x, p)| p * (x - m).exp())
                    .sum::<f64>()
                    .ln()
            })
            .collect();
    }
    Ok((q, pi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MfPrior {
    /// Uniform at every outer iteration.
    Uniform,
    /// The previous outer iterate's policy (uniform at the first).
    PreviousIterate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MfConfig {
    pub outer_iters: usize,
    pub residual_tol: f64,
    /// Weight kept on the previous mean field.
    pub damping: f64,
    pub prior: MfPrior,
    /// Keep every outer iterate's mean field in the result.
    pub record_history: bool,
}

impl Default for MfConfig {
    fn default() -> Self {
        Self {
            outer_iters: 500,
            residual_tol: 1e-6,
            damping: 0.5,
            prior: MfPrior::Uniform,
            record_history: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MfResult {
    pub policy: TimePolicy,
    pub mean_field: MeanField,
    /// `max_t TV(L^k_t, L^{k-1}_t)` per outer iteration.
    pub residuals: Vec<f64>,
    /// Largest row TV between successive policies per outer iteration.
    pub policy_deltas: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Mean field after each outer iteration when recorded; entry 0 is the initial guess.
    pub history: Vec<MeanField>,
    /// Policy of each outer iteration when recorded.
    pub policy_history: Vec<TimePolicy>,
}

/// Outer fixed-point loop: soft backward pass against the previous mean
/// field, closed-form policy, forward flow, optional damping. Stops when the
/// residual falls below `residual_tol`; running out of iterations is reported
/// through `converged = false`.
pub fn run_mf_bayesian_q(game: &MfGameSpec, config: &MfConfig) -> Result<MfResult> {
    if !(0.0..1.0).contains(&config.damping) {
        return Err(VsgError::Parameter(format!("damping {} outside [0, 1)", config.damping)));
    }
    let steps = game.horizon + 1;
    let uniform_policy: TimePolicy = vec![vec![uniform(game.n_actions); game.n_states]; steps];
    let mut l: MeanField = vec![game.initial_mean_field(); steps];
    let mut policy = uniform_policy.clone();
    let mut residuals = Vec::new();
    let mut policy_deltas = Vec::new();
    let mut history = Vec::new();
    let mut policy_history = Vec::new();
    if config.record_history {
        history.push(l.clone());
    }
    let mut converged = false;
    for _ in 0..config.outer_iters {
        let prior = match config.prior {
            MfPrior::Uniform => &uniform_policy,
            MfPrior::PreviousIterate => &policy,
        };
        let (_, next_policy) = optimal_backward(game, &l, prior)?;
        let fresh = forward_flow(game, &next_policy);
        let next: MeanField = fresh
            .iter()
            .zip(&l)
            .map(|(f, old)| {
                f.iter()
                    .zip(old)
                    .map(|(x, y)| (1.0 - config.damping) * x + config.damping * y)
                    .collect()
            })
            .collect();
        let res = next.iter().zip(&l).map(|(a, b)| tv(a, b)).fold(0.0, f64::max);
        if !res.is_finite() {
            return Err(VsgError::NonFinite("mean-field residual".into()));
        }
        residuals.push(res);
        let delta = policy
            .iter()
            .zip(&next_policy)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| tv(x, y)))
            .fold(0.0, f64::max);
        policy_deltas.push(delta);
        policy = next_policy;
        l = next;
        if config.record_history {
            history.push(l.clone());
            policy_history.push(policy.clone());
        }
        if res < config.residual_tol {
            converged = true;
            break;
        }
    }
    Ok(MfResult {
        iterations: residuals.len(),
        policy,
        mean_field: l,
        residuals,
        policy_deltas,
        converged,
        history,
        policy_history,
    })
}

/// Unregularised return of `policy` against the frozen mean field, expected over the initial states.
pub fn mf_policy_return(game: &MfGameSpec, policy: &TimePolicy, l: &MeanField) -> Result<f64> {
    check_slices(game, l)?;
    let ns = game.n_states;
    let na = game.n_actions;
    let mut v = vec![0.0; ns];
    for t in (0..=game.horizon).rev() {
        v = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| {
                        let next: f64 = game.transition(s, a, &l[t]).iter().zip(&v).map(|(p, x)| p * x).sum();
                        policy[t][s][a] * (game.reward(s, a, &l[t]) + next)
                    })
                    .sum()
            })
            .collect();
    }
    Ok(game.initial.iter().zip(&v).map(|(p, x)| p * x).sum())
}

/// Best unregularised return against the frozen mean field minus the return of `policy`.
pub fn mf_exploitability(game: &MfGameSpec, policy: &TimePolicy, l: &MeanField) -> Result<f64> {
    check_slices(game, l)?;
    let ns = game.n_states;
    let na = game.n_actions;
    let mut v = vec![0.0; ns];
    for t in (0..=game.horizon).rev() {
        v = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| {
                        let next: f64 = game.transition(s, a, &l[t]).iter().zip(&v).map(|(p, x)| p * x).sum();
                        game.reward(s, a, &l[t]) + next
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    let best: f64 = game.initial.iter().zip(&v).map(|(p, x)| p * x).sum();
    Ok(best - mf_policy_return(game, policy, l)?)
}

/// Smallest per-state entropy of a time policy.
pub fn min_entropy(policy: &TimePolicy) -> f64 {
    policy
        .iter()
        .flat_map(|p| p.iter().map(|row| entropy(row)))
        .fold(f64::INFINITY, f64::min)
}
