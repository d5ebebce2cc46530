//! Finite stochastic games: the data model, validation and the
//! absorbing-state discount transform.
//!
//! Joint actions are stored as one flattened index, row-major with agent 0
//! outermost. For agent `i` the "others" index enumerates the actions of all
//! agents `j != i` in the same row-major order, so a joint action splits into
//! `(own, others)` and back without ambiguity.

mod generators;
mod io;

pub use generators::{
    chicken, coordination_game, differential_reward, make_bimatrix_game, make_differential_game, make_matrix_game,
    make_random_general_sum, make_random_identical_interest_mpg, matching_pennies,
    prisoners_dilemma, rock_paper_scissors, DIFFERENTIAL_GRID, DIFFERENTIAL_GAMMA,
};
pub use io::{GameFile, JOINT_ORDER};

use crate::error::{Result, VsgError};

/// Tolerance on every probability-simplex check of a game.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Horizon {
    /// Decision steps `t = 0..=T`.
    Finite(usize),
    InfiniteDiscounted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GameKind {
    GeneralSum,
    IdenticalInterest,
    ZeroSumTwoPlayer,
}

impl GameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GameKind::GeneralSum => "general-sum",
            GameKind::IdenticalInterest => "identical-interest",
            GameKind::ZeroSumTwoPlayer => "zero-sum",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "general-sum" | "GeneralSum" => Some(GameKind::GeneralSum),
            "identical-interest" | "IdenticalInterest" => Some(GameKind::IdenticalInterest),
            "zero-sum" | "ZeroSumTwoPlayer" => Some(GameKind::ZeroSumTwoPlayer),
            _ => None,
        }
    }
}

/// Index arithmetic over the joint action set `A = A^1 x ... x A^N`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointActionSpace {
    sizes: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
    own: Vec<Vec<usize>>,
    others: Vec<Vec<usize>>,
    // join[i][others * |A^i| + own] = joint
    join: Vec<Vec<usize>>,
}

impl JointActionSpace {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.iter().any(|&k| k == 0) {
            return Err(VsgError::Dimension(format!(
                "action sets must be non-empty, got {sizes:?}"
            )));
        }
        let n = sizes.len();
        let mut strides = vec![1; n];
        for i in (0..n - 1).rev() {
            strides[i] = strides[i + 1] * sizes[i + 1];
        }
        let total = strides[0] * sizes[0];
        let mut own = vec![vec![0; total]; n];
        let mut others = vec![vec![0; total]; n];
        let mut join = vec![vec![0; total]; n];
        for joint in 0..total {
            let acts: Vec<usize> = (0..n).map(|i| (joint / strides[i]) % sizes[i]).collect();
            for i in 0..n {
                let mut o = 0;
                for (j, &a) in acts.iter().enumerate() {
                    if j != i {
                        o = o * sizes[j] + a;
                    }
                }
                own[i][joint] = acts[i];
                others[i][joint] = o;
                join[i][o * sizes[i] + acts[i]] = joint;
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            strides,
            total,
            own,
            others,
            join,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn encode(&self, actions: &[usize]) -> usize {
        actions
            .iter()
            .zip(&self.strides)
            .map(|(a, s)| a * s)
            .sum()
    }

    pub fn decode(&self, joint: usize) -> Vec<usize> {
        (0..self.sizes.len())
            .map(|i| (joint / self.strides[i]) % self.sizes[i])
            .collect()
    }

    #[inline]
    pub fn own(&self, agent: usize, joint: usize) -> usize {
        self.own[agent][joint]
    }

    #[inline]
    pub fn others(&self, agent: usize, joint: usize) -> usize {
        self.others[agent][joint]
    }

    /// Number of joint actions of the agents other than `agent`.
    #[inline]
    pub fn others_len(&self, agent: usize) -> usize {
        self.total / self.sizes[agent]
    }

    #[inline]
    pub fn join(&self, agent: usize, own: usize, others: usize) -> usize {
        self.join[agent][others * self.sizes[agent] + own]
    }

    /// Actions of the other agents (in increasing agent order) encoded by `others`.
    pub fn decode_others(&self, agent: usize, others: usize) -> Vec<usize> {
        let mut out = vec![0; self.sizes.len() - 1];
        let mut rem = others;
        let mut k = out.len();
        for j in (0..self.sizes.len()).rev() {
            if j == agent {
                continue;
            }
            k -= 1;
            out[k] = rem % self.sizes[j];
            rem /= self.sizes[j];
        }
        out
    }

    /// Agent indices paired with the positions used by [`decode_others`](Self::decode_others).
    pub fn other_agents(&self, agent: usize) -> Vec<usize> {
        (0..self.sizes.len()).filter(|&j| j != agent).collect()
    }
}

/// A finite general-sum stochastic game.
///
/// Immutable once built; solvers only ever borrow it.
#[derive(Clone, Debug, PartialEq)]
pub struct GameSpec {
    n_states: usize,
    joint: JointActionSpace,
    reward: Vec<f64>,
    transition: Vec<f64>,
    gamma: f64,
    horizon: Horizon,
    initial: Vec<f64>,
    kind: GameKind,
    absorbing: Option<usize>,
    reward_scale: f64,
}

/// One broken invariant, naming the tensor and the offending index.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub tensor: &'static str,
    pub index: Vec<usize>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{:?}: {}", self.tensor, self.index, self.message)
    }
}

impl GameSpec {
    /// Builds a game after checking tensor shapes. Stochasticity and kind
    /// claims are left to [`validate`](Self::validate).
    ///
    /// `reward` is laid out `[agent][state][joint]`, `transition` is
    /// `[state][joint][next_state]`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        actions: &[usize],
        n_states: usize,
        reward: Vec<f64>,
        transition: Vec<f64>,
        gamma: f64,
        horizon: Horizon,
        initial: Vec<f64>,
        kind: GameKind,
    ) -> Result<Self> {
        let joint = JointActionSpace::new(actions)?;
        if n_states == 0 {
            return Err(VsgError::Dimension("a game needs at least one state".into()));
        }
        let n = actions.len();
        let na = joint.len();
        if reward.len() != n * n_states * na {
            return Err(VsgError::Dimension(format!(
                "reward has {} entries, expected {n}x{n_states}x{na}",
                reward.len()
            )));
        }
        if transition.len() != n_states * na * n_states {
            return Err(VsgError::Dimension(format!(
                "transition has {} entries, expected {n_states}x{na}x{n_states}",
                transition.len()
            )));
        }
        if initial.len() != n_states {
            return Err(VsgError::Dimension(format!(
                "initial distribution has {} entries, expected {n_states}",
                initial.len()
            )));
        }
        if let Horizon::Finite(0) = horizon {
            // T = 0 is a one-shot game; allowed.
        }
        Ok(Self {
            n_states,
            joint,
            reward,
            transition,
            gamma,
            horizon,
            initial,
            kind,
            absorbing: None,
            reward_scale: 1.0,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.joint.n_agents()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn actions(&self) -> &[usize] {
        self.joint.sizes()
    }

    pub fn n_actions(&self, agent: usize) -> usize {
        self.joint.sizes()[agent]
    }

    pub fn max_actions(&self) -> usize {
        self.actions().iter().copied().max().unwrap_or(1)
    }

    pub fn joint(&self) -> &JointActionSpace {
        &self.joint
    }

    pub fn n_joint(&self) -> usize {
        self.joint.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn kind(&self) -> GameKind {
        self.kind
    }

    /// Index of the absorbing state added by [`absorbing_transform`](Self::absorbing_transform).
    pub fn absorbing_state(&self) -> Option<usize> {
        self.absorbing
    }

    /// True when discounting has been folded into the transition kernel.
    pub fn is_pre_discounted(&self) -> bool {
        self.absorbing.is_some()
    }

    /// Factor by which rewards were divided by [`normalize_rewards`](Self::normalize_rewards).
    pub fn reward_scale(&self) -> f64 {
        self.reward_scale
    }

    /// Discount applied per step by evaluators: 1 once the kernel is pre-discounted.
    ///
    /// After [`absorbing_transform`](Self::absorbing_transform) `gamma()` still
    /// reports the folded discount, which bounds step sizes and horizons.
    pub fn effective_gamma(&self) -> f64 {
        if self.absorbing.is_some() {
            1.0
        } else {
            self.gamma
        }
    }

    #[inline]
    pub fn reward(&self, agent: usize, state: usize, joint: usize) -> f64 {
        self.reward[(agent * self.n_states + state) * self.joint.len() + joint]
    }

    /// Rewards of `agent` at `state` for every joint action.
    #[inline]
    pub fn rewards_at(&self, agent: usize, state: usize) -> &[f64] {
        let na = self.joint.len();
        let base = (agent * self.n_states + state) * na;
        &self.reward[base..base + na]
    }

    pub fn reward_tensor(&self) -> &[f64] {
        &self.reward
    }

    #[inline]
    pub fn transition_row(&self, state: usize, joint: usize) -> &[f64] {
        let base = (state * self.joint.len() + joint) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    pub fn transition_tensor(&self) -> &[f64] {
        &self.transition
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_horizon(mut self, horizon: Horizon) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_initial(mut self, initial: Vec<f64>) -> Result<Self> {
        if initial.len() != self.n_states {
            return Err(VsgError::Dimension(format!(
                "initial distribution has {} entries, expected {}",
                initial.len(),
                self.n_states
            )));
        }
        self.initial = initial;
        Ok(self)
    }

    pub fn with_kind(mut self, kind: GameKind) -> Self {
        self.kind = kind;
        self
    }

    /// Strongest kind the reward tensor satisfies exactly.
    pub fn detect_kind(&self) -> GameKind {
        let n = self.n_agents();
        let per_agent = self.n_states * self.joint.len();
        let slice = |i: usize| &self.reward[i * per_agent..(i + 1) * per_agent];
        if (1..n).all(|i| slice(i) == slice(0)) {
            return GameKind::IdenticalInterest;
        }
        if n == 2 && slice(0).iter().zip(slice(1)).all(|(a, b)| *a == -*b) {
            return GameKind::ZeroSumTwoPlayer;
        }
        GameKind::GeneralSum
    }

    /// Lists every broken invariant; empty iff the game is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let ns = self.n_states;
        let na = self.joint.len();
        for s in 0..ns {
            for a in 0..na {
                let row = self.transition_row(s, a);
                let mut bad_entry = false;
                for (sp, &p) in row.iter().enumerate() {
                    if !p.is_finite() || p < 0.0 {
                        bad_entry = true;
                        out.push(Violation {
                            tensor: "transition",
                            index: vec![s, a, sp],
                            message: format!("probability {p} is negative or not finite"),
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if !bad_entry && (sum - 1.0).abs() > SIMPLEX_TOL {
                    out.push(Violation {
                        tensor: "transition",
                        index: vec![s, a],
                        message: format!("row sums to {sum}"),
                    });
                }
            }
        }
        let mut bad_init = false;
        for (s, &p) in self.initial.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                bad_init = true;
                out.push(Violation {
                    tensor: "initial",
                    index: vec![s],
                    message: format!("probability {p} is negative or not finite"),
                });
            }
        }
        let init_sum: f64 = self.initial.iter().sum();
        if !bad_init && (init_sum - 1.0).abs() > SIMPLEX_TOL {
            out.push(Violation {
                tensor: "initial",
                index: vec![],
                message: format!("distribution sums to {init_sum}"),
            });
        }
        for i in 0..self.n_agents() {
            for s in 0..ns {
                for (a, r) in self.rewards_at(i, s).iter().enumerate() {
                    if !r.is_finite() {
                        out.push(Violation {
                            tensor: "reward",
                            index: vec![i, s, a],
                            message: format!("reward {r} is not finite"),
                        });
                    }
                }
            }
        }
        let gamma_ok = (0.0..1.0).contains(&self.gamma);
        if !gamma_ok {
            out.push(Violation {
                tensor: "gamma",
                index: vec![],
                message: format!("discount {} outside [0, 1)", self.gamma),
            });
        }
        match self.kind {
            GameKind::GeneralSum => {}
            GameKind::IdenticalInterest => {
                if self.detect_kind() != GameKind::IdenticalInterest {
                    out.push(self.kind_violation("rewards differ across agents"));
                }
            }
            GameKind::ZeroSumTwoPlayer => {
                if self.n_agents() != 2 {
                    out.push(self.kind_violation("zero-sum games need exactly two agents"));
                } else if !self.is_zero_sum() {
                    out.push(self.kind_violation("r^1 != -r^2"));
                }
            }
        }
        out
    }

    fn is_zero_sum(&self) -> bool {
        let per = self.n_states * self.joint.len();
        self.n_agents() == 2
            && self.reward[..per]
                .iter()
                .zip(&self.reward[per..])
                .all(|(a, b)| *a == -*b)
    }

    fn kind_violation(&self, message: &str) -> Violation {
        Violation {
            tensor: "kind",
            index: vec![],
            message: format!("declared {}: {message}", self.kind.as_str()),
        }
    }

    /// Errors unless the declared kind holds.
    pub fn require_kind(&self, kind: GameKind) -> Result<()> {
        let ok = match kind {
            GameKind::GeneralSum => true,
            GameKind::IdenticalInterest => self.detect_kind() == GameKind::IdenticalInterest,
            GameKind::ZeroSumTwoPlayer => self.is_zero_sum(),
        };
        if ok {
            Ok(())
        } else {
            Err(VsgError::Kind(format!(
                "game is not {} (detected {})",
                kind.as_str(),
                self.detect_kind().as_str()
            )))
        }
    }

    /// Folds the discount into the kernel: `p'(s'|s,a) = gamma p(s'|s,a)` and
    /// `p'(absorbing|s,a) = 1 - gamma`. The absorbing state pays nothing and
    /// self-loops; evaluators then treat it as terminal and stop discounting.
    /// The returned game records `gamma` but its effective discount is 1.
    ///
    /// Applying the transform to an already transformed game routes the new
    /// leak into the existing absorbing state.
    pub fn absorbing_transform(&self, gamma: f64) -> Result<GameSpec> {
        if self.horizon != Horizon::InfiniteDiscounted {
            return Err(VsgError::Horizon(
                "absorbing transform needs an infinite-horizon game".into(),
            ));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(VsgError::Parameter(format!(
                "absorbing transform needs 0 < gamma < 1, got {gamma}"
            )));
        }
        let na = self.joint.len();
        let n = self.n_agents();
        if let Some(bar) = self.absorbing {
            let ns = self.n_states;
            let mut transition = self.transition.clone();
            for s in 0..ns {
                if s == bar {
                    continue;
                }
                for a in 0..na {
                    let base = (s * na + a) * ns;
                    for sp in 0..ns {
                        transition[base + sp] *= gamma;
                    }
                    transition[base + bar] += 1.0 - gamma;
                }
            }
            return Ok(GameSpec {
                transition,
                gamma: self.gamma * gamma,
                ..self.clone()
            });
        }
        let ns = self.n_states + 1;
        let bar = self.n_states;
        let mut transition = vec![0.0; ns * na * ns];
        for s in 0..ns {
            for a in 0..na {
                let base = (s * na + a) * ns;
                if s == bar {
                    transition[base + bar] = 1.0;
                    continue;
                }
                for (sp, p) in self.transition_row(s, a).iter().enumerate() {
                    transition[base + sp] = gamma * p;
                }
                transition[base + bar] = 1.0 - gamma;
            }
        }
        let mut reward = vec![0.0; n * ns * na];
        for i in 0..n {
            for s in 0..self.n_states {
                let dst = (i * ns + s) * na;
                reward[dst..dst + na].copy_from_slice(self.rewards_at(i, s));
            }
        }
        let mut initial = self.initial.clone();
        initial.push(0.0);
        Ok(GameSpec {
            n_states: ns,
            joint: self.joint.clone(),
            reward,
            transition,
            gamma,
            horizon: Horizon::InfiniteDiscounted,
            initial,
            kind: self.kind,
            absorbing: Some(bar),
            reward_scale: self.reward_scale,
        })
    }

    /// Divides every reward by `max |r|` so that `|r| <= 1`, recording the factor.
    pub fn normalize_rewards(&self) -> GameSpec {
        let m = self.max_abs_reward();
        if m == 0.0 {
            return self.clone();
        }
        GameSpec {
            reward: self.reward.iter().map(|r| r / m).collect(),
            reward_scale: self.reward_scale * m,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests;
