//! Soft (entropy and KL regularised) policy evaluation under an explicit
//! opponent model, plus the distribution helpers the solvers share.
//!
//! For agent `i` with conditioned policy `pi_i(a | s, o)` (where `o` indexes
//! the joint action of the other agents) and opponent model `rho(o | s)`:
//!
//! ```text
//! Q(s, a, o) = r(s, a, o) + log pi_-i(o | s) + gamma * sum_s' P(s' | s, a, o) V(s')
//! V(s)       = E_{o ~ rho, a ~ pi_i}[ Q(s, a, o) - log pi_i(a | s, o) - log rho(o | s) ]
//! ```
//!
//! With the true opponents in `pi_-i` this reproduces the per-step
//! `r + H(pi_i) - KL(rho || pi_-i)` integrand of the ELBO. In modeled mode
//! `pi_-i` is replaced by `rho` and the KL term vanishes.

use crate::error::{Result, VsgError};
use crate::game::{GameSpec, Horizon};

/// Probability floor applied to opponent distributions before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;
pub const DEFAULT_EVAL_TOL: f64 = 1e-10;
pub const DEFAULT_EVAL_CAP: usize = 1_000_000;

/// Tolerance on rows of a policy or model.
const ROW_TOL: f64 = 1e-10;

/// State-conditioned action distribution, `[state][action]`.
pub type StatePolicy = Vec<Vec<f64>>;

#[inline]
pub(crate) fn floored_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// `p ln p` with `0 ln 0 = 0`.
#[inline]
fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

pub fn entropy(dist: &[f64]) -> f64 {
    -dist.iter().map(|&p| plogp(p)).sum::<f64>()
}

/// `KL(p || q)` in nats; errors when `p` puts mass where `q` has none.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(VsgError::Dimension(format!(
            "kl of distributions with {} and {} entries",
            p.len(),
            q.len()
        )));
    }
    let mut acc = 0.0;
    for (k, (&pk, &qk)) in p.iter().zip(q).enumerate() {
        if pk > 0.0 {
            if qk <= 0.0 {
                return Err(VsgError::Divergence(format!(
                    "p[{k}] = {pk} but q[{k}] = {qk}"
                )));
            }
            acc += pk * (pk / qk).ln();
        }
    }
    Ok(acc.max(0.0))
}

/// Total-variation distance `0.5 * sum |p - q|`.
pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Max-subtracted softmax of `logits`.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= z);
    out
}

/// `prior * exp(logits)`, normalised, computed in log space.
pub fn tilt(prior: &[f64], logits: &[f64]) -> Vec<f64> {
    let l: Vec<f64> = prior
        .iter()
        .zip(logits)
        .map(|(p, x)| if *p > 0.0 { p.ln() + x } else { f64::NEG_INFINITY })
        .collect();
    softmax(&l)
}

pub fn uniform(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

fn check_row(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(VsgError::Parameter(format!("{what}: entries must be finite and >= 0")));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > ROW_TOL {
        return Err(VsgError::Parameter(format!("{what}: row sums to {s}")));
    }
    Ok(())
}

/// Uniform state policy for `agent`.
pub fn uniform_state_policy(game: &GameSpec, agent: usize) -> StatePolicy {
    vec![uniform(game.n_actions(agent)); game.n_states()]
}

/// Agent `owner`'s policy conditioned on the other agents' joint action.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionedPolicy {
    pub owner: usize,
    n_others: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl ConditionedPolicy {
    pub fn uniform(game: &GameSpec, owner: usize) -> Self {
        let n_actions = game.n_actions(owner);
        let n_others = game.joint().others_len(owner);
        Self {
            owner,
            n_others,
            n_actions,
            probs: vec![1.0 / n_actions as f64; game.n_states() * n_others * n_actions],
        }
    }

    /// Policy that ignores the opponents' actions.
    pub fn from_marginal(game: &GameSpec, owner: usize, marginal: &StatePolicy) -> Result<Self> {
        let mut pi = Self::uniform(game, owner);
        if marginal.len() != game.n_states() {
            return Err(VsgError::Dimension("marginal has wrong state count".into()));
        }
        for (s, row) in marginal.iter().enumerate() {
            if row.len() != pi.n_actions {
                return Err(VsgError::Dimension("marginal has wrong action count".into()));
            }
            check_row(row, "marginal policy")?;
            for o in 0..pi.n_others {
                pi.row_mut(s, o).copy_from_slice(row);
            }
        }
        Ok(pi)
    }

    /// Builds from `[state][others][action]` nested rows.
    pub fn from_rows(game: &GameSpec, owner: usize, rows: &[Vec<Vec<f64>>]) -> Result<Self> {
        let mut pi = Self::uniform(game, owner);
        if rows.len() != game.n_states() {
            return Err(VsgError::Dimension("policy has wrong state count".into()));
        }
        for (s, block) in rows.iter().enumerate() {
            if block.len() != pi.n_others {
                return Err(VsgError::Dimension("policy has wrong opponent count".into()));
            }
            for (o, row) in block.iter().enumerate() {
                if row.len() != pi.n_actions {
                    return Err(VsgError::Dimension("policy has wrong action count".into()));
                }
                check_row(row, "conditioned policy")?;
                pi.row_mut(s, o).copy_from_slice(row);
            }
        }
        Ok(pi)
    }

    pub fn n_states(&self) -> usize {
        self.probs.len() / (self.n_others * self.n_actions)
    }

    pub fn n_others(&self) -> usize {
        self.n_others
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, s: usize, o: usize) -> &[f64] {
        let base = (s * self.n_others + o) * self.n_actions;
        &self.probs[base..base + self.n_actions]
    }

    #[inline]
    pub fn row_mut(&mut self, s: usize, o: usize) -> &mut [f64] {
        let base = (s * self.n_others + o) * self.n_actions;
        &mut self.probs[base..base + self.n_actions]
    }

    pub fn to_rows(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_states())
            .map(|s| (0..self.n_others).map(|o| self.row(s, o).to_vec()).collect())
            .collect()
    }

    fn check_shape(&self, game: &GameSpec) -> Result<()> {
        let ok = self.owner < game.n_agents()
            && self.n_actions == game.n_actions(self.owner)
            && self.n_others == game.joint().others_len(self.owner)
            && self.n_states() == game.n_states();
        if ok {
            Ok(())
        } else {
            Err(VsgError::Dimension(format!(
                "policy of agent {} does not fit the game",
                self.owner
            )))
        }
    }

    /// Largest TV distance between matching rows of two policies.
    pub fn max_tv(&self, other: &ConditionedPolicy) -> f64 {
        self.probs
            .chunks(self.n_actions)
            .zip(other.probs.chunks(other.n_actions))
            .map(|(a, b)| tv(a, b))
            .fold(0.0, f64::max)
    }
}

/// Agent `modeler`'s per-opponent models `rho_j(a^j | s)`; the joint model
/// is their product.
#[derive(Clone, Debug, PartialEq)]
pub struct OpponentModel {
    pub modeler: usize,
    /// Indexed by agent; `None` at the modeler's own slot.
    pub models: Vec<Option<StatePolicy>>,
}

impl OpponentModel {
    pub fn uniform(game: &GameSpec, modeler: usize) -> Self {
        let models = (0..game.n_agents())
            .map(|j| (j != modeler).then(|| uniform_state_policy(game, j)))
            .collect();
        Self { modeler, models }
    }

    /// Copies the true marginals of every other agent.
    pub fn from_marginals(modeler: usize, marginals: &[StatePolicy]) -> Self {
        let models = marginals
            .iter()
            .enumerate()
            .map(|(j, m)| (j != modeler).then(|| m.clone()))
            .collect();
        Self { modeler, models }
    }

    pub fn model(&self, j: usize) -> &StatePolicy {
        self.models[j]
            .as_ref()
            .expect("an agent does not model itself")
    }

    pub fn set_model(&mut self, j: usize, model: StatePolicy) {
        assert_ne!(j, self.modeler, "an agent does not model itself");
        self.models[j] = Some(model);
    }

    /// Joint model over the others' actions at `s`, indexed like `others`.
    pub fn joint_at(&self, game: &GameSpec, s: usize) -> Vec<f64> {
        product_over_others(game, self.modeler, s, |j, s, a| self.model(j)[s][a])
    }

    pub fn joint_table(&self, game: &GameSpec) -> Vec<Vec<f64>> {
        (0..game.n_states()).map(|s| self.joint_at(game, s)).collect()
    }

    fn check(&self, game: &GameSpec) -> Result<()> {
        if self.models.len() != game.n_agents() {
            return Err(VsgError::Dimension("opponent model has wrong agent count".into()));
        }
        for j in 0..game.n_agents() {
            if j == self.modeler {
                continue;
            }
            let m = self.models[j]
                .as_ref()
                .ok_or_else(|| VsgError::Dimension(format!("no model for agent {j}")))?;
            if m.len() != game.n_states() || m.iter().any(|r| r.len() != game.n_actions(j)) {
                return Err(VsgError::Dimension(format!("model of agent {j} has wrong shape")));
            }
            for row in m {
                check_row(row, "opponent model")?;
            }
        }
        Ok(())
    }
}

/// `prod_{j != agent} f(j, s, a^j)` for every joint action of the others.
pub fn product_over_others(
    game: &GameSpec,
    agent: usize,
    s: usize,
    f: impl Fn(usize, usize, usize) -> f64,
) -> Vec<f64> {
    let space = game.joint();
    let others = space.other_agents(agent);
    (0..space.others_len(agent))
        .map(|o| {
            space
                .decode_others(agent, o)
                .iter()
                .zip(&others)
                .map(|(&a, &j)| f(j, s, a))
                .product()
        })
        .collect()
}

/// Product of the true marginals of every agent except `agent`.
pub fn others_product_table(game: &GameSpec, agent: usize, marginals: &[StatePolicy]) -> Vec<Vec<f64>> {
    (0..game.n_states())
        .map(|s| product_over_others(game, agent, s, |j, s, a| marginals[j][s][a]))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    /// `pi_-i` in the Q recursion is the true opponents' marginal product.
    OracleOpponent,
    /// `pi_-i` is replaced by the opponent model.
    ModeledOpponent,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_EVAL_TOL,
            max_iter: DEFAULT_EVAL_CAP,
        }
    }
}

/// Soft action values `Q^i(s, a^i, a^-i)` with the state values they were built from.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftQTable {
    pub agent: usize,
    pub mode: EvalMode,
    n_others: usize,
    n_actions: usize,
    q: Vec<f64>,
    /// `V^i(s)`
    pub v: Vec<f64>,
}

impl SoftQTable {
    pub fn from_parts(
        agent: usize,
        mode: EvalMode,
        n_others: usize,
        n_actions: usize,
        q: Vec<f64>,
        v: Vec<f64>,
    ) -> Self {
        assert_eq!(q.len(), v.len() * n_others * n_actions);
        Self {
            agent,
            mode,
            n_others,
            n_actions,
            q,
            v,
        }
    }

    pub fn n_states(&self) -> usize {
        self.v.len()
    }

    pub fn n_others(&self) -> usize {
        self.n_others
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn q(&self, s: usize, a: usize, o: usize) -> f64 {
        self.q[(s * self.n_others + o) * self.n_actions + a]
    }

    /// Q over own actions at `(s, o)`.
    #[inline]
    pub fn row(&self, s: usize, o: usize) -> &[f64] {
        let base = (s * self.n_others + o) * self.n_actions;
        &self.q[base..base + self.n_actions]
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

/// Per-state, per-`o` constants of one evaluation problem.
struct Stage<'a> {
    game: &'a GameSpec,
    agent: usize,
    pi: &'a ConditionedPolicy,
    rho: Vec<Vec<f64>>,
    log_pi_others: Vec<Vec<f64>>,
}

impl<'a> Stage<'a> {
    fn new(
        game: &'a GameSpec,
        agent: usize,
        pi: &'a ConditionedPolicy,
        rho: &OpponentModel,
        mode: EvalMode,
        true_opponents: Option<&[StatePolicy]>,
    ) -> Result<Self> {
        if agent >= game.n_agents() || pi.owner != agent || rho.modeler != agent {
            return Err(VsgError::Parameter(format!(
                "policy/model owners do not match agent {agent}"
            )));
        }
        pi.check_shape(game)?;
        rho.check(game)?;
        let rho_t = rho.joint_table(game);
        let log_pi_others = match (mode, true_opponents) {
            (EvalMode::ModeledOpponent, Some(_)) => {
                return Err(VsgError::ModeConflict(
                    "modeled-opponent evaluation takes no true opponent policies".into(),
                ))
            }
            (EvalMode::OracleOpponent, None) => {
                return Err(VsgError::ModeConflict(
                    "oracle-opponent evaluation needs the true opponent policies".into(),
                ))
            }
            (EvalMode::ModeledOpponent, None) => rho_t
                .iter()
                .map(|r| r.iter().map(|&p| floored_ln(p)).collect())
                .collect(),
            (EvalMode::OracleOpponent, Some(m)) => {
                if m.len() != game.n_agents() {
                    return Err(VsgError::Dimension(
                        "true opponents: one marginal per agent expected".into(),
                    ));
                }
                others_product_table(game, agent, m)
                    .iter()
                    .map(|r| r.iter().map(|&p| floored_ln(p)).collect())
                    .collect()
            }
        };
        Ok(Self {
            game,
            agent,
            pi,
            rho: rho_t,
            log_pi_others,
        })
    }

    fn is_terminal(&self, s: usize) -> bool {
        self.game.absorbing_state() == Some(s)
    }

    /// Q at `(s, ., o)` given next-state values and discount.
    fn q_row(&self, s: usize, o: usize, v_next: &[f64], gamma: f64, out: &mut [f64]) {
        let space = self.game.joint();
        for (a, q) in out.iter_mut().enumerate() {
            let joint = space.join(self.agent, a, o);
            let cont: f64 = if gamma == 0.0 {
                0.0
            } else {
                self.game
                    .transition_row(s, joint)
                    .iter()
                    .zip(v_next)
                    .map(|(p, v)| p * v)
                    .sum()
            };
            *q = self.game.reward(self.agent, s, joint) + self.log_pi_others[s][o] + gamma * cont;
        }
    }

    /// `E_{o, a}[Q - log pi - log rho]` at `s`.
    fn value_from(&self, s: usize, q_at: impl Fn(usize, &mut [f64])) -> f64 {
        let na = self.pi.n_actions();
        let mut row = vec![0.0; na];
        let mut v = 0.0;
        for (o, &w) in self.rho[s].iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            q_at(o, &mut row);
            let pi = self.pi.row(s, o);
            let inner: f64 = row
                .iter()
                .zip(pi)
                .map(|(q, &p)| p * q - plogp(p))
                .sum();
            v += w * (inner - floored_ln(w));
        }
        v
    }
}

/// Evaluates `pi_i` on an infinite-horizon game by synchronous fixed-point
/// iteration until the sup-norm change of `V` drops below `opts.tol`.
///
/// Games produced by [`GameSpec::absorbing_transform`] are iterated with unit
/// discount and the absorbing state pinned at value 0.
pub fn soft_policy_evaluation(
    game: &GameSpec,
    agent: usize,
    pi: &ConditionedPolicy,
    rho: &OpponentModel,
    mode: EvalMode,
    true_opponents: Option<&[StatePolicy]>,
    opts: &EvalOptions,
) -> Result<SoftQTable> {
    if game.horizon() != Horizon::InfiniteDiscounted {
        return Err(VsgError::Horizon(
            "use soft_policy_evaluation_finite for finite horizons".into(),
        ));
    }
    if !(opts.tol > 0.0) {
        return Err(VsgError::Parameter(format!("tol must be > 0, got {}", opts.tol)));
    }
    let gamma = game.effective_gamma();
    if !game.is_pre_discounted() && !(0.0..1.0).contains(&gamma) {
        return Err(VsgError::Parameter(format!(
            "discount {gamma} is not contractive; apply the absorbing transform first"
        )));
    }
    let stage = Stage::new(game, agent, pi, rho, mode, true_opponents)?;
    let ns = game.n_states();
    let na = pi.n_actions();
    let no = pi.n_others();
    let mut v = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        for s in 0..ns {
            next[s] = if stage.is_terminal(s) {
                0.0
            } else {
                stage.value_from(s, |o, row| stage.q_row(s, o, &v, gamma, row))
            };
        }
        residual = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if !residual.is_finite() {
            return Err(VsgError::NonFinite(format!(
                "soft evaluation of agent {agent} diverged"
            )));
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
    let mut q = vec![0.0; ns * no * na];
    for s in 0..ns {
        if stage.is_terminal(s) {
            continue;
        }
        for o in 0..no {
            let base = (s * no + o) * na;
            stage.q_row(s, o, &v, gamma, &mut q[base..base + na]);
        }
    }
    let table = SoftQTable::from_parts(agent, mode, no, na, q, v);
    if !table.is_finite() {
        return Err(VsgError::NonFinite(format!("Q of agent {agent}")));
    }
    Ok(table)
}

/// Time-indexed soft values for a finite horizon, `t = 0..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteSoftQ {
    pub stages: Vec<SoftQTable>,
}

impl FiniteSoftQ {
    pub fn value(&self, t: usize) -> &[f64] {
        &self.stages[t].v
    }
}

fn stage_at<T>(items: &[T], t: usize) -> &T {
    if items.len() == 1 {
        &items[0]
    } else {
        &items[t]
    }
}

/// Backward-induction counterpart of [`soft_policy_evaluation`] on a
/// `Finite(T)` game. Sums are undiscounted with `V_{T+1} = 0`.
///
/// `pis` and `rhos` hold one entry per step, or a single entry used at every step.
pub fn soft_policy_evaluation_finite(
    game: &GameSpec,
    agent: usize,
    pis: &[ConditionedPolicy],
    rhos: &[OpponentModel],
    mode: EvalMode,
    true_opponents: Option<&[Vec<StatePolicy>]>,
) -> Result<FiniteSoftQ> {
    let Horizon::Finite(t_max) = game.horizon() else {
        return Err(VsgError::Horizon("finite-horizon evaluation needs Finite(T)".into()));
    };
    let steps = t_max + 1;
    for (len, what) in [(pis.len(), "policies"), (rhos.len(), "opponent models")] {
        if len != 1 && len != steps {
            return Err(VsgError::Dimension(format!(
                "{len} {what} for a horizon of {steps} steps"
            )));
        }
    }
    if let Some(tops) = true_opponents {
        if tops.len() != 1 && tops.len() != steps {
            return Err(VsgError::Dimension("true opponents per step mismatch".into()));
        }
    }
    let ns = game.n_states();
    let mut v_next = vec![0.0; ns];
    let mut stages = Vec::with_capacity(steps);
    for t in (0..steps).rev() {
        let pi = stage_at(pis, t);
        let tops = true_opponents.map(|x| stage_at(x, t).as_slice());
        let stage = Stage::new(game, agent, pi, stage_at(rhos, t), mode, tops)?;
        let na = pi.n_actions();
        let no = pi.n_others();
        let mut q = vec![0.0; ns * no * na];
        let mut v = vec![0.0; ns];
        for s in 0..ns {
            for o in 0..no {
                let base = (s * no + o) * na;
                stage.q_row(s, o, &v_next, 1.0, &mut q[base..base + na]);
            }
            v[s] = stage.value_from(s, |o, row| {
                let base = (s * no + o) * na;
                row.copy_from_slice(&q[base..base + na]);
            });
        }
        v_next.clone_from(&v);
        let table = SoftQTable::from_parts(agent, mode, no, na, q, v);
        if !table.is_finite() {
            return Err(VsgError::NonFinite(format!("Q of agent {agent} at step {t}")));
        }
        stages.push(table);
    }
    stages.reverse();
    Ok(FiniteSoftQ { stages })
}

/// `J(pi_i; pi_-i) = E_{s0}[V^i(s0)]` on an infinite-horizon game.
pub fn elbo(
    game: &GameSpec,
    agent: usize,
    pi: &ConditionedPolicy,
    rho: &OpponentModel,
    mode: EvalMode,
    true_opponents: Option<&[StatePolicy]>,
    opts: &EvalOptions,
) -> Result<f64> {
    let q = soft_policy_evaluation(game, agent, pi, rho, mode, true_opponents, opts)?;
    Ok(expect_initial(game, &q.v))
}

pub(crate) fn expect_initial(game: &GameSpec, v: &[f64]) -> f64 {
    game.initial().iter().zip(v).map(|(p, v)| p * v).sum()
}

/// Row-wise `softmax(Q(s, ., o))`.
pub fn soft_best_response(q: &SoftQTable) -> ConditionedPolicy {
    let mut probs = Vec::with_capacity(q.q.len());
    for chunk in q.q.chunks(q.n_actions) {
        probs.extend(softmax(chunk));
    }
    ConditionedPolicy {
        owner: q.agent,
        n_others: q.n_others,
        n_actions: q.n_actions,
        probs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{make_matrix_game, prisoners_dilemma, GameKind};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn divergence_examples() {
        assert!(close(entropy(&uniform(5)), 5f64.ln(), 1e-15));
        assert_eq!(kl(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!(close(kl(&[0.9, 0.1], &[0.5, 0.5]).unwrap(), 0.368064, 1e-6));
        assert!(matches!(kl(&[0.5, 0.5], &[1.0, 0.0]), Err(VsgError::Divergence(_))));
        assert_eq!(kl(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 2f64.ln());
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[1.0, 0.0]);
        assert!(close(p[0], 0.7310585786300049, 1e-15));
        assert_eq!(softmax(&[3.0, 3.0, 3.0]), uniform(3));
        assert_eq!(tilt(&[0.8, 0.2], &[0.0, 4f64.ln()]), vec![0.5, 0.5]);
        let big = softmax(&[1000.0, 999.0]);
        assert!(close(big[0], p[0], 1e-12));
    }

    #[test]
    fn uniform_zero_reward_value() {
        let g = make_matrix_game(&[2, 2], &[vec![0.0; 4], vec![0.0; 4]], 0.5).unwrap();
        let pi = ConditionedPolicy::uniform(&g, 0);
        let rho = OpponentModel::uniform(&g, 0);
        let q = soft_policy_evaluation(
            &g,
            0,
            &pi,
            &rho,
            EvalMode::ModeledOpponent,
            None,
            &EvalOptions::default(),
        )
        .unwrap();
        assert!(close(q.v[0], 2.0 * 2f64.ln(), 1e-9));
        let marg = vec![uniform_state_policy(&g, 0), uniform_state_policy(&g, 1)];
        let qo = soft_policy_evaluation(
            &g,
            0,
            &pi,
            &rho,
            EvalMode::OracleOpponent,
            Some(&marg),
            &EvalOptions::default(),
        )
        .unwrap();
        assert!(close(qo.v[0], q.v[0], 1e-12));
    }

    #[test]
    fn mode_conflicts() {
        let g = prisoners_dilemma(0.5);
        let pi = ConditionedPolicy::uniform(&g, 0);
        let rho = OpponentModel::uniform(&g, 0);
        let marg = vec![uniform_state_policy(&g, 0), uniform_state_policy(&g, 1)];
        let opts = EvalOptions::default();
        let e = soft_policy_evaluation(&g, 0, &pi, &rho, EvalMode::ModeledOpponent, Some(&marg), &opts);
        assert!(matches!(e, Err(VsgError::ModeConflict(_))));
        let e = soft_policy_evaluation(&g, 0, &pi, &rho, EvalMode::OracleOpponent, None, &opts);
        assert!(matches!(e, Err(VsgError::ModeConflict(_))));
    }

    #[test]
    fn non_contractive_rejected_and_cap_reported() {
        let g = prisoners_dilemma(0.5).with_gamma(1.0);
        let pi = ConditionedPolicy::uniform(&g, 0);
        let rho = OpponentModel::uniform(&g, 0);
        let e = soft_policy_evaluation(&g, 0, &pi, &rho, EvalMode::ModeledOpponent, None, &EvalOptions::default());
        assert!(matches!(e, Err(VsgError::Parameter(_))));
        let g = prisoners_dilemma(0.99);
        let opts = EvalOptions { tol: 1e-10, max_iter: 5 };
        let e = soft_policy_evaluation(&g, 0, &pi, &rho, EvalMode::ModeledOpponent, None, &opts);
        assert!(matches!(e, Err(VsgError::CapHit { cap: 5, .. })));
    }

    #[test]
    fn oracle_mode_subtracts_kl() {
        // single state, gamma = 0: V = E[r] + H(pi) - KL(rho || pi_-i)
        let g = prisoners_dilemma(0.0);
        let pi = ConditionedPolicy::uniform(&g, 0);
        let mut rho = OpponentModel::uniform(&g, 0);
        rho.set_model(1, vec![vec![0.8, 0.2]]);
        let truth = vec![uniform_state_policy(&g, 0), vec![vec![0.4, 0.6]]];
        let q = soft_policy_evaluation(
            &g,
            0,
            &pi,
            &rho,
            EvalMode::OracleOpponent,
            Some(&truth),
            &EvalOptions::default(),
        )
        .unwrap();
        let mut er = 0.0;
        for a in 0..2 {
            for o in 0..2 {
                er += 0.5 * [0.8, 0.2][o] * g.reward(0, 0, g.joint().join(0, a, o));
            }
        }
        let expect = er + 2f64.ln() - kl(&[0.8, 0.2], &[0.4, 0.6]).unwrap();
        assert!(close(q.v[0], expect, 1e-12));
    }

    #[test]
    fn absorbing_game_matches_discounted_value() {
        let g = crate::game::make_random_general_sum(3, 2, 3, 2).unwrap().with_gamma(0.7);
        let pi = ConditionedPolicy::uniform(&g, 1);
        let rho = OpponentModel::uniform(&g, 1);
        let opts = EvalOptions { tol: 1e-13, max_iter: DEFAULT_EVAL_CAP };
        let base = soft_policy_evaluation(&g, 1, &pi, &rho, EvalMode::ModeledOpponent, None, &opts).unwrap();
        let abs = g.absorbing_transform(0.7).unwrap();
        let pi_a = ConditionedPolicy::uniform(&abs, 1);
        let rho_a = OpponentModel::uniform(&abs, 1);
        let q = soft_policy_evaluation(&abs, 1, &pi_a, &rho_a, EvalMode::ModeledOpponent, None, &opts).unwrap();
        // per-step regulariser is paid before the leak, so values agree
        for s in 0..3 {
            assert!(close(q.v[s], base.v[s], 1e-10), "{} vs {}", q.v[s], base.v[s]);
        }
        assert_eq!(q.v[3], 0.0);
    }

    #[test]
    fn finite_horizon_one_step() {
        let g = prisoners_dilemma(0.9).with_horizon(Horizon::Finite(0));
        let pi = ConditionedPolicy::uniform(&g, 0);
        let rho = OpponentModel::uniform(&g, 0);
        let f = soft_policy_evaluation_finite(&g, 0, &[pi], &[rho], EvalMode::ModeledOpponent, None).unwrap();
        assert_eq!(f.stages.len(), 1);
        // E[r] = (3 + 0 + 5 + 1) / 4 plus the own entropy; log rho cancels
        assert!(close(f.value(0)[0], 2.25 + 2f64.ln(), 1e-12));
    }

    #[test]
    fn best_response_rows() {
        let q = SoftQTable::from_parts(0, EvalMode::ModeledOpponent, 1, 2, vec![1.0, 0.0], vec![0.0]);
        let br = soft_best_response(&q);
        assert!(close(br.row(0, 0)[0], 0.7310585786300049, 1e-15));
    }

    #[test]
    fn kind_is_irrelevant_to_evaluation() {
        let g = prisoners_dilemma(0.5).with_kind(GameKind::GeneralSum);
        let pi = ConditionedPolicy::uniform(&g, 1);
        let rho = OpponentModel::uniform(&g, 1);
        assert!(elbo(&g, 1, &pi, &rho, EvalMode::ModeledOpponent, None, &EvalOptions::default()).is_ok());
    }
}
