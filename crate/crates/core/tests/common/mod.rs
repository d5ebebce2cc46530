//! Independent reference computations shared by the integration tests and the
//! acceptance harness: Monte-Carlo rollouts, exhaustive trajectory
//! enumeration, brute-force policy enumeration and 2x2 support enumeration.

#![allow(dead_code)]

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vsg_core::game::*;
use vsg_core::soft_eval::{ConditionedPolicy, StatePolicy};

pub fn random_dist<R: Rng>(k: usize, spread: f64, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| (spread * rng.gen_range(-1.0..1.0)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

pub fn random_conditioned<R: Rng>(game: &GameSpec, agent: usize, rng: &mut R) -> ConditionedPolicy {
    let mut pi = ConditionedPolicy::uniform(game, agent);
    for s in 0..game.n_states() {
        for o in 0..pi.n_others() {
            let row = random_dist(game.n_actions(agent), 1.5, rng);
            pi.row_mut(s, o).copy_from_slice(&row);
        }
    }
    pi
}

pub fn random_marginals<R: Rng>(game: &GameSpec, rng: &mut R) -> Vec<StatePolicy> {
    (0..game.n_agents())
        .map(|i| {
            (0..game.n_states())
                .map(|_| random_dist(game.n_actions(i), 1.0, rng))
                .collect()
        })
        .collect()
}

/// Probability of the others' joint index `o` of `agent` at `s` under independent marginals.
pub fn others_prob(game: &GameSpec, agent: usize, marginals: &[StatePolicy], s: usize, o: usize) -> f64 {
    let acts = game.joint().decode_others(agent, o);
    game.joint()
        .other_agents(agent)
        .iter()
        .zip(&acts)
        .map(|(&j, &a)| marginals[j][s][a])
        .product()
}

pub fn others_dist(game: &GameSpec, agent: usize, marginals: &[StatePolicy], s: usize) -> Vec<f64> {
    (0..game.joint().others_len(agent))
        .map(|o| others_prob(game, agent, marginals, s, o))
        .collect()
}

/// Per-step soft reward `r + ln truth(o) - ln model(o) - ln pi(a | s, o)`.
fn soft_reward(
    game: &GameSpec,
    agent: usize,
    pi: &ConditionedPolicy,
    model: &[StatePolicy],
    truth: &[StatePolicy],
    s: usize,
    o: usize,
    a: usize,
) -> f64 {
    let joint = game.joint().join(agent, a, o);
    game.reward(agent, s, joint) + others_prob(game, agent, truth, s, o).ln()
        - others_prob(game, agent, model, s, o).ln()
        - pi.row(s, o)[a].ln()
}

pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    /// Bound on the bias from truncating discounted rollouts.
    pub truncation: f64,
}

/// Monte-Carlo estimate of the soft value of `agent` from the initial
/// distribution: opponents drawn from `model`, the log-ratio to `truth`
/// added per step, discounted rollouts truncated after `len` steps.
pub fn mc_soft_value(
    game: &GameSpec,
    agent: usize,
    pi: &ConditionedPolicy,
    model: &[StatePolicy],
    truth: &[StatePolicy],
    episodes: usize,
    len: usize,
    rng: &mut ChaCha8Rng,
) -> McEstimate {
    let gamma = game.gamma();
    let init = WeightedIndex::new(game.initial()).unwrap();
    let opp: Vec<WeightedIndex<f64>> = (0..game.n_states())
        .map(|s| WeightedIndex::new(others_dist(game, agent, model, s)).unwrap())
        .collect();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..episodes {
        let mut s = init.sample(rng);
        let mut ret = 0.0;
        let mut disc = 1.0;
        for _ in 0..len {
            let o = opp[s].sample(rng);
            let a = WeightedIndex::new(pi.row(s, o)).unwrap().sample(rng);
            let step = soft_reward(game, agent, pi, model, truth, s, o, a);
            ret += disc * step;
            let joint = game.joint().join(agent, a, o);
            s = WeightedIndex::new(game.transition_row(s, joint)).unwrap().sample(rng);
            disc *= gamma;
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    let n = episodes as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    let mut step_bound: f64 = 0.0;
    for s in 0..game.n_states() {
        for o in 0..game.joint().others_len(agent) {
            for a in 0..game.n_actions(agent) {
                step_bound = step_bound.max(soft_reward(game, agent, pi, model, truth, s, o, a).abs());
            }
        }
    }
    McEstimate {
        mean,
        std_err: (var / n).sqrt(),
        truncation: gamma.powi(len as i32) * step_bound / (1.0 - gamma),
    }
}

/// Exact soft value of `agent` on a `Finite(T)` game by summing over every
/// state/action path, with policies and models fixed across steps.
pub fn enumerate_soft_value(
    game: &GameSpec,
    agent: usize,
    pi: &ConditionedPolicy,
    model: &[StatePolicy],
    truth: &[StatePolicy],
) -> f64 {
    let Horizon::Finite(t_max) = game.horizon() else {
        panic!("enumeration needs a finite horizon");
    };
    fn walk(
        game: &GameSpec,
        agent: usize,
        pi: &ConditionedPolicy,
        model: &[StatePolicy],
        truth: &[StatePolicy],
        t: usize,
        t_max: usize,
        s: usize,
        prob: f64,
        acc: f64,
    ) -> f64 {
        let mut total = 0.0;
        for o in 0..game.joint().others_len(agent) {
            let po = others_prob(game, agent, model, s, o);
            for a in 0..game.n_actions(agent) {
                let p = prob * po * pi.row(s, o)[a];
                if p == 0.0 {
                    continue;
                }
                let acc2 = acc + soft_reward(game, agent, pi, model, truth, s, o, a);
                if t == t_max {
                    total += p * acc2;
                    continue;
                }
                let joint = game.joint().join(agent, a, o);
                for (sp, q) in game.transition_row(s, joint).iter().enumerate() {
                    if *q > 0.0 {
                        total += walk(game, agent, pi, model, truth, t + 1, t_max, sp, p * q, acc2);
                    }
                }
            }
        }
        total
    }
    game.initial()
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(s, p)| walk(game, agent, pi, model, truth, 0, t_max, s, *p, 0.0))
        .sum()
}

/// Fixture games used by the equivalence checks.
pub fn fixture_games() -> Vec<(&'static str, GameSpec)> {
    vec![
        ("prisoners-dilemma", prisoners_dilemma(0.9)),
        ("matching-pennies", matching_pennies(0.9)),
        ("rock-paper-scissors", rock_paper_scissors(0.9)),
        ("chicken", chicken(0.9)),
        ("coordination", coordination_game(&[2.0, 1.0], 0.9).unwrap()),
        ("random-identical-interest", make_random_identical_interest_mpg(3, 2, 3, 2).unwrap()),
        ("random-general-sum", make_random_general_sum(4, 2, 3, 3).unwrap()),
        ("random-three-agent", make_random_general_sum(5, 3, 2, 2).unwrap()),
        ("differential", make_differential_game(DIFFERENTIAL_GRID).unwrap()),
    ]
}

/// Unregularised value of a deterministic stationary single-agent policy on a
/// game whose other agents are frozen at `others`, by solving the linear
/// system through repeated substitution.
pub fn deterministic_policy_value(
    game: &GameSpec,
    agent: usize,
    others: &[Vec<f64>],
    choice: &[usize],
) -> Vec<f64> {
    let ns = game.n_states();
    let mut v = vec![0.0; ns];
    for _ in 0..100_000 {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for (o, po) in others[s].iter().enumerate() {
                let joint = game.joint().join(agent, choice[s], o);
                let cont: f64 = game.transition_row(s, joint).iter().zip(&v).map(|(p, x)| p * x).sum();
                next[s] += po * (game.reward(agent, s, joint) + game.gamma() * cont);
            }
        }
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if diff < 1e-14 {
            break;
        }
    }
    v
}

/// Mixed Nash equilibria of a 2x2 bimatrix game by support enumeration.
/// Returns `(p, q)`: the probability of action 0 for the row and column player.
pub fn support_enumeration_2x2(row: [[f64; 2]; 2], col: [[f64; 2]; 2]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for a in 0..2 {
        for b in 0..2 {
            let row_ok = row[a][b] >= row[1 - a][b];
            let col_ok = col[a][b] >= col[a][1 - b];
            if row_ok && col_ok {
                out.push((if a == 0 { 1.0 } else { 0.0 }, if b == 0 { 1.0 } else { 0.0 }));
            }
        }
    }
    // fully mixed: each player makes the other indifferent
    let dq = row[0][0] - row[0][1] - row[1][0] + row[1][1];
    let dp = col[0][0] - col[1][0] - col[0][1] + col[1][1];
    if dq.abs() > 1e-15 && dp.abs() > 1e-15 {
        let q = (row[1][1] - row[0][1]) / dq;
        let p = (col[1][1] - col[1][0]) / dp;
        if (0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q) && p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0 {
            out.push((p, q));
        }
    }
    out
}
