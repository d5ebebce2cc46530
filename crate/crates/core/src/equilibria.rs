//! Correlated equilibria through a public signal folded into the state, and
//! the two-player zero-sum specialisation where each agent's opponent model
//! is the soft minimiser of its own Q.

use crate::error::{Result, VsgError};
use crate::game::{GameKind, GameSpec};
use crate::oracle::{exploitability, ExploitabilityReport, JointDist};
use crate::soft_eval::{floored_ln, tilt, OpponentModel, SoftQTable, StatePolicy};
use crate::vpg::{run_vpg, run_vpg_inner, Refresh, VpgConfig, VpgResult};

/// A public signal drawn i.i.d. from `sigma` at every step.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalScheme {
    sigma: Vec<f64>,
}

impl SignalScheme {
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if sigma.is_empty() {
            return Err(VsgError::Parameter("a signal scheme needs at least one signal".into()));
        }
        if sigma.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(VsgError::Parameter("signal probabilities must be >= 0".into()));
        }
        let z: f64 = sigma.iter().sum();
        if (z - 1.0).abs() > 1e-12 {
            return Err(VsgError::Parameter(format!("signal distribution sums to {z}")));
        }
        Ok(Self { sigma })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
}

/// Game on `S x Omega` (state `s * |Omega| + omega`) with kernel
/// `sigma(omega') P(s' | s, a)`; rewards ignore the signal.
pub fn augment_with_signal(game: &GameSpec, scheme: &SignalScheme) -> Result<GameSpec> {
    if game.is_pre_discounted() {
        return Err(VsgError::Parameter(
            "augment the game before applying the absorbing transform".into(),
        ));
    }
    let k = scheme.len();
    let ns = game.n_states();
    let na = game.n_joint();
    let n = game.n_agents();
    let big = ns * k;
    let mut reward = vec![0.0; n * big * na];
    for i in 0..n {
        for s in 0..ns {
            for w in 0..k {
                let dst = (i * big + s * k + w) * na;
                reward[dst..dst + na].copy_from_slice(game.rewards_at(i, s));
            }
        }
    }
    let mut transition = vec![0.0; big * na * big];
    for s in 0..ns {
        for w in 0..k {
            for a in 0..na {
                let base = ((s * k + w) * na + a) * big;
                for (sp, p) in game.transition_row(s, a).iter().enumerate() {
                    for (wp, q) in scheme.sigma.iter().enumerate() {
                        transition[base + sp * k + wp] = q * p;
                    }
                }
            }
        }
    }
    let initial = game
        .initial()
        .iter()
        .flat_map(|p| scheme.sigma.iter().map(move |q| p * q))
        .collect();
    GameSpec::new(
        game.actions(),
        big,
        reward,
        transition,
        game.gamma(),
        game.horizon(),
        initial,
        game.kind(),
    )
}

/// `mu(a | s) = sum_omega sigma(omega) prod_i pi_i(a^i | (s, omega))` from
/// marginal policies on the augmented game.
pub fn correlated_device(game: &GameSpec, scheme: &SignalScheme, augmented_marginals: &[StatePolicy]) -> JointDist {
    let k = scheme.len();
    let space = game.joint();
    (0..game.n_states())
        .map(|s| {
            (0..space.len())
                .map(|j| {
                    let acts = space.decode(j);
                    scheme
                        .sigma
                        .iter()
                        .enumerate()
                        .map(|(w, q)| {
                            q * acts
                                .iter()
                                .enumerate()
                                .map(|(i, &a)| augmented_marginals[i][s * k + w][a])
                                .product::<f64>()
                        })
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Largest absolute difference between a device row and the product of its
/// own marginals; zero exactly when every row factorises.
pub fn product_deviation(game: &GameSpec, device: &JointDist) -> f64 {
    let space = game.joint();
    let mut worst: f64 = 0.0;
    for row in device {
        let marg: Vec<Vec<f64>> = (0..game.n_agents())
            .map(|i| {
                let mut m = vec![0.0; game.n_actions(i)];
                for (j, p) in row.iter().enumerate() {
                    m[space.own(i, j)] += p;
                }
                m
            })
            .collect();
        for (j, p) in row.iter().enumerate() {
            let prod: f64 = space.decode(j).iter().enumerate().map(|(i, &a)| marg[i][a]).product();
            worst = worst.max((p - prod).abs());
        }
    }
    worst
}

#[derive(Clone, Debug)]
pub struct CorrelatedSolution {
    pub device: JointDist,
    /// Gains from signal-measurable deviations on the augmented game.
    pub report: ExploitabilityReport,
    pub augmented: GameSpec,
    pub run: VpgResult,
}

/// Runs the learner on the signal-augmented game and reads off the device.
pub fn solve_correlated(game: &GameSpec, scheme: &SignalScheme, config: &VpgConfig) -> Result<CorrelatedSolution> {
    let augmented = augment_with_signal(game, scheme)?;
    let run = run_vpg(&augmented, config)?;
    let device = correlated_device(game, scheme, &run.marginals);
    let report = exploitability(&augmented, &run.marginals)?;
    Ok(CorrelatedSolution {
        device,
        report,
        augmented,
        run,
    })
}

/// `rho_-i(o | s) ∝ prior(o | s) exp(-E_{a ~ own}[Q^i(s, a, o)])`, where the
/// `log rho` term that the evaluation adds to Q is removed first.
pub fn zero_sum_opponent_update(
    game: &GameSpec,
    q: &SoftQTable,
    prior: &StatePolicy,
    rho: &OpponentModel,
    own_marginal: &StatePolicy,
) -> Result<StatePolicy> {
    game.require_kind(GameKind::ZeroSumTwoPlayer)?;
    Ok((0..game.n_states())
        .map(|s| {
            let r = rho.joint_at(game, s);
            let expect: Vec<f64> = (0..q.n_others())
                .map(|o| {
                    let e: f64 = own_marginal[s]
                        .iter()
                        .enumerate()
                        .map(|(a, p)| p * q.q(s, a, o))
                        .sum();
                    -(e - floored_ln(r[o]))
                })
                .collect();
            tilt(&prior[s], &expect)
        })
        .collect())
}

/// Learner for two-player zero-sum games with the analytic opponent update
/// applied right after each agent's Q is evaluated.
pub fn solve_zero_sum(game: &GameSpec, config: &VpgConfig) -> Result<VpgResult> {
    game.require_kind(GameKind::ZeroSumTwoPlayer)?;
    run_vpg_inner(game, config, Refresh::ZeroSum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{matching_pennies, prisoners_dilemma};
    use crate::soft_eval::{tv, uniform, EvalMode};

    #[test]
    fn single_signal_is_identity() {
        let g = prisoners_dilemma(0.8);
        let a = augment_with_signal(&g, &SignalScheme::uniform(1).unwrap()).unwrap();
        assert_eq!(a, g);
    }

    #[test]
    fn two_signals_split_evenly() {
        let g = prisoners_dilemma(0.8);
        let a = augment_with_signal(&g, &SignalScheme::uniform(2).unwrap()).unwrap();
        assert_eq!(a.n_states(), 2);
        assert!(a.validate().is_empty());
        for s in 0..2 {
            for j in 0..4 {
                assert_eq!(a.transition_row(s, j), &[0.5, 0.5]);
            }
        }
    }

    #[test]
    fn designed_device_is_not_a_product() {
        let g = prisoners_dilemma(0.8);
        let scheme = SignalScheme::uniform(2).unwrap();
        let m = vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 2];
        let mu = correlated_device(&g, &scheme, &m);
        assert_eq!(mu[0], vec![0.5, 0.0, 0.0, 0.5]);
        assert!(product_deviation(&g, &mu) > 0.2);
        let flat = vec![vec![vec![0.3, 0.7], vec![0.3, 0.7]], vec![vec![0.6, 0.4], vec![0.6, 0.4]]];
        assert!(product_deviation(&g, &correlated_device(&g, &scheme, &flat)) < 1e-15);
    }

    #[test]
    fn zero_sum_update_examples() {
        let g = matching_pennies(0.5);
        let rho = OpponentModel::uniform(&g, 0);
        let own = vec![uniform(2)];
        let prior = vec![uniform(2)];
        let ln_half = 0.5f64.ln();
        // constant Q apart from the model's log term
        let q = SoftQTable::from_parts(0, EvalMode::ModeledOpponent, 2, 2, vec![3.0 + ln_half; 4], vec![0.0]);
        let out = zero_sum_opponent_update(&g, &q, &prior, &rho, &own).unwrap();
        assert!(tv(&out[0], &prior[0]) < 1e-15);
        // opponent action 0 hurts agent 0 most
        let q = SoftQTable::from_parts(0, EvalMode::ModeledOpponent, 2, 2, vec![-1.0, -1.0, 0.5, 0.5], vec![0.0]);
        let out = zero_sum_opponent_update(&g, &q, &prior, &rho, &own).unwrap();
        assert!(out[0][0] > out[0][1]);
        assert!(zero_sum_opponent_update(&prisoners_dilemma(0.5), &q, &prior, &rho, &own).is_err());
    }
}
