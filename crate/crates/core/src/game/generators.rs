use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GameKind, GameSpec, Horizon};
use crate::error::{Result, VsgError};

/// Points per axis of the default continuous-action discretisation.
pub const DIFFERENTIAL_GRID: usize = 41;
/// Discount used by [`make_differential_game`].
pub const DIFFERENTIAL_GAMMA: f64 = 0.5;

/// Single-state repeated game from per-agent payoff tensors.
///
/// `payoffs[i]` holds agent `i`'s payoff for every joint action in row-major
/// order (agent 0 outermost).
pub fn make_matrix_game(actions: &[usize], payoffs: &[Vec<f64>], gamma: f64) -> Result<GameSpec> {
    if payoffs.len() != actions.len() {
        return Err(VsgError::Dimension(format!(
            "{} payoff tensors for {} agents",
            payoffs.len(),
            actions.len()
        )));
    }
    let na: usize = actions.iter().product();
    let mut reward = Vec::with_capacity(na * actions.len());
    for (i, p) in payoffs.iter().enumerate() {
        if p.len() != na {
            return Err(VsgError::Dimension(format!(
                "payoff tensor of agent {i} has {} entries, expected {na}",
                p.len()
            )));
        }
        reward.extend_from_slice(p);
    }
    let mut game = GameSpec::new(
        actions,
        1,
        reward,
        vec![1.0; na],
        gamma,
        Horizon::InfiniteDiscounted,
        vec![1.0],
        GameKind::GeneralSum,
    )?;
    game.kind = game.detect_kind();
    Ok(game)
}

/// Two-player matrix game from row-player and column-player matrices.
pub fn make_bimatrix_game(row: &[Vec<f64>], col: &[Vec<f64>], gamma: f64) -> Result<GameSpec> {
    let m = row.len();
    let n = row.first().map_or(0, Vec::len);
    let shape_ok = col.len() == m
        && row.iter().all(|r| r.len() == n)
        && col.iter().all(|r| r.len() == n);
    if !shape_ok {
        return Err(VsgError::Dimension("payoff matrices must share one shape".into()));
    }
    let flat = |x: &[Vec<f64>]| x.iter().flatten().copied().collect::<Vec<_>>();
    make_matrix_game(&[m, n], &[flat(row), flat(col)], gamma)
}

pub fn prisoners_dilemma(gamma: f64) -> GameSpec {
    // cooperate = 0, defect = 1; T=5, R=3, P=1, S=0
    make_bimatrix_game(
        &[vec![3.0, 0.0], vec![5.0, 1.0]],
        &[vec![3.0, 5.0], vec![0.0, 1.0]],
        gamma,
    )
    .expect("fixed shape")
}

pub fn matching_pennies(gamma: f64) -> GameSpec {
    make_bimatrix_game(
        &[vec![1.0, -1.0], vec![-1.0, 1.0]],
        &[vec![-1.0, 1.0], vec![1.0, -1.0]],
        gamma,
    )
    .expect("fixed shape")
}

pub fn rock_paper_scissors(gamma: f64) -> GameSpec {
    let row = vec![
        vec![0.0, -1.0, 1.0],
        vec![1.0, 0.0, -1.0],
        vec![-1.0, 1.0, 0.0],
    ];
    let col: Vec<Vec<f64>> = row.iter().map(|r| r.iter().map(|x| -x).collect()).collect();
    make_bimatrix_game(&row, &col, gamma).expect("fixed shape")
}

pub fn chicken(gamma: f64) -> GameSpec {
    // swerve = 0, straight = 1
    make_bimatrix_game(
        &[vec![0.0, -1.0], vec![1.0, -10.0]],
        &[vec![0.0, 1.0], vec![-1.0, -10.0]],
        gamma,
    )
    .expect("fixed shape")
}

/// Identical-interest coordination game with payoff `payoff[k]` when both pick `k`.
pub fn coordination_game(payoff: &[f64], gamma: f64) -> Result<GameSpec> {
    let k = payoff.len();
    let mut m = vec![vec![0.0; k]; k];
    for (i, p) in payoff.iter().enumerate() {
        m[i][i] = *p;
    }
    make_bimatrix_game(&m, &m, gamma)
}

/// The two-agent max-of-quadratics coordination game on a `grid x grid`
/// discretisation of `[-10, 10]^2`. It has a local optimum near (-5, -5)
/// worth 0 and the global optimum (5, 5) worth 10.
pub fn make_differential_game(grid: usize) -> Result<GameSpec> {
    if grid < 2 {
        return Err(VsgError::Parameter(format!("grid needs >= 2 points, got {grid}")));
    }
    let xs: Vec<f64> = (0..grid)
        .map(|k| -10.0 + 20.0 * k as f64 / (grid - 1) as f64)
        .collect();
    let mut r = Vec::with_capacity(grid * grid);
    for &a1 in &xs {
        for &a2 in &xs {
            r.push(differential_reward(a1, a2));
        }
    }
    make_matrix_game(&[grid, grid], &[r.clone(), r], DIFFERENTIAL_GAMMA)
}

/// Shared payoff of the differential game at continuous actions `(a1, a2)`.
pub fn differential_reward(a1: f64, a2: f64) -> f64 {
    let f1 = 0.8 * (-((a1 + 5.0) / 3.0).powi(2) - ((a2 + 5.0) / 3.0).powi(2));
    let f2 = -(a1 - 5.0).powi(2) - (a2 - 5.0).powi(2) + 10.0;
    f1.max(f2)
}

fn random_kernel(rng: &mut ChaCha8Rng, n_states: usize, n_joint: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n_states * n_joint * n_states);
    for _ in 0..n_states * n_joint {
        let row: Vec<f64> = (0..n_states).map(|_| 1.0 - rng.gen::<f64>()).collect();
        let z: f64 = row.iter().sum();
        t.extend(row.iter().map(|p| p / z));
    }
    t
}

/// Random Markov potential game with one shared reward in `[-1, 1]` and a
/// random kernel. Discount 0.9, uniform initial state.
pub fn make_random_identical_interest_mpg(
    seed: u64,
    n_agents: usize,
    n_states: usize,
    n_actions: usize,
) -> Result<GameSpec> {
    if n_agents == 0 || n_states == 0 || n_actions == 0 {
        return Err(VsgError::Parameter("sizes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let na = n_actions.pow(n_agents as u32);
    let shared: Vec<f64> = (0..n_states * na).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let transition = random_kernel(&mut rng, n_states, na);
    let reward = shared.repeat(n_agents);
    GameSpec::new(
        &vec![n_actions; n_agents],
        n_states,
        reward,
        transition,
        0.9,
        Horizon::InfiniteDiscounted,
        vec![1.0 / n_states as f64; n_states],
        GameKind::IdenticalInterest,
    )
}

/// Random general-sum game with independent rewards in `[-1, 1]`.
pub fn make_random_general_sum(
    seed: u64,
    n_agents: usize,
    n_states: usize,
    n_actions: usize,
) -> Result<GameSpec> {
    if n_agents == 0 || n_states == 0 || n_actions == 0 {
        return Err(VsgError::Parameter("sizes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let na = n_actions.pow(n_agents as u32);
    let reward: Vec<f64> = (0..n_agents * n_states * na)
        .map(|_| rng.gen_range(-1.0..=1.0))
        .collect();
    let transition = random_kernel(&mut rng, n_states, na);
    GameSpec::new(
        &vec![n_actions; n_agents],
        n_states,
        reward,
        transition,
        0.9,
        Horizon::InfiniteDiscounted,
        vec![1.0 / n_states as f64; n_states],
        GameKind::GeneralSum,
    )
}
