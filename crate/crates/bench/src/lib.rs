//! Shared workloads for the criterion benches.

use vsg_core::game::{make_differential_game, make_random_general_sum, GameSpec, DIFFERENTIAL_GRID};
use vsg_core::mean_field::{crowd_ring, MfGameSpec};

/// Random general-sum game with `states` states, two agents and three actions each.
pub fn random_game(states: usize) -> GameSpec {
    make_random_general_sum(17, 2, states, 3).expect("valid sizes")
}

pub fn differential() -> GameSpec {
    make_differential_game(DIFFERENTIAL_GRID).expect("valid grid")
}

pub fn crowd(weight: f64) -> MfGameSpec {
    crowd_ring(weight, 20).build().expect("fixture builds")
}
