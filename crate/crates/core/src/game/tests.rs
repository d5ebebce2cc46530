use super::*;

fn two_state_game() -> GameSpec {
    // 2 agents x 2 actions, 2 states
    let na = 4;
    let reward: Vec<f64> = (0..2 * 2 * na).map(|k| k as f64 / 10.0 - 0.5).collect();
    let mut transition = Vec::new();
    for s in 0..2 {
        for a in 0..na {
            let p = 0.1 + 0.2 * ((s + a) % 4) as f64;
            transition.extend([p, 1.0 - p]);
        }
    }
    GameSpec::new(
        &[2, 2],
        2,
        reward,
        transition,
        0.8,
        Horizon::InfiniteDiscounted,
        vec![0.5, 0.5],
        GameKind::GeneralSum,
    )
    .unwrap()
}

#[test]
fn joint_index_round_trip() {
    let space = JointActionSpace::new(&[2, 3, 4]).unwrap();
    assert_eq!(space.len(), 24);
    for j in 0..24 {
        let acts = space.decode(j);
        assert_eq!(space.encode(&acts), j);
        for i in 0..3 {
            let own = space.own(i, j);
            let o = space.others(i, j);
            assert_eq!(own, acts[i]);
            assert_eq!(space.join(i, own, o), j);
            let rest = space.decode_others(i, o);
            let expect: Vec<usize> = (0..3).filter(|&k| k != i).map(|k| acts[k]).collect();
            assert_eq!(rest, expect);
        }
    }
    // agent 0 outermost
    assert_eq!(space.encode(&[1, 0, 0]), 12);
    assert_eq!(space.encode(&[0, 0, 1]), 1);
}

#[test]
fn empty_action_set_rejected() {
    assert!(JointActionSpace::new(&[2, 0]).is_err());
}

#[test]
fn valid_game_has_no_violations() {
    assert!(two_state_game().validate().is_empty());
    assert!(prisoners_dilemma(0.9).validate().is_empty());
}

#[test]
fn negative_probability_reported_once() {
    let g = two_state_game();
    let mut t = g.transition_tensor().to_vec();
    t[0] = 1.1;
    t[1] = -0.1;
    let bad = GameSpec::new(
        g.actions(),
        2,
        g.reward_tensor().to_vec(),
        t,
        0.8,
        Horizon::InfiniteDiscounted,
        vec![0.5, 0.5],
        GameKind::GeneralSum,
    )
    .unwrap();
    let v = bad.validate();
    assert_eq!(v.len(), 1, "{v:?}");
    assert_eq!(v[0].tensor, "transition");
    assert_eq!(v[0].index, vec![0, 0, 1]);
}

#[test]
fn row_sum_and_gamma_reported() {
    let g = two_state_game();
    let mut t = g.transition_tensor().to_vec();
    t[2] += 0.01;
    let bad = GameSpec::new(
        g.actions(),
        2,
        g.reward_tensor().to_vec(),
        t,
        1.0,
        Horizon::InfiniteDiscounted,
        vec![0.5, 0.5],
        GameKind::GeneralSum,
    )
    .unwrap();
    let v = bad.validate();
    assert_eq!(v.len(), 2, "{v:?}");
    assert!(v.iter().any(|x| x.tensor == "gamma"));
}

#[test]
fn wrong_kind_claim_reported() {
    let g = prisoners_dilemma(0.9).with_kind(GameKind::IdenticalInterest);
    assert_eq!(g.validate().len(), 1);
    let g = matching_pennies(0.9);
    assert_eq!(g.kind(), GameKind::ZeroSumTwoPlayer);
    assert!(g.require_kind(GameKind::ZeroSumTwoPlayer).is_ok());
    assert!(g.require_kind(GameKind::IdenticalInterest).is_err());
}

#[test]
fn shape_errors() {
    let r = GameSpec::new(
        &[2, 2],
        1,
        vec![0.0; 7],
        vec![1.0; 4],
        0.5,
        Horizon::InfiniteDiscounted,
        vec![1.0],
        GameKind::GeneralSum,
    );
    assert!(matches!(r, Err(VsgError::Dimension(_))));
}

#[test]
fn absorbing_transform_kernel() {
    let g = two_state_game();
    let t = g.absorbing_transform(0.7).unwrap();
    assert_eq!(t.n_states(), 3);
    assert_eq!(t.absorbing_state(), Some(2));
    assert!(t.validate().is_empty(), "{:?}", t.validate());
    for s in 0..2 {
        for a in 0..4 {
            let row = t.transition_row(s, a);
            let orig = g.transition_row(s, a);
            assert!((row[2] - 0.3).abs() < 1e-15);
            for sp in 0..2 {
                assert!((row[sp] - 0.7 * orig[sp]).abs() < 1e-15);
            }
            assert_eq!(t.reward(0, s, a), g.reward(0, s, a));
        }
        assert_eq!(t.transition_row(2, 1), &[0.0, 0.0, 1.0]);
        assert_eq!(t.reward(1, 2, 3), 0.0);
    }
}

#[test]
fn absorbing_transform_near_one_recovers_kernel() {
    let g = two_state_game();
    let t = g.absorbing_transform(1.0 - 1e-12).unwrap();
    let row = t.transition_row(1, 2);
    assert!(row[2] < 2e-12);
    for sp in 0..2 {
        assert!((row[sp] - g.transition_row(1, 2)[sp]).abs() < 1e-11);
    }
}

#[test]
fn absorbing_transform_composes() {
    let g = two_state_game();
    let twice = g
        .absorbing_transform(0.8)
        .unwrap()
        .absorbing_transform(0.5)
        .unwrap();
    let once = g.absorbing_transform(0.4).unwrap();
    for (x, y) in twice.transition_tensor().iter().zip(once.transition_tensor()) {
        assert!((x - y).abs() < 1e-15);
    }
}

#[test]
fn absorbing_transform_preconditions() {
    let g = two_state_game();
    assert!(g.absorbing_transform(1.0).is_err());
    assert!(g.absorbing_transform(0.0).is_err());
    let fin = g.with_horizon(Horizon::Finite(3));
    assert!(matches!(fin.absorbing_transform(0.5), Err(VsgError::Horizon(_))));
}

#[test]
fn normalisation_records_scale() {
    let g = prisoners_dilemma(0.9).normalize_rewards();
    assert_eq!(g.reward_scale(), 5.0);
    assert_eq!(g.max_abs_reward(), 1.0);
    assert_eq!(g.reward(0, 0, 2), 1.0);
}

#[test]
fn differential_game_optima() {
    let g = make_differential_game(DIFFERENTIAL_GRID).unwrap();
    assert_eq!(g.actions(), &[41, 41]);
    assert_eq!(g.kind(), GameKind::IdenticalInterest);
    let best = g.rewards_at(0, 0).iter().cloned().fold(f64::MIN, f64::max);
    assert_eq!(best, 10.0);
    // (5, 5) sits at grid index 30
    assert_eq!(g.reward(0, 0, g.joint().encode(&[30, 30])), 10.0);
    assert!(g.reward(0, 0, g.joint().encode(&[10, 10])).abs() < 1e-12);
}

#[test]
fn random_generators_are_seeded() {
    let a = make_random_identical_interest_mpg(7, 2, 3, 2).unwrap();
    let b = make_random_identical_interest_mpg(7, 2, 3, 2).unwrap();
    let c = make_random_identical_interest_mpg(8, 2, 3, 2).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.validate().is_empty());
    assert!(make_random_general_sum(1, 3, 2, 2).unwrap().validate().is_empty());
}

#[test]
fn json_round_trip() {
    let g = two_state_game();
    let back = GameSpec::from_json(&g.to_json()).unwrap();
    assert_eq!(g, back);
    let fin = g.clone().with_horizon(Horizon::Finite(4));
    assert_eq!(GameSpec::from_json(&fin.to_json()).unwrap(), fin);
    let abs = g.absorbing_transform(0.6).unwrap();
    assert_eq!(GameSpec::from_json(&abs.to_json()).unwrap(), abs);
}

#[test]
fn json_rejects_bad_horizon() {
    let text = g_json().replace("\"inf\"", "\"forever\"");
    assert!(matches!(GameSpec::from_json(&text), Err(VsgError::Format(_))));
}

fn g_json() -> String {
    two_state_game().to_json()
}
