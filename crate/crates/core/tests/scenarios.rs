use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use safeinit_core::dynamics::wrap;
use safeinit_core::scenario_features::*;

/// Independent ordering oracle: angle measured from +y counter-clockwise as
/// `atan2(dy, dx) - π/2`, reduced to `[0, 2π)`.
fn oracle_order(points: &[[f64; 2]]) -> Vec<usize> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let mut idx: Vec<usize> = (0..points.len()).collect();
    let angle = |k: usize| ((points[k][1] - cy).atan2(points[k][0] - cx) - PI / 2.0).rem_euclid(TAU);
    idx.sort_by(|&a, &b| angle(a).partial_cmp(&angle(b)).unwrap());
    idx
}

fn scenario_strategy() -> impl Strategy<Value = (Scenario, Vec<usize>)> {
    (3usize..=7, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = make_base_scenario(n, &mut rng, &CandidateBox::default()).unwrap();
        let mut sigma: Vec<usize> = (0..n).collect();
        sigma.shuffle(&mut rng);
        (sc, sigma)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn feature_map_is_permutation_invariant((sc, sigma) in scenario_strategy()) {
        let a = feature_map(&sc);
        let b = feature_map(&sc.permuted(&sigma));
        prop_assert_eq!(a.len(), 5 * sc.n());
        prop_assert!(a.0.iter().zip(&b.0).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn ccw_order_is_a_bijection(points in prop::collection::vec(prop::array::uniform2(-50.0..50.0f64), 1..12)) {
        let mut order = ccw_order(&points);
        order.sort();
        prop_assert_eq!(order, (0..points.len()).collect::<Vec<_>>());
    }

    #[test]
    fn ccw_order_matches_angle_oracle(points in prop::collection::vec(prop::array::uniform2(-30.0..30.0f64), 5)) {
        prop_assert_eq!(ccw_order(&points), oracle_order(&points));
    }

    #[test]
    fn candidates_stay_in_the_box(
        (sc, _) in scenario_strategy(),
        fixed in prop::collection::vec(any::<bool>(), 7),
        seed in any::<u64>(),
    ) {
        let bx = CandidateBox::default();
        let base = Scenario { fixed_mask: fixed[..sc.n()].to_vec(), ..sc };
        let c = sample_candidate(&base, &bx, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(&c.goals, &base.goals);
        prop_assert_eq!(&c.fixed_mask, &base.fixed_mask);
        for ((s, b), &f) in c.initial_states.iter().zip(&base.initial_states).zip(&base.fixed_mask) {
            if f {
                prop_assert_eq!(s, b);
            } else {
                prop_assert!((s.qx - b.qx).abs() <= 3.0);
                prop_assert!((s.qy - b.qy).abs() <= 3.0);
                prop_assert!(wrap(s.theta - b.theta).abs() <= PI / 5.0 + 1e-12);
                prop_assert!(s.theta >= -PI && s.theta < PI);
            }
        }
    }

    #[test]
    fn base_headings_face_the_centre(n in 3usize..=10, seed in any::<u64>()) {
        let sc = make_base_scenario(n, &mut ChaCha8Rng::seed_from_u64(seed), &CandidateBox::default()).unwrap();
        prop_assert_eq!(sc.n_fixed(), 0);
        for (k, s) in sc.initial_states.iter().enumerate() {
            let slot = circle_slot(n, k);
            prop_assert!(wrap(s.theta - slot.theta).abs() <= PI / 5.0 + 1e-12);
            prop_assert!((s.qx - slot.qx).abs() <= 3.0 && (s.qy - slot.qy).abs() <= 3.0);
        }
    }
}

#[test]
fn hand_checked_feature_order() {
    use safeinit_core::dynamics::VehicleState;
    // east, north, west, south around the origin; from twelve o'clock the order is north, west, south, east
    let states = vec![
        VehicleState::new(12.0, 0.0, PI - 0.1),
        VehicleState::new(0.0, 12.0, -PI / 2.0),
        VehicleState::new(-12.0, 0.0, 0.0),
        VehicleState::new(0.0, -12.0, PI / 2.0),
    ];
    let goals = vec![[-12.0, 0.0], [0.0, -12.0], [12.0, 0.0], [0.0, 12.0]];
    let sc = Scenario::new(states.clone(), goals.clone(), vec![false; 4]).unwrap();
    assert_eq!(ccw_order(&sc.positions()), vec![1, 2, 3, 0]);
    let mut expected = Vec::new();
    for &k in &[1, 2, 3, 0] {
        expected.extend_from_slice(&[states[k].qx, states[k].qy, states[k].theta]);
    }
    for &k in &[1, 2, 3, 0] {
        expected.extend_from_slice(&goals[k]);
    }
    assert_eq!(feature_map(&sc).0, expected);
}

#[test]
fn fixed_masks_are_random_subsets() {
    let sc = make_base_scenario(6, &mut ChaCha8Rng::seed_from_u64(1), &CandidateBox::default()).unwrap();
    let mut counts = [0usize; 6];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..6000 {
        let f = sc.with_random_fixed(2, &mut rng).unwrap();
        assert_eq!(f.n_fixed(), 2);
        for (c, &m) in counts.iter_mut().zip(&f.fixed_mask) {
            *c += m as usize;
        }
    }
    // each vehicle is fixed with probability 1/3
    assert!(counts.iter().all(|&c| (c as f64 - 2000.0).abs() < 4.0 * (6000.0f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt()));
}
