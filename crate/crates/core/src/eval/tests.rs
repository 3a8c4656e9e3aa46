use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;
use crate::dsl::testutil::night_crossing;
use crate::dsl::{InitialPosition, VehicleModel};
use crate::scene::{compile, GeometryParams};
use crate::sim::{run_all_egos, SimConfig, Termination, VehicleState, ViolationKind, ViolationRecord};

fn four_cases() -> (Vec<(String, Scenario)>, Vec<OracleRecord>) {
    let oracles: Vec<OracleRecord> = (0..4)
        .map(|i| OracleRecord { case_id: format!("c{i}"), scenario: night_crossing() })
        .collect();
    let preds = oracles.iter().map(|o| (o.case_id.clone(), o.scenario.clone())).collect();
    (preds, oracles)
}

fn fake_trace(ego: usize, pair: Option<(usize, usize)>) -> Trace {
    let s = VehicleState { x: 0.0, y: 0.0, heading: 0.0, speed: 0.0, progress: 0.0 };
    Trace {
        case_id: Some("c".into()),
        ego,
        dt: 0.05,
        seed: 0,
        termination: if pair.is_some() { Termination::Collision } else { Termination::Timeout },
        violations: pair
            .map(|p| ViolationRecord { kind: ViolationKind::Collision, step: 3, actors: p, poses: [s, s] })
            .into_iter()
            .collect(),
        steps: vec![],
        wall_ms: 0.0,
    }
}

#[test]
fn accuracy_examples() {
    let (preds, oracles) = four_cases();
    let r = score_extraction(&preds, &oracles).unwrap();
    assert_eq!((r.road_network_accuracy, r.actors_accuracy, r.env_accuracy, r.overall_accuracy), (1.0, 1.0, 1.0, 1.0));

    let (mut preds, oracles) = four_cases();
    preds[2].1.actors[1].model = VehicleModel::Pickup;
    let r = score_extraction(&preds, &oracles).unwrap();
    assert_eq!((r.road_network_accuracy, r.actors_accuracy, r.env_accuracy, r.overall_accuracy), (1.0, 0.75, 1.0, 0.75));
    assert!(r.table().contains("75.0%"));

    let (mut preds, oracles) = four_cases();
    preds[0].0 = "nope".into();
    assert_eq!(score_extraction(&preds, &oracles), Err(EvalError::MissingOracle("nope".into())));
}

#[test]
fn actor_pairing_ignores_declaration_order() {
    let want = night_crossing();
    let mut got = want.clone();
    got.actors.reverse();
    assert!(actors_match(&got.actors, &want.actors));
    got.actors[0].initial_position = InitialPosition::N2S;
    assert!(!actors_match(&got.actors, &want.actors));
    assert!(!actors_match(&got.actors[..1], &want.actors));
}

#[test]
fn reproduction_examples() {
    let s = night_crossing();
    let scene = compile(&s, &GeometryParams::default(), Some("117021")).unwrap();
    let traces = run_all_egos(&scene, &SimConfig::default()).unwrap();
    assert!(traces.iter().any(|t| check_reproduction(t, &s, Some(RoadType::Intersection))));
    assert!(!traces.iter().any(|t| check_reproduction(t, &s, Some(RoadType::Straight))));
    assert!(!check_reproduction(&fake_trace(0, None), &s, None));

    let mut three = s.clone();
    three.actors.push(s.actors[0].clone());
    assert!(!check_reproduction(&fake_trace(0, Some((1, 2))), &three, None));
    assert!(check_reproduction(&fake_trace(2, Some((1, 2))), &three, None));
}

#[test]
fn top_k_examples() {
    let f = |v: &[u8]| top_k(&v.iter().map(|&x| x == 1).collect::<Vec<_>>());
    assert_eq!(f(&[1, 0, 1, 1, 0, 1]), BTreeMap::from([(1, 1), (2, 3), (3, 4)]));
    assert!(f(&[0, 0, 0]).is_empty());
    assert_eq!(f(&[1, 1, 1]), BTreeMap::from([(1, 1), (2, 2), (3, 3)]));
}

#[test]
fn aggregate_examples() {
    let traces = vec![fake_trace(0, Some((0, 1))), fake_trace(1, None), fake_trace(0, Some((0, 1)))];
    let r = aggregate_report(&traces, Some(&[true, false, true]), None).unwrap();
    assert_eq!(r.num_scenarios, 3);
    assert_eq!(r.num_violations, 2);
    assert_abs_diff_eq!(r.detection_ratio, 2.0 / 3.0);
    assert_eq!(r.top_k, BTreeMap::from([(1, 1), (2, 3)]));
    assert_eq!(r.reproduced_cases, vec!["c".to_string()]);
    assert!(r.table().contains("Top 3 - violation"));
    let clean = aggregate_report(&[fake_trace(0, None)], None, None).unwrap();
    assert_eq!((clean.num_violations, clean.detection_ratio), (0, 0.0));
    assert!(clean.top_k.is_empty());
    assert_eq!(aggregate_report(&[], None, None), Err(EvalError::Empty));
    assert!(matches!(
        aggregate_report(&traces, Some(&[true]), None),
        Err(EvalError::VerdictCount { .. })
    ));
    // Timings never reach the serialized report unless supplied.
    assert!(!serde_json::to_string(&clean).unwrap().contains("generation_ms"));
}

/// Two-sided exact p-value from all 2^(n+m) subsets of size n, U counted pairwise.
fn brute_force_p(a: &[f64], b: &[f64]) -> (f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = a.len();
    let total = pooled.len();
    let u_of = |xs: &[f64], ys: &[f64]| -> f64 {
        xs.iter()
            .map(|x| ys.iter().map(|y| if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 }).sum::<f64>())
            .sum()
    };
    let u_obs = u_of(a, b);
    let mean = (a.len() * b.len()) as f64 / 2.0;
    let (mut hits, mut all) = (0usize, 0usize);
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = {
            let mut xs = vec![];
            let mut ys = vec![];
            for (i, v) in pooled.iter().enumerate() {
                if mask & (1 << i) != 0 { xs.push(*v) } else { ys.push(*v) }
            }
            (xs, ys)
        };
        all += 1;
        if (u_of(&xs, &ys) - mean).abs() >= (u_obs - mean).abs() - 1e-9 {
            hits += 1;
        }
    }
    (u_obs, hits as f64 / all as f64)
}

#[test]
fn u_examples() {
    let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
    assert_eq!(r.u_statistic, 0.0);
    assert_eq!(r.method, UMethod::Exact);
    let r = mann_whitney_u(&[1.0, 2.0, 2.0, 5.0], &[5.0, 2.0, 1.0, 2.0]).unwrap();
    assert_eq!(r.u_statistic, 8.0);
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [6.0, 7.0, 8.0, 9.0, 10.0];
    let r = mann_whitney_u(&a, &b).unwrap();
    assert_eq!((r.u_statistic, r.method), (0.0, UMethod::Normal));
    assert!(r.p_value < 0.02);
    // Exact enumeration over C(10,5) splits gives 2/252.
    assert_abs_diff_eq!(brute_force_p(&a, &b).1, 2.0 / 252.0, epsilon = 1e-12);
    let d = mann_whitney_u(&[3.0, 3.0], &[3.0]).unwrap();
    assert!(d.degenerate);
    assert_eq!(d.p_value, 1.0);
    assert!(mann_whitney_u(&[], &[1.0]).is_err());
}

proptest! {
    #[test]
    fn exact_matches_brute_force(
        a in prop::collection::vec(0u8..6, 1..=5),
        b in prop::collection::vec(0u8..6, 1..=5),
    ) {
        prop_assume!(a.len() * b.len() <= 20);
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        let (u, p) = brute_force_p(&a, &b);
        prop_assert_eq!(r.u_statistic, u);
        if !r.degenerate {
            prop_assert!((r.p_value - p).abs() < 1e-12);
        }
    }

    #[test]
    fn u_symmetry(
        a in prop::collection::vec(-50.0f64..50.0, 1..30),
        b in prop::collection::vec(-50.0f64..50.0, 1..30),
    ) {
        let r = mann_whitney_u(&a, &b).unwrap();
        prop_assert_eq!(r.u_statistic + r.u_b, (a.len() * b.len()) as f64);
        prop_assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        let s = mann_whitney_u(&b, &a).unwrap();
        prop_assert_eq!(s.u_statistic, r.u_b);
    }

    #[test]
    fn top_k_monotone(flags in prop::collection::vec(any::<bool>(), 0..60)) {
        let t = top_k(&flags);
        let v: Vec<usize> = t.values().copied().collect();
        prop_assert!(v.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(t.len(), flags.iter().filter(|&&f| f).count().min(3));
    }
}
