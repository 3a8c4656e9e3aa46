use std::f64::consts::{FRAC_PI_2, PI};

use approx::assert_abs_diff_eq;

use super::*;
use crate::dsl::testutil::night_crossing;
use crate::dsl::{Actor, RoadNetwork, TimeOfDay, Weather};
use crate::geom::{distance_to_polyline, wrap_angle};

fn actor(position: InitialPosition, action: Action) -> Actor {
    Actor {
        model: VehicleModel::Sedan,
        initial_position: position,
        actions: vec![action],
        speed_limit: 30.0,
    }
}

fn scenario(road_type: RoadType, num_lanes: u32, actors: Vec<Actor>) -> Scenario {
    Scenario {
        road_network: RoadNetwork {
            road_type,
            num_lanes,
            stem_direction: (road_type == RoadType::TIntersection).then_some(Cardinal::South),
        },
        actors,
        env: Environment { time: TimeOfDay::Daytime, weather: Weather::Clear },
    }
}

fn end_heading(a: &ActorInit) -> f64 {
    let p = a.route.points();
    let n = p.len();
    (p[n - 1] - p[n - 2]).angle()
}

fn segments_cross(a: &[Vec2], b: &[Vec2]) -> bool {
    let hit = |p: Vec2, q: Vec2, r: Vec2, s: Vec2| {
        let d1 = (q - p).cross(r - p);
        let d2 = (q - p).cross(s - p);
        let d3 = (s - r).cross(p - r);
        let d4 = (s - r).cross(q - r);
        d1 * d2 < 0.0 && d3 * d4 < 0.0
    };
    a.windows(2)
        .any(|x| b.windows(2).any(|y| hit(x[0], x[1], y[0], y[1])))
}

#[test]
fn lane_counts_per_road_type() {
    let gp = GeometryParams::default();
    let count = |rt, n, g: fn(&LaneGroup) -> bool| {
        let s = scenario(rt, n, vec![]);
        build_road(&s.road_network, &gp).unwrap().iter().filter(|l| g(&l.id.group)).count()
    };
    assert_eq!(count(RoadType::Straight, 3, |g| *g == LaneGroup::Through(Dir::East)), 2);
    assert_eq!(count(RoadType::Straight, 3, |g| *g == LaneGroup::Through(Dir::West)), 1);
    assert_eq!(count(RoadType::Curve, 4, |g| matches!(g, LaneGroup::Through(_))), 4);
    assert_eq!(count(RoadType::Merging, 2, |g| *g == LaneGroup::MainRoad), 2);
    assert_eq!(count(RoadType::Merging, 2, |g| *g == LaneGroup::OnRamp), 1);
    // Four arms with 2 lanes: one approach and one exit lane each.
    assert_eq!(count(RoadType::Intersection, 2, |g| matches!(g, LaneGroup::Approach(_))), 4);
    // Stem on the south side: the north arm is missing.
    assert_eq!(count(RoadType::TIntersection, 2, |g| matches!(g, LaneGroup::Approach(_))), 3);
    assert_eq!(
        count(RoadType::TIntersection, 2, |g| *g == LaneGroup::Approach(Dir::South)),
        0
    );
}

#[test]
fn lane_spacing_equals_lane_width() {
    let gp = GeometryParams { lane_width: 3.2, ..Default::default() };
    let s = scenario(RoadType::Straight, 4, vec![]);
    let lanes = build_road(&s.road_network, &gp).unwrap();
    let y = |g, i| {
        lanes.iter().find(|l| l.id == LaneId { group: g, index: i }).unwrap().centerline[0].y
    };
    assert_abs_diff_eq!(y(LaneGroup::Through(Dir::East), 0) - y(LaneGroup::Through(Dir::East), 1), 3.2, epsilon = 1e-9);
    assert_abs_diff_eq!(y(LaneGroup::Through(Dir::West), 0) - y(LaneGroup::Through(Dir::East), 0), 3.2, epsilon = 1e-9);
}

#[test]
fn junction_turns_end_on_expected_headings() {
    let gp = GeometryParams::default();
    let tol = 5f64.to_radians();
    let cases = [
        (Action::MoveForward, FRAC_PI_2),
        (Action::TurnLeft, PI),
        (Action::TurnRight, 0.0),
    ];
    for (action, expect) in cases {
        let s = scenario(RoadType::Intersection, 4, vec![actor(InitialPosition::S2N, action)]);
        let scene = compile(&s, &gp, None).unwrap();
        let h = end_heading(&scene.actors[0]);
        assert!(wrap_angle(h - expect).abs() < tol, "{action}: {h}");
        assert!(wrap_angle(scene.actors[0].pose.heading - FRAC_PI_2).abs() < tol);
    }
}

#[test]
fn night_crossing_routes_cross_and_start_on_their_lanes() {
    let gp = GeometryParams::default();
    let scene = compile(&night_crossing(), &gp, Some("117021")).unwrap();
    assert_eq!(scene.actors.len(), 2);
    let (a, b) = (&scene.actors[0], &scene.actors[1]);
    assert!(segments_cross(&a.route.points(), &b.route.points()));
    for act in &scene.actors {
        let lane = scene.lane(act.lane).unwrap();
        let p = Vec2::new(act.pose.x, act.pose.y);
        assert!(distance_to_polyline(p, &lane.centerline) < 0.1);
        assert!(act.route.waypoints.iter().all(|w| w.pos().is_finite() && w.speed > 0.0));
    }
    assert!(!a.footprint.at(&a.pose).overlaps(&b.footprint.at(&b.pose)));
    // 45 mph at 80 % of the limit.
    assert_abs_diff_eq!(a.initial_speed, 45.0 * 0.44704 * 0.8, epsilon = 1e-9);
    let v = scene.coordinate_config();
    assert_eq!(v["actors"].as_array().unwrap().len(), 2);
}

#[test]
fn start_is_lead_time_from_box() {
    let gp = GeometryParams::default();
    let s = scenario(RoadType::Intersection, 2, vec![actor(InitialPosition::W2E, Action::MoveForward)]);
    let scene = compile(&s, &gp, None).unwrap();
    let a = &scene.actors[0];
    let b = road::box_half(&s.road_network, &gp);
    // Straight approach at constant speed: distance = v * lead_time.
    let v = 30.0 * MPH_TO_MS * 0.8;
    assert_abs_diff_eq!(-b - a.pose.x, v * gp.lead_time, epsilon = 1e-6);
}

#[test]
fn same_lane_actors_are_staggered() {
    let gp = GeometryParams::default();
    let s = scenario(
        RoadType::Straight,
        2,
        vec![
            actor(InitialPosition::W2E, Action::MoveForward),
            actor(InitialPosition::W2E, Action::MoveForward),
        ],
    );
    let scene = compile(&s, &gp, None).unwrap();
    let dx = scene.actors[0].pose.x - scene.actors[1].pose.x;
    assert_abs_diff_eq!(dx, gp.slot_spacing, epsilon = 1e-6);
}

#[test]
fn on_ramp_joins_outer_lane() {
    let gp = GeometryParams::default();
    for n in 1..=4 {
        let s = scenario(
            RoadType::Merging,
            n,
            vec![
                actor(InitialPosition::MainRoad, Action::MoveForward),
                actor(InitialPosition::OnRamp, Action::MoveForward),
            ],
        );
        let scene = compile(&s, &gp, None).unwrap();
        let ramp = scene.lane(LaneId { group: LaneGroup::OnRamp, index: 0 }).unwrap();
        let outer = scene.lane(LaneId { group: LaneGroup::MainRoad, index: n - 1 }).unwrap();
        let end = *ramp.centerline.last().unwrap();
        assert!(distance_to_polyline(end, &outer.centerline) < 0.1);
        assert!(wrap_angle(*ramp.headings.last().unwrap()).abs() < 2f64.to_radians());
        let start_heading = ramp.headings[0];
        assert_abs_diff_eq!(start_heading, gp.ramp_angle.to_radians(), epsilon = 1e-9);
        assert_eq!(scene.actors[1].maneuver, Maneuver::Merge);
    }
}

#[test]
fn north_south_straight_is_rotated() {
    let gp = GeometryParams::default();
    let s = scenario(
        RoadType::Straight,
        2,
        vec![
            actor(InitialPosition::S2N, Action::MoveForward),
            actor(InitialPosition::N2S, Action::MoveForward),
        ],
    );
    let scene = compile(&s, &gp, None).unwrap();
    assert!(wrap_angle(scene.actors[0].pose.heading - FRAC_PI_2).abs() < 1e-9);
    assert!(wrap_angle(scene.actors[1].pose.heading + FRAC_PI_2).abs() < 1e-9);
    assert_eq!(scene.actors[0].lane.group, LaneGroup::Through(Dir::North));
    assert!(scene.lane(scene.actors[1].lane).is_some());
}

#[test]
fn lane_change_ends_in_target_lane() {
    let gp = GeometryParams::default();
    let s = scenario(RoadType::Straight, 4, vec![actor(InitialPosition::W2E, Action::TurnLeft)]);
    let scene = compile(&s, &gp, None).unwrap();
    let a = &scene.actors[0];
    assert_eq!(a.maneuver, Maneuver::LaneChangeLeft);
    let last = a.route.waypoints.last().unwrap();
    assert_abs_diff_eq!(last.y, -offset_of(0, &gp), epsilon = 1e-9);
    assert_abs_diff_eq!(a.pose.y, -offset_of(1, &gp), epsilon = 1e-9);

    // One lane per direction: no room to change, warn and drive straight.
    let s = scenario(RoadType::Straight, 2, vec![actor(InitialPosition::W2E, Action::TurnLeft)]);
    let scene = compile(&s, &gp, None).unwrap();
    assert_eq!(scene.actors[0].maneuver, Maneuver::Straight);
    assert_eq!(scene.warnings.len(), 1);
}

fn offset_of(i: u32, gp: &GeometryParams) -> f64 {
    (i as f64 + 0.5) * gp.lane_width
}

#[test]
fn curve_speeds_respect_lateral_limit() {
    let gp = GeometryParams::default();
    let mut a = actor(InitialPosition::W2E, Action::MoveForward);
    a.speed_limit = 70.0;
    let s = scenario(RoadType::Curve, 2, vec![a]);
    let scene = compile(&s, &gp, None).unwrap();
    let wps = &scene.actors[0].route.waypoints;
    let r = gp.curve_radius + 0.5 * gp.lane_width;
    let cap = (gp.max_lateral_accel * r).sqrt();
    let min = wps.iter().map(|w| w.speed).fold(f64::INFINITY, f64::min);
    assert!(min <= cap + 0.05, "{min} vs {cap}");
    assert!(min >= cap * 0.95);
    // Deceleration between waypoints stays within the comfort limit.
    for w in wps.windows(2) {
        let ds = w[0].pos().dist(w[1].pos());
        let decel = (w[0].speed.powi(2) - w[1].speed.powi(2)) / (2.0 * ds);
        assert!(decel <= gp.comfort_decel + 1e-6);
    }
}

#[test]
fn errors_are_reported() {
    let gp = GeometryParams::default();
    // A 1-lane road has no westbound carriageway.
    let s = scenario(RoadType::Intersection, 1, vec![actor(InitialPosition::E2W, Action::MoveForward)]);
    assert!(matches!(compile(&s, &gp, None), Err(SceneError::NoApproach { vehicle: 0, .. })));
    // Stem on the south: nothing enters from the north arm.
    let s = scenario(RoadType::TIntersection, 2, vec![actor(InitialPosition::N2S, Action::MoveForward)]);
    assert!(matches!(compile(&s, &gp, None), Err(SceneError::NoApproach { .. })));
    // Up the stem and straight on runs into the missing north arm.
    let s = scenario(RoadType::TIntersection, 2, vec![actor(InitialPosition::S2N, Action::MoveForward)]);
    assert!(matches!(compile(&s, &gp, None), Err(SceneError::NoExit { .. })));
    let bad = GeometryParams { lane_width: 9.0, ..Default::default() };
    assert!(matches!(compile(&night_crossing(), &bad, None), Err(SceneError::Params(_))));
    let mut invalid = night_crossing();
    invalid.actors[0].initial_position = InitialPosition::OnRamp;
    assert!(matches!(compile(&invalid, &gp, None), Err(SceneError::Invalid(_))));
}

#[test]
fn compile_is_deterministic() {
    let gp = GeometryParams::default();
    let a = serde_json::to_string(&compile(&night_crossing(), &gp, None).unwrap()).unwrap();
    let b = serde_json::to_string(&compile(&night_crossing(), &gp, None).unwrap()).unwrap();
    assert_eq!(a, b);
}
