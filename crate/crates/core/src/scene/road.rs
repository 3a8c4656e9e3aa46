//! Lane geometry for the five road types.

use std::f64::consts::FRAC_PI_2;

use super::{Dir, GeometryParams, Lane, LaneGroup, LaneId, SceneError};
use crate::dsl::{RoadNetwork, RoadType};
use crate::geom::{chain, headings, sample_arc, sample_segment, Vec2};

/// Maximum spacing between consecutive centerline points.
pub(super) const STEP: f64 = 2.0;

/// Lanes per travel direction: east- and northbound carry the extra lane.
pub(super) fn lane_count(num_lanes: u32, dir: Dir) -> u32 {
    if dir.is_forward() {
        num_lanes.div_ceil(2)
    } else {
        num_lanes / 2
    }
}

pub(super) fn offset(i: u32, gp: &GeometryParams) -> f64 {
    (i as f64 + 0.5) * gp.lane_width
}

fn lane(group: LaneGroup, index: u32, points: Vec<Vec2>, gp: &GeometryParams) -> Lane {
    Lane {
        id: LaneId { group, index },
        headings: headings(&points),
        centerline: points,
        width: gp.lane_width,
    }
}

/// Half size of the junction box; wide enough for the widest carriageway.
pub(super) fn box_half(rn: &RoadNetwork, gp: &GeometryParams) -> f64 {
    let widest = lane_count(rn.num_lanes, Dir::East) as f64 * gp.lane_width;
    (gp.intersection_box / 2.0).max(widest + 1.0)
}

/// Sides of the junction that carry an arm.
pub(super) fn arms(rn: &RoadNetwork) -> Vec<Dir> {
    match (rn.road_type, rn.stem_direction) {
        (RoadType::TIntersection, Some(stem)) => {
            let stem = Dir::of_cardinal(stem);
            vec![stem, stem.left(), stem.right()]
        }
        _ => Dir::ALL.to_vec(),
    }
}

fn straight(rn: &RoadNetwork, gp: &GeometryParams) -> Vec<Lane> {
    let half = gp.segment_length / 2.0;
    let mut lanes = Vec::new();
    for dir in [Dir::East, Dir::West] {
        let u = dir.unit();
        for i in 0..lane_count(rn.num_lanes, dir) {
            let o = u.right() * offset(i, gp);
            let pts = sample_segment(u * -half + o, u * half + o, STEP);
            lanes.push(lane(LaneGroup::Through(dir), i, pts, gp));
        }
    }
    lanes
}

/// Tangent, 90-degree left arc, tangent. Lanes of one carriageway share point
/// counts per piece so that equal indices sit at the same station.
fn curve(rn: &RoadNetwork, gp: &GeometryParams) -> Result<Vec<Lane>, SceneError> {
    let t = gp.segment_length / 2.0;
    let r = gp.curve_radius;
    let back = lane_count(rn.num_lanes, Dir::West) as f64 * gp.lane_width;
    if r - back < 1.0 {
        return Err(SceneError::Geometry(format!(
            "curve radius {r} m is too tight for {} lanes",
            rn.num_lanes
        )));
    }
    let fwd = lane_count(rn.num_lanes, Dir::East) as f64 * gp.lane_width;
    let n_line = (t / STEP).ceil() as usize;
    let n_arc = ((FRAC_PI_2 * (r + fwd) / STEP).ceil() as usize).max(1);
    let center = Vec2::new(0.0, r);
    let line = |a: Vec2, b: Vec2| -> Vec<Vec2> {
        (0..=n_line).map(|k| a.lerp(b, k as f64 / n_line as f64)).collect()
    };
    let arc = |radius: f64, a0: f64, a1: f64| -> Vec<Vec2> {
        (0..=n_arc)
            .map(|k| center + Vec2::from_angle(a0 + (a1 - a0) * k as f64 / n_arc as f64) * radius)
            .collect()
    };
    let mut lanes = Vec::new();
    for i in 0..lane_count(rn.num_lanes, Dir::East) {
        let o = offset(i, gp);
        let mut pts = line(Vec2::new(-t, -o), Vec2::new(0.0, -o));
        chain(&mut pts, &arc(r + o, -FRAC_PI_2, 0.0));
        chain(&mut pts, &line(Vec2::new(r + o, r), Vec2::new(r + o, r + t)));
        lanes.push(lane(LaneGroup::Through(Dir::East), i, pts, gp));
    }
    for i in 0..lane_count(rn.num_lanes, Dir::West) {
        let o = offset(i, gp);
        let mut pts = line(Vec2::new(r - o, r + t), Vec2::new(r - o, r));
        chain(&mut pts, &arc(r - o, 0.0, -FRAC_PI_2));
        chain(&mut pts, &line(Vec2::new(0.0, o), Vec2::new(-t, o)));
        lanes.push(lane(LaneGroup::Through(Dir::West), i, pts, gp));
    }
    Ok(lanes)
}

/// Path from `p0` heading `u0` to `p1` heading `u1` through a 90-degree
/// fillet at the corner of the two lines.
fn fillet(p0: Vec2, u0: Vec2, p1: Vec2, u1: Vec2) -> Vec<Vec2> {
    // Corner c = p0 + a*u0 = p1 - b*u1.
    let denom = u0.cross(u1);
    let a = (p1 - p0).cross(u1) / denom;
    let corner = p0 + u0 * a;
    let b = (p1 - corner).dot(u1);
    let radius = a.min(b);
    let a0 = corner - u0 * radius;
    let a1 = corner + u1 * radius;
    let left = denom > 0.0;
    let normal = if left { u0.left() } else { u0.right() };
    let center = a0 + normal * radius;
    let start = (a0 - center).angle();
    let end = start + if left { FRAC_PI_2 } else { -FRAC_PI_2 };
    let mut pts = if p0.dist(a0) > 1e-9 {
        sample_segment(p0, a0, STEP)
    } else {
        Vec::new()
    };
    chain(&mut pts, &sample_arc(center, radius, start, end, STEP));
    if a1.dist(p1) > 1e-9 {
        chain(&mut pts, &sample_segment(a1, p1, STEP));
    }
    pts
}

fn junction(rn: &RoadNetwork, gp: &GeometryParams) -> Vec<Lane> {
    let b = box_half(rn, gp);
    let arm_len = gp.segment_length / 2.0;
    let sides = arms(rn);
    let mut lanes = Vec::new();
    for &side in &sides {
        // Inbound traffic on this arm travels away from the side.
        let d = side.opposite();
        let u = d.unit();
        for i in 0..lane_count(rn.num_lanes, d) {
            let o = u.right() * offset(i, gp);
            let pts = sample_segment(u * -(b + arm_len) + o, u * -b + o, STEP);
            lanes.push(lane(LaneGroup::Approach(d), i, pts, gp));
        }
        let e = side;
        let ue = e.unit();
        for i in 0..lane_count(rn.num_lanes, e) {
            let o = ue.right() * offset(i, gp);
            let pts = sample_segment(ue * b + o, ue * (b + arm_len) + o, STEP);
            lanes.push(lane(LaneGroup::Exit(e), i, pts, gp));
        }
    }
    for &side in &sides {
        let d = side.opposite();
        let n_in = lane_count(rn.num_lanes, d);
        if n_in == 0 {
            continue;
        }
        let u = d.unit();
        let start = |i: u32| u * -b + u.right() * offset(i, gp);
        for (to, from_lane) in [(d, None), (d.left(), Some(0)), (d.right(), Some(n_in - 1))] {
            let n_out = lane_count(rn.num_lanes, to);
            if !sides.contains(&to) || n_out == 0 {
                continue;
            }
            let ue = to.unit();
            let end = |j: u32| ue * b + ue.right() * offset(j, gp);
            match from_lane {
                None => {
                    for i in 0..n_in.min(n_out) {
                        let pts = sample_segment(start(i), end(i), STEP);
                        lanes.push(lane(LaneGroup::Connector { from: d, to }, i, pts, gp));
                    }
                }
                Some(i) => {
                    let j = if to == d.left() { 0 } else { n_out - 1 };
                    let pts = fillet(start(i), u, end(j), ue);
                    lanes.push(lane(LaneGroup::Connector { from: d, to }, i, pts, gp));
                }
            }
        }
    }
    lanes
}

/// One-way main road along x; the on-ramp comes in from the south-west at
/// `ramp_angle` and bends onto the outermost lane at x = 0.
fn merging(rn: &RoadNetwork, gp: &GeometryParams) -> Vec<Lane> {
    let half = gp.segment_length / 2.0;
    let mut lanes = Vec::new();
    for i in 0..rn.num_lanes {
        let y = -offset(i, gp);
        let pts = sample_segment(Vec2::new(-half, y), Vec2::new(half, y), STEP);
        lanes.push(lane(LaneGroup::MainRoad, i, pts, gp));
    }
    let y_out = -offset(rn.num_lanes - 1, gp);
    let theta = gp.ramp_angle.to_radians();
    let r = gp.curve_radius;
    let center = Vec2::new(0.0, y_out - r);
    let arc_start = center + Vec2::new(-theta.sin(), theta.cos()) * r;
    let ramp_start = arc_start - Vec2::from_angle(theta) * half;
    let mut pts = sample_segment(ramp_start, arc_start, STEP);
    chain(
        &mut pts,
        &sample_arc(center, r, FRAC_PI_2 + theta, FRAC_PI_2, STEP),
    );
    lanes.push(lane(LaneGroup::OnRamp, 0, pts, gp));
    lanes
}

/// Lanes for a road network with straight and curved roads laid along x.
pub fn build_road(rn: &RoadNetwork, gp: &GeometryParams) -> Result<Vec<Lane>, SceneError> {
    gp.check()?;
    if rn.num_lanes == 0 || rn.num_lanes > crate::dsl::MAX_LANES {
        return Err(SceneError::Geometry(format!(
            "{} lanes is outside 1..={}",
            rn.num_lanes,
            crate::dsl::MAX_LANES
        )));
    }
    match rn.road_type {
        RoadType::Straight => Ok(straight(rn, gp)),
        RoadType::Curve => curve(rn, gp),
        RoadType::Intersection => Ok(junction(rn, gp)),
        RoadType::TIntersection => {
            if rn.stem_direction.is_none() {
                return Err(SceneError::Geometry("T-intersection without stem direction".into()));
            }
            Ok(junction(rn, gp))
        }
        RoadType::Merging => Ok(merging(rn, gp)),
    }
}
