//! Compiles a scenario into lanes, initial poses and waypoint routes.
//!
//! Right-hand traffic. Lane index 0 is the lane closest to the road's
//! centerline; east- and northbound carriageways take the extra lane when the
//! lane count is odd. Straight and curved roads are laid along x and turned
//! to run north-south when every actor travels north or south.

mod road;

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::dsl::{
    validate, Action, Cardinal, Environment, InitialPosition, RoadType, Scenario, ValidationIssue,
    VehicleModel,
};
use crate::geom::{chain, circumradius, headings, point_at, stations, Obb, Vec2};

pub use road::build_road;
use road::{arms, lane_count};

/// Exact conversion used for every speed in a compiled scene.
pub const MPH_TO_MS: f64 = 0.44704;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scenario is invalid: {0:?}")]
    Invalid(Vec<ValidationIssue>),
    #[error("invalid geometry parameters: {0}")]
    Params(String),
    #[error("{0}")]
    Geometry(String),
    #[error("vehicle {vehicle}: no {position} approach on this road")]
    NoApproach { vehicle: usize, position: InitialPosition },
    #[error("vehicle {vehicle}: no exit for {action} from {position}")]
    NoExit {
        vehicle: usize,
        position: InitialPosition,
        action: Action,
    },
    #[error("vehicle {vehicle} overlaps vehicle {other} at its start even after staggering")]
    InitialOverlap { vehicle: usize, other: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryParams {
    pub lane_width: f64,
    pub segment_length: f64,
    pub intersection_box: f64,
    pub curve_radius: f64,
    /// Degrees.
    pub ramp_angle: f64,
    /// Fraction of the speed limit actors start and cruise at.
    pub initial_speed_factor: f64,
    /// Seconds of travel between an actor's start and the conflict point.
    pub lead_time: f64,
    /// Longitudinal gap added per same-lane actor.
    pub slot_spacing: f64,
    /// Caps route speeds on arcs: v = sqrt(a_lat * r).
    pub max_lateral_accel: f64,
    /// Deceleration used to slow down ahead of arcs.
    pub comfort_decel: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self {
            lane_width: 3.5,
            segment_length: 200.0,
            intersection_box: 20.0,
            curve_radius: 60.0,
            ramp_angle: 15.0,
            initial_speed_factor: 0.8,
            lead_time: 4.0,
            slot_spacing: 15.0,
            max_lateral_accel: 3.0,
            comfort_decel: 2.0,
        }
    }
}

impl GeometryParams {
    pub fn check(&self) -> Result<(), SceneError> {
        let positive = [
            ("lane_width", self.lane_width),
            ("segment_length", self.segment_length),
            ("intersection_box", self.intersection_box),
            ("curve_radius", self.curve_radius),
            ("ramp_angle", self.ramp_angle),
            ("initial_speed_factor", self.initial_speed_factor),
            ("lead_time", self.lead_time),
            ("slot_spacing", self.slot_spacing),
            ("max_lateral_accel", self.max_lateral_accel),
            ("comfort_decel", self.comfort_decel),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(SceneError::Params(format!("{name} must be positive, got {v}")));
        }
        if !(2.5..=5.0).contains(&self.lane_width) {
            return Err(SceneError::Params(format!(
                "lane_width {} is outside [2.5, 5.0]",
                self.lane_width
            )));
        }
        if self.ramp_angle >= 90.0 || self.initial_speed_factor > 1.0 {
            return Err(SceneError::Params(
                "ramp_angle must be below 90 and initial_speed_factor at most 1".into(),
            ));
        }
        Ok(())
    }
}

/// Compass travel direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    East,
    North,
    West,
    South,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::East, Dir::North, Dir::West, Dir::South];

    pub fn unit(self) -> Vec2 {
        match self {
            Dir::East => Vec2::new(1.0, 0.0),
            Dir::North => Vec2::new(0.0, 1.0),
            Dir::West => Vec2::new(-1.0, 0.0),
            Dir::South => Vec2::new(0.0, -1.0),
        }
    }

    pub fn left(self) -> Dir {
        match self {
            Dir::East => Dir::North,
            Dir::North => Dir::West,
            Dir::West => Dir::South,
            Dir::South => Dir::East,
        }
    }

    pub fn right(self) -> Dir {
        self.left().opposite()
    }

    pub fn opposite(self) -> Dir {
        self.left().left()
    }

    pub fn of_cardinal(c: Cardinal) -> Dir {
        match c {
            Cardinal::East => Dir::East,
            Cardinal::North => Dir::North,
            Cardinal::West => Dir::West,
            Cardinal::South => Dir::South,
        }
    }

    pub fn is_forward(self) -> bool {
        matches!(self, Dir::East | Dir::North)
    }

    pub fn of_position(p: InitialPosition) -> Option<Dir> {
        match p {
            InitialPosition::W2E => Some(Dir::East),
            InitialPosition::E2W => Some(Dir::West),
            InitialPosition::S2N => Some(Dir::North),
            InitialPosition::N2S => Some(Dir::South),
            InitialPosition::MainRoad | InitialPosition::OnRamp => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LaneGroup {
    /// Full-length lane of a straight or curved road, named by its travel direction at entry.
    Through(Dir),
    /// Junction arm lane heading into the box.
    Approach(Dir),
    /// Junction arm lane heading away from the box.
    Exit(Dir),
    /// Path across the junction box.
    Connector { from: Dir, to: Dir },
    MainRoad,
    OnRamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LaneId {
    pub group: LaneGroup,
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: LaneId,
    pub centerline: Vec<Vec2>,
    pub headings: Vec<f64>,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    /// Target speed, m/s.
    pub speed: f64,
}

impl Waypoint {
    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub waypoints: Vec<Waypoint>,
}

impl Route {
    pub fn points(&self) -> Vec<Vec2> {
        self.waypoints.iter().map(Waypoint::pos).collect()
    }

    pub fn length(&self) -> f64 {
        stations(&self.points()).last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
}

impl Footprint {
    pub fn of(model: VehicleModel) -> Self {
        let (length, width) = match model {
            VehicleModel::Sedan => (4.6, 1.8),
            VehicleModel::Suv => (4.8, 1.9),
            VehicleModel::Minivan => (5.1, 1.9),
            VehicleModel::Pickup => (5.3, 2.0),
            VehicleModel::SemiTruck => (16.0, 2.5),
        };
        Self { length, width }
    }

    pub fn at(&self, pose: &Pose) -> Obb {
        Obb {
            center: Vec2::new(pose.x, pose.y),
            heading: pose.heading,
            length: self.length,
            width: self.width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    Straight,
    Left,
    Right,
    LaneChangeLeft,
    LaneChangeRight,
    Merge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorInit {
    pub model: VehicleModel,
    pub position: InitialPosition,
    pub lane: LaneId,
    pub maneuver: Maneuver,
    pub pose: Pose,
    /// m/s.
    pub initial_speed: f64,
    pub route: Route,
    pub footprint: Footprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledScene {
    pub case_id: Option<String>,
    pub road_type: RoadType,
    pub num_lanes: u32,
    pub params: GeometryParams,
    pub lanes: Vec<Lane>,
    pub actors: Vec<ActorInit>,
    pub env: Environment,
    pub warnings: Vec<String>,
}

impl CompiledScene {
    pub fn lane(&self, id: LaneId) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }

    /// Begin/middle/end coordinates of every lane and route.
    pub fn coordinate_config(&self) -> Value {
        let triple = |pts: &[Vec2]| -> Value {
            let st = stations(pts);
            let mid = point_at(pts, &st, st[st.len() - 1] / 2.0).0;
            let last = pts[pts.len() - 1];
            json!([[pts[0].x, pts[0].y], [mid.x, mid.y], [last.x, last.y]])
        };
        json!({
            "case_id": self.case_id,
            "road_type": self.road_type.to_string(),
            "num_lanes": self.num_lanes,
            "lanes": self.lanes.iter().map(|l| json!({
                "id": l.id,
                "points": triple(&l.centerline),
            })).collect::<Vec<_>>(),
            "actors": self.actors.iter().enumerate().map(|(i, a)| json!({
                "vehicle": format!("Vehicle_{}", i + 1),
                "lane": a.lane,
                "spawn": [a.pose.x, a.pose.y, a.pose.heading],
                "speed": a.initial_speed,
                "route": triple(&a.route.points()),
            })).collect::<Vec<_>>(),
            "env": { "time": self.env.time.to_string(), "weather": self.env.weather.to_string() },
        })
    }
}

/// Full path (from the start of its first lane) plus the station of the conflict reference.
struct Plan {
    lane: LaneId,
    maneuver: Maneuver,
    path: Vec<Vec2>,
    reference: f64,
}

struct Ctx<'a> {
    road_type: RoadType,
    num_lanes: u32,
    lanes: &'a [Lane],
    sides: Vec<Dir>,
    warnings: Vec<String>,
}

impl Ctx<'_> {
    fn lane(&self, group: LaneGroup, index: u32) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == LaneId { group, index })
    }

    fn turn(actions: &[Action]) -> Option<Action> {
        actions.iter().copied().find(|a| *a != Action::MoveForward)
    }

    fn plan(&mut self, vehicle: usize, pos: InitialPosition, actions: &[Action]) -> Result<Plan, SceneError> {
        match self.road_type {
            RoadType::Intersection | RoadType::TIntersection => self.plan_junction(vehicle, pos, actions),
            RoadType::Straight | RoadType::Curve => self.plan_through(vehicle, pos, actions),
            RoadType::Merging => self.plan_merge(vehicle, pos, actions),
        }
    }

    fn plan_junction(&self, vehicle: usize, pos: InitialPosition, actions: &[Action]) -> Result<Plan, SceneError> {
        let d = Dir::of_position(pos).ok_or(SceneError::NoApproach { vehicle, position: pos })?;
        let n_in = lane_count(self.num_lanes, d);
        if !self.sides.contains(&d.opposite()) || n_in == 0 {
            return Err(SceneError::NoApproach { vehicle, position: pos });
        }
        let turn = Self::turn(actions);
        let (to, maneuver, index) = match turn {
            None => (d, Maneuver::Straight, 0),
            Some(Action::TurnLeft) => (d.left(), Maneuver::Left, 0),
            Some(_) => (d.right(), Maneuver::Right, n_in - 1),
        };
        let no_exit = || SceneError::NoExit {
            vehicle,
            position: pos,
            action: turn.unwrap_or(Action::MoveForward),
        };
        let approach = self.lane(LaneGroup::Approach(d), index).ok_or_else(no_exit)?;
        let connector = self
            .lane(LaneGroup::Connector { from: d, to }, index)
            .ok_or_else(no_exit)?;
        let end = *connector.centerline.last().expect("non-empty");
        let exit = self
            .lanes
            .iter()
            .filter(|l| l.id.group == LaneGroup::Exit(to))
            .find(|l| l.centerline[0].dist(end) < 1e-6)
            .ok_or_else(no_exit)?;
        let mut path = approach.centerline.clone();
        let reference = stations(&path).last().copied().unwrap_or(0.0);
        chain(&mut path, &connector.centerline);
        chain(&mut path, &exit.centerline);
        Ok(Plan { lane: approach.id, maneuver, path, reference })
    }

    /// Lane-aligned blend from `src` to `dst` centred on station `at`.
    fn lane_change(src: &[Vec2], dst: &[Vec2], at: f64, half: f64) -> Vec<Vec2> {
        let st = stations(src);
        src.iter()
            .zip(dst)
            .zip(&st)
            .map(|((a, b), s)| {
                let t = ((s - (at - half)) / (2.0 * half)).clamp(0.0, 1.0);
                let smooth = t * t * (3.0 - 2.0 * t);
                a.lerp(*b, smooth)
            })
            .collect()
    }

    fn plan_through(&mut self, vehicle: usize, pos: InitialPosition, actions: &[Action]) -> Result<Plan, SceneError> {
        let dir = match Dir::of_position(pos) {
            Some(d) if d.is_forward() => Dir::East,
            Some(_) => Dir::West,
            None => return Err(SceneError::NoApproach { vehicle, position: pos }),
        };
        let group = LaneGroup::Through(dir);
        let n = lane_count(self.num_lanes, dir);
        if n == 0 {
            return Err(SceneError::NoApproach { vehicle, position: pos });
        }
        let (from, to, maneuver) = match Self::turn(actions) {
            None => (0, None, Maneuver::Straight),
            Some(Action::TurnLeft) if n > 1 => (1, Some(0), Maneuver::LaneChangeLeft),
            Some(Action::TurnRight) if n > 1 => (0, Some(1), Maneuver::LaneChangeRight),
            Some(a) => {
                self.warnings.push(format!(
                    "vehicle {}: '{a}' needs a second lane in its direction; driving straight",
                    vehicle + 1
                ));
                (0, None, Maneuver::Straight)
            }
        };
        let src = self.lane(group, from).expect("lane exists");
        let reference = stations(&src.centerline).last().copied().unwrap_or(0.0) / 2.0;
        let path = match to {
            None => src.centerline.clone(),
            Some(j) => {
                let dst = self.lane(group, j).expect("lane exists");
                Self::lane_change(&src.centerline, &dst.centerline, reference, 15.0)
            }
        };
        Ok(Plan { lane: src.id, maneuver, path, reference })
    }

    fn plan_merge(&mut self, vehicle: usize, pos: InitialPosition, actions: &[Action]) -> Result<Plan, SceneError> {
        let outer = self.num_lanes - 1;
        let lanes = self.lanes;
        let main = |i: u32| {
            lanes
                .iter()
                .find(|l| l.id == LaneId { group: LaneGroup::MainRoad, index: i })
                .expect("main lane exists")
        };
        let turn = Self::turn(actions);
        match pos {
            InitialPosition::MainRoad => {
                let src = main(outer);
                let reference = stations(&src.centerline).last().copied().unwrap_or(0.0) / 2.0;
                let (path, maneuver) = match turn {
                    Some(Action::TurnLeft) if outer > 0 => (
                        Self::lane_change(&src.centerline, &main(outer - 1).centerline, reference, 15.0),
                        Maneuver::LaneChangeLeft,
                    ),
                    None => (src.centerline.clone(), Maneuver::Straight),
                    Some(a) => {
                        self.warnings.push(format!(
                            "vehicle {}: no lane for '{a}' on the main road; driving straight",
                            vehicle + 1
                        ));
                        (src.centerline.clone(), Maneuver::Straight)
                    }
                };
                Ok(Plan { lane: src.id, maneuver, path, reference })
            }
            InitialPosition::OnRamp => {
                if turn == Some(Action::TurnRight) {
                    self.warnings.push(format!(
                        "vehicle {}: 'Turn right' from the on-ramp is read as merging",
                        vehicle + 1
                    ));
                }
                let ramp = self.lane(LaneGroup::OnRamp, 0).expect("ramp exists");
                let mut path = ramp.centerline.clone();
                let reference = stations(&path).last().copied().unwrap_or(0.0);
                let tail: Vec<Vec2> = main(outer)
                    .centerline
                    .iter()
                    .copied()
                    .filter(|p| p.x >= 0.0)
                    .collect();
                chain(&mut path, &tail);
                Ok(Plan { lane: ramp.id, maneuver: Maneuver::Merge, path, reference })
            }
            _ => Err(SceneError::NoApproach { vehicle, position: pos }),
        }
    }
}

/// Cruise speed capped on arcs and smoothed so deceleration stays within `comfort_decel`.
fn speed_profile(path: &[Vec2], cruise: f64, gp: &GeometryParams) -> Vec<f64> {
    let n = path.len();
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let r = if i == 0 || i + 1 == n {
                f64::INFINITY
            } else {
                circumradius(path[i - 1], path[i], path[i + 1])
            };
            cruise.min((gp.max_lateral_accel * r).sqrt())
        })
        .collect();
    for i in (0..n.saturating_sub(1)).rev() {
        let ds = path[i].dist(path[i + 1]);
        v[i] = v[i].min((v[i + 1] * v[i + 1] + 2.0 * gp.comfort_decel * ds).sqrt());
    }
    v
}

/// Station from which reaching `reference` takes `lead_time` along the profile.
fn start_station(st: &[f64], v: &[f64], reference: f64, lead_time: f64) -> f64 {
    let last = st.len() - 1;
    let mut s = reference.clamp(0.0, st[last]);
    let mut k = st.partition_point(|&x| x < s).saturating_sub(1).min(last.saturating_sub(1));
    let mut t = 0.0;
    loop {
        let speed = (0.5 * (v[k] + v[k + 1])).max(0.1);
        let dt = (s - st[k]) / speed;
        if t + dt >= lead_time {
            return s - (lead_time - t) * speed;
        }
        t += dt;
        s = st[k];
        if k == 0 {
            return 0.0;
        }
        k -= 1;
    }
}

/// Truncates the path at station `s0`, returning the route and initial pose.
fn route_from(path: &[Vec2], v: &[f64], st: &[f64], s0: f64) -> (Route, Pose, f64) {
    let (p0, seg) = point_at(path, st, s0);
    let seg_len = st[seg + 1] - st[seg];
    let t = if seg_len > 0.0 { (s0 - st[seg]) / seg_len } else { 0.0 };
    let v0 = v[seg] + (v[seg + 1] - v[seg]) * t;
    let mut waypoints = vec![Waypoint { x: p0.x, y: p0.y, speed: v0 }];
    for i in seg + 1..path.len() {
        if path[i].dist(p0) > 1e-6 && st[i] > s0 {
            waypoints.push(Waypoint { x: path[i].x, y: path[i].y, speed: v[i] });
        }
    }
    let heading = (path[seg + 1] - path[seg]).angle();
    (Route { waypoints }, Pose { x: p0.x, y: p0.y, heading }, v0)
}

fn rotate_lane(l: &Lane, theta: f64) -> Lane {
    let centerline: Vec<Vec2> = l.centerline.iter().map(|p| p.rotate(theta)).collect();
    let group = match l.id.group {
        LaneGroup::Through(Dir::East) => LaneGroup::Through(Dir::North),
        LaneGroup::Through(Dir::West) => LaneGroup::Through(Dir::South),
        g => g,
    };
    Lane {
        id: LaneId { group, index: l.id.index },
        headings: headings(&centerline),
        centerline,
        width: l.width,
    }
}

/// Compiles `s` into a scene. Deterministic in its inputs.
pub fn compile(s: &Scenario, gp: &GeometryParams, case_id: Option<&str>) -> Result<CompiledScene, SceneError> {
    let issues = validate(s);
    if !issues.is_empty() {
        return Err(SceneError::Invalid(issues));
    }
    let rn = &s.road_network;
    let lanes = build_road(rn, gp)?;
    let mut ctx = Ctx {
        road_type: rn.road_type,
        num_lanes: rn.num_lanes,
        lanes: &lanes,
        sides: arms(rn),
        warnings: Vec::new(),
    };
    let plans = s
        .actors
        .iter()
        .enumerate()
        .map(|(i, a)| ctx.plan(i, a.initial_position, &a.actions))
        .collect::<Result<Vec<_>, _>>()?;
    let mut warnings = std::mem::take(&mut ctx.warnings);

    // North-south only traffic on a straight road runs the road north-south.
    let rotate = rn.road_type == RoadType::Straight
        && s.actors.iter().all(|a| {
            matches!(a.initial_position, InitialPosition::S2N | InitialPosition::N2S)
        });
    let theta = if rotate { FRAC_PI_2 } else { 0.0 };
    if matches!(rn.road_type, RoadType::Straight | RoadType::Curve) && !rotate {
        let mixed = s.actors.iter().any(|a| {
            matches!(a.initial_position, InitialPosition::S2N | InitialPosition::N2S)
        });
        if mixed {
            warnings.push(
                "north-south positions on an east-west road are placed on the east-/westbound carriageways"
                    .into(),
            );
        }
    }

    let mut actors: Vec<ActorInit> = Vec::with_capacity(plans.len());
    for (i, (actor, plan)) in s.actors.iter().zip(&plans).enumerate() {
        let path: Vec<Vec2> = plan.path.iter().map(|p| p.rotate(theta)).collect();
        let st = stations(&path);
        let cruise = actor.speed_limit * MPH_TO_MS * gp.initial_speed_factor;
        let v = speed_profile(&path, cruise, gp);
        let base = start_station(&st, &v, plan.reference, gp.lead_time);
        let slot = plans[..i].iter().filter(|p| p.lane == plan.lane).count();
        let footprint = Footprint::of(actor.model);
        let mut extra = slot as f64 * gp.slot_spacing;
        let mut placed = None;
        for _ in 0..=8 {
            let s0 = (base - extra).max(0.0);
            let (route, pose, v0) = route_from(&path, &v, &st, s0);
            let clash = actors
                .iter()
                .position(|o| o.footprint.at(&o.pose).overlaps(&footprint.at(&pose)));
            match clash {
                None => {
                    placed = Some((route, pose, v0));
                    break;
                }
                Some(other) if s0 <= 0.0 => {
                    return Err(SceneError::InitialOverlap { vehicle: i + 1, other: other + 1 })
                }
                Some(_) => extra += gp.slot_spacing,
            }
        }
        let (route, pose, initial_speed) = placed.ok_or(SceneError::InitialOverlap {
            vehicle: i + 1,
            other: 0,
        })?;
        let lane = if rotate {
            rotate_lane(
                lanes.iter().find(|l| l.id == plan.lane).expect("planned lane exists"),
                theta,
            )
            .id
        } else {
            plan.lane
        };
        actors.push(ActorInit {
            model: actor.model,
            position: actor.initial_position,
            lane,
            maneuver: plan.maneuver,
            pose,
            initial_speed,
            route,
            footprint,
        });
    }
    let lanes = if rotate {
        lanes.iter().map(|l| rotate_lane(l, theta)).collect()
    } else {
        lanes
    };
    Ok(CompiledScene {
        case_id: case_id.map(str::to_string),
        road_type: rn.road_type,
        num_lanes: rn.num_lanes,
        params: *gp,
        lanes,
        actors,
        env: s.env,
        warnings,
    })
}

#[cfg(test)]
mod tests;
