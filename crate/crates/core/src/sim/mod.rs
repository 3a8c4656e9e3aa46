//! Fixed-timestep 2D simulation of a compiled scene.
//!
//! The ego follows its route with pure pursuit and IDM; every other actor
//! replays its route at the compiled speeds. A run ends at the first
//! collision, when every route is complete, or after `max_steps`.

mod plot;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{point_at, stations, wrap_angle, Obb, Vec2};
use crate::scene::{CompiledScene, Footprint, Pose, Route};

pub use plot::render_trace_png;

/// Hard bound on braking, m/s².
pub const MAX_DECEL: f64 = 8.0;
/// Full width of the corridor around the ego route in which a leader is looked for.
pub const LEADER_CORRIDOR: f64 = 3.0;
/// Actors whose heading differs from the route by more than this are crossing, not leading.
const LEADER_MAX_HEADING: f64 = std::f64::consts::FRAC_PI_3;
/// Distance short of the route end that counts as complete.
const END_TOLERANCE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("ego index {ego} out of range for {actors} actors")]
    EgoOutOfRange { ego: usize, actors: usize },
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("non-finite state for actor {actor} at step {step}")]
    NonFinite { actor: usize, step: usize },
    #[error("non-finite IDM input")]
    IdmInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    pub a_max: f64,
    pub b_comf: f64,
    pub s0: f64,
    pub t_headway: f64,
    pub delta: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self { a_max: 1.5, b_comf: 2.0, s0: 2.0, t_headway: 1.5, delta: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub max_steps: usize,
    /// Recorded for provenance; the dynamics have no stochastic element.
    pub seed: u64,
    pub idm: IdmParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 0.05, max_steps: 1200, seed: 0, idm: IdmParams::default() }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(SimError::Config(format!("dt {} is outside (0, 0.1]", self.dt)));
        }
        if self.max_steps == 0 {
            return Err(SimError::Config("max_steps must be positive".into()));
        }
        let p = &self.idm;
        if ![p.a_max, p.b_comf, p.s0, p.t_headway, p.delta]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
        {
            return Err(SimError::Config("IDM parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Intelligent driver model acceleration, clamped to `[-MAX_DECEL, a_max]`.
/// `gap = None` means free road.
pub fn idm_accel(
    speed: f64,
    desired_speed: f64,
    gap: Option<f64>,
    lead_speed: f64,
    p: &IdmParams,
) -> Result<f64, SimError> {
    let finite = speed.is_finite()
        && desired_speed.is_finite()
        && lead_speed.is_finite()
        && gap.is_none_or(f64::is_finite);
    if !finite || speed < 0.0 || desired_speed <= 0.0 || gap.is_some_and(|g| g <= 0.0) {
        return Err(SimError::IdmInput);
    }
    let free = 1.0 - (speed / desired_speed).powf(p.delta);
    let interaction = match gap {
        None => 0.0,
        Some(s) => {
            let dv = speed - lead_speed;
            let s_star = p.s0 + speed * p.t_headway + speed * dv / (2.0 * (p.a_max * p.b_comf).sqrt());
            (s_star / s).powi(2)
        }
    };
    Ok((p.a_max * (free - interaction)).clamp(-MAX_DECEL, p.a_max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    /// Arc length along the actor's route.
    pub progress: f64,
}

impl VehicleState {
    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn obb(&self, f: &Footprint) -> Obb {
        f.at(&Pose { x: self.x, y: self.y, heading: self.heading })
    }
}

/// Colliding pairs `(i, j)` with `i < j` among present actors.
pub fn detect_collision(states: &[Option<VehicleState>], footprints: &[Footprint]) -> Vec<(usize, usize)> {
    let boxes: Vec<Option<Obb>> = states
        .iter()
        .zip(footprints)
        .map(|(s, f)| s.as_ref().map(|s| s.obb(f)))
        .collect();
    let mut out = Vec::new();
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            if let (Some(a), Some(b)) = (&boxes[i], &boxes[j]) {
                if a.overlaps(b) {
                    out.push((i, j));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Collision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub kind: ViolationKind,
    pub step: usize,
    /// Actor indices, smaller first.
    pub actors: (usize, usize),
    pub poses: [VehicleState; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Collision,
    RouteComplete,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: Option<String>,
    pub ego: usize,
    pub dt: f64,
    pub seed: u64,
    pub termination: Termination,
    pub violations: Vec<ViolationRecord>,
    /// `steps[k][i]` is actor `i` after step `k`; `None` once its route is complete.
    /// Row 0 is the initial state.
    pub steps: Vec<Vec<Option<VehicleState>>>,
    /// Excluded from serialized traces so that files stay reproducible.
    #[serde(skip)]
    pub wall_ms: f64,
}

impl Trace {
    pub fn collided(&self) -> bool {
        self.termination == Termination::Collision
    }

    /// Step table, one line per present actor per step.
    pub fn step_table(&self) -> String {
        let mut out = String::from("step\tt\tactor\tx\ty\theading\tspeed\tprogress\n");
        for (k, row) in self.steps.iter().enumerate() {
            for (i, s) in row.iter().enumerate() {
                if let Some(s) = s {
                    out.push_str(&format!(
                        "{k}\t{:.2}\t{}\t{:.3}\t{:.3}\t{:.4}\t{:.3}\t{:.3}\n",
                        k as f64 * self.dt,
                        i + 1,
                        s.x,
                        s.y,
                        s.heading,
                        s.speed,
                        s.progress
                    ));
                }
            }
        }
        out
    }
}

/// Route polyline with stations and per-vertex speeds.
struct Track {
    points: Vec<Vec2>,
    st: Vec<f64>,
    speed: Vec<f64>,
}

impl Track {
    fn new(route: &Route) -> Self {
        let points = route.points();
        Self {
            st: stations(&points),
            speed: route.waypoints.iter().map(|w| w.speed).collect(),
            points,
        }
    }

    fn length(&self) -> f64 {
        *self.st.last().expect("route has points")
    }

    fn speed_at(&self, s: f64) -> f64 {
        if self.points.len() == 1 {
            return self.speed[0];
        }
        let (_, i) = point_at(&self.points, &self.st, s);
        let seg = self.st[i + 1] - self.st[i];
        let t = if seg > 0.0 { ((s - self.st[i]) / seg).clamp(0.0, 1.0) } else { 0.0 };
        self.speed[i] + (self.speed[i + 1] - self.speed[i]) * t
    }

    fn pose_at(&self, s: f64) -> (Vec2, f64) {
        if self.points.len() == 1 {
            return (self.points[0], 0.0);
        }
        let (p, i) = point_at(&self.points, &self.st, s);
        (p, (self.points[i + 1] - self.points[i]).angle())
    }

    /// Nearest projection onto the route within `[from, from + window]`:
    /// (station, signed lateral offset, route heading there).
    fn project(&self, p: Vec2, from: f64, window: f64) -> Option<(f64, f64, f64)> {
        let mut best: Option<(f64, f64, f64, f64)> = None;
        for i in 0..self.points.len().saturating_sub(1) {
            if self.st[i + 1] < from || self.st[i] > from + window {
                continue;
            }
            let (a, b) = (self.points[i], self.points[i + 1]);
            let d = b - a;
            let len = d.norm();
            if len == 0.0 {
                continue;
            }
            let u = d * (1.0 / len);
            let t = (p - a).dot(u).clamp(0.0, len);
            let q = a + u * t;
            let dist = p.dist(q);
            if best.is_none_or(|b| dist < b.0) {
                best = Some((dist, self.st[i] + t, u.cross(p - a), d.angle()));
            }
        }
        best.map(|(_, s, lat, h)| (s, lat, h))
    }
}

/// Pure-pursuit lookahead: max(MIN_LOOKAHEAD, LOOKAHEAD_TIME * speed).
const MIN_LOOKAHEAD: f64 = 5.0;
const LOOKAHEAD_TIME: f64 = 1.0;

/// Runs one ego assignment.
pub fn run(scene: &CompiledScene, ego: usize, cfg: &SimConfig) -> Result<Trace, SimError> {
    let started = std::time::Instant::now();
    cfg.check()?;
    let n = scene.actors.len();
    if ego >= n {
        return Err(SimError::EgoOutOfRange { ego, actors: n });
    }
    let tracks: Vec<Track> = scene.actors.iter().map(|a| Track::new(&a.route)).collect();
    let footprints: Vec<Footprint> = scene.actors.iter().map(|a| a.footprint).collect();
    let mut states: Vec<Option<VehicleState>> = scene
        .actors
        .iter()
        .map(|a| {
            Some(VehicleState {
                x: a.pose.x,
                y: a.pose.y,
                heading: a.pose.heading,
                speed: a.initial_speed,
                progress: 0.0,
            })
        })
        .collect();
    let mut steps = vec![states.clone()];
    let mut violations = Vec::new();
    let mut termination = Termination::Timeout;

    for step in 1..=cfg.max_steps {
        let mut next = states.clone();
        for i in 0..n {
            let Some(s) = states[i] else { continue };
            let track = &tracks[i];
            let updated = if i == ego {
                ego_step(s, i, track, &states, &footprints, cfg)?
            } else {
                let progress = s.progress + s.speed * cfg.dt;
                let (p, heading) = track.pose_at(progress);
                VehicleState {
                    x: p.x,
                    y: p.y,
                    heading,
                    speed: track.speed_at(progress),
                    progress,
                }
            };
            if !(updated.pos().is_finite() && updated.heading.is_finite() && updated.speed.is_finite()) {
                return Err(SimError::NonFinite { actor: i, step });
            }
            next[i] = if updated.progress >= track.length() - END_TOLERANCE {
                None
            } else {
                Some(updated)
            };
        }
        states = next;
        let hits = detect_collision(&states, &footprints);
        steps.push(states.clone());
        if let Some(&(i, j)) = hits.first() {
            violations.push(ViolationRecord {
                kind: ViolationKind::Collision,
                step,
                actors: (i, j),
                poses: [states[i].expect("present"), states[j].expect("present")],
            });
            termination = Termination::Collision;
            break;
        }
        if states.iter().all(Option::is_none) {
            termination = Termination::RouteComplete;
            break;
        }
    }
    Ok(Trace {
        case_id: scene.case_id.clone(),
        ego,
        dt: cfg.dt,
        seed: cfg.seed,
        termination,
        violations,
        steps,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

fn ego_step(
    s: VehicleState,
    me: usize,
    track: &Track,
    states: &[Option<VehicleState>],
    footprints: &[Footprint],
    cfg: &SimConfig,
) -> Result<VehicleState, SimError> {
    let desired = track.speed_at(s.progress).max(0.1);
    // Leader: nearest actor ahead whose center lies in the corridor and travels along the route.
    let horizon = 150.0;
    let mut leader: Option<(f64, f64)> = None;
    for (j, other) in states.iter().enumerate() {
        let Some(o) = other else { continue };
        if j == me {
            continue;
        }
        let Some((so, lat, h)) = track.project(o.pos(), s.progress, horizon) else { continue };
        if so <= s.progress || lat.abs() > LEADER_CORRIDOR / 2.0 {
            continue;
        }
        if wrap_angle(o.heading - h).abs() > LEADER_MAX_HEADING {
            continue;
        }
        let gap = so - s.progress - (footprints[me].length + footprints[j].length) / 2.0;
        if leader.is_none_or(|(g, _)| gap < g) {
            leader = Some((gap, o.speed));
        }
    }
    let accel = match leader {
        None => idm_accel(s.speed, desired, None, 0.0, &cfg.idm)?,
        Some((gap, v_lead)) => idm_accel(s.speed, desired, Some(gap.max(0.01)), v_lead, &cfg.idm)?,
    };
    let speed = (s.speed + accel * cfg.dt).max(0.0);

    // Pure pursuit toward a point one lookahead distance further along the route.
    let ld = MIN_LOOKAHEAD.max(LOOKAHEAD_TIME * s.speed);
    let (target, _) = track.pose_at(s.progress + ld);
    let to = target - s.pos();
    let curvature = if to.norm() > 1e-6 {
        let alpha = wrap_angle(to.angle() - s.heading);
        2.0 * alpha.sin() / to.norm()
    } else {
        0.0
    };
    let heading = wrap_angle(s.heading + speed * curvature * cfg.dt);
    let p = s.pos() + Vec2::from_angle(heading) * (speed * cfg.dt);
    // Progress follows the projection but never moves backwards.
    let progress = track
        .project(p, s.progress - 1.0, ld + 10.0)
        .map_or(s.progress, |(sp, _, _)| sp.max(s.progress));
    Ok(VehicleState { x: p.x, y: p.y, heading, speed, progress })
}

/// One trace per actor, each actor taking the ego role in declaration order.
pub fn run_all_egos(scene: &CompiledScene, cfg: &SimConfig) -> Result<Vec<Trace>, SimError> {
    (0..scene.actors.len()).map(|ego| run(scene, ego, cfg)).collect()
}
