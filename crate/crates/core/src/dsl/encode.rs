//! Regular-expression encoder from free-form model replies to scenarios.
//!
//! Accepts the canonical block layout as well as markdown bullet lists
//! (`- **Model**: Sedan`, `Vehicle 1 (V1):`). Matching ignores case and
//! markdown emphasis. When a field is stated more than once the last
//! mappable statement wins.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use super::text::is_not_applicable;
use super::{
    squash, validate, Action, DslEnum, Actor, Cardinal, Environment, InitialPosition, RoadNetwork,
    RoadType, Scenario, TimeOfDay, ValidationIssue, VehicleModel, Weather,
};

#[derive(Debug, Error, PartialEq)]
pub enum EncodeError {
    #[error("response does not state {field}")]
    MissingField { field: String },
    #[error("cannot map {field}; found {found:?}")]
    Unmappable { field: String, found: Vec<String> },
    #[error("encoded scenario is invalid: {0:?}")]
    Invalid(Vec<ValidationIssue>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Field {
    RoadType,
    Lanes,
    Stem,
    Model,
    Position,
    Actions,
    Speed,
    Time,
    Weather,
}

impl Field {
    fn from_key(key: &str) -> Option<Self> {
        Some(match squash(key).as_str() {
            "roadtype" | "typeofroad" => Self::RoadType,
            "no.lanes" | "nolanes" | "no.oflanes" | "numberoflanes" | "lanes" | "lanecount"
            | "numlanes" => Self::Lanes,
            "stemdirection" | "stemroaddirection" | "stem" => Self::Stem,
            "model" | "vehiclemodel" | "vehicletype" | "type" => Self::Model,
            "initialposition" | "position" | "startingposition" | "direction"
            | "drivingdirection" => Self::Position,
            "actions" | "action" | "behavior" | "behaviour" => Self::Actions,
            "speedlimit" | "speed" => Self::Speed,
            "time" | "timeofday" => Self::Time,
            "weather" | "weathercondition" => Self::Weather,
            _ => return None,
        })
    }

    fn per_vehicle(self) -> bool {
        matches!(self, Self::Model | Self::Position | Self::Actions | Self::Speed)
    }

    fn label(self) -> &'static str {
        match self {
            Self::RoadType => "RoadType",
            Self::Lanes => "NumLanes",
            Self::Stem => "StemDirection",
            Self::Model => "Model",
            Self::Position => "Initial_position",
            Self::Actions => "Actions",
            Self::Speed => "Speed_limit",
            Self::Time => "Time",
            Self::Weather => "Weather",
        }
    }
}

static MARKUP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\*\*|__|`").unwrap());
static LIST_PREFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:#+\s*|[-*+•]\s+|\d+[.)]\s+)+").unwrap());
static VEHICLE_HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(?:<\s*vehicle[\s_]*(\d+)\s*>|vehicle[\s_]*(\d+)|v(\d+))\s*(?:\(\s*v\d+\s*\))?\s*(?::|$)")
        .unwrap()
});
static KEY_VALUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^<?\s*([A-Za-z][A-Za-z0-9 ._/\-]*?)\s*>?\s*:\s*(.*)$").unwrap());

static ROAD_TYPE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bt[\s-]?(?:intersection|junction)\b|\bthree[\s-]way\b|\bintersection\b|\bcurve[sd]?\b|\bstraight\b|\bmerg(?:e|ing)\b")
        .unwrap()
});
static COUNT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(\d+|one|two|three|four|five|six|seven|eight)\b").unwrap()
});
static CARDINAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(north|south|east|west)").unwrap());
static MODEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bsemi[\s-]?(?:truck|trailer)?\b|\btractor[\s-]trailer\b|\bsuv\b|\bsport[\s-]utility\b|\bmini[\s-]?van\b|\bpick[\s-]?up\b|\bsedan\b")
        .unwrap()
});
static POSITION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:w2e|e2w|s2n|n2s)\b|\bmain[\s-]?road\b|\bon[\s-]?ramp\b").unwrap()
});
static ACTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bmov(?:e|es|ing)\s+forward\b|\bgo(?:es|ing)?\s+straight\b|\bstraight\b|\bforward\b|\bturn(?:s|ed|ing)?\s+left\b|\bleft[\s-]turn(?:ing|s)?\b|\bturn(?:s|ed|ing)?\s+right\b|\bright[\s-]turn(?:ing|s)?\b")
        .unwrap()
});
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:\.\d+)?").unwrap());
static TIME: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:night[\s-]?time|night|dark(?:ness)?|day[\s-]?time|daylight|day)\b")
        .unwrap()
});
static WEATHER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:sunny|sun|cloudy|clouds?|overcast|rainy|rain(?:ing)?|snowy|snow(?:ing)?|foggy|fog|windy|wind|clear)\b")
        .unwrap()
});

/// Raw statements seen for one field, oldest first.
type Statements = Vec<String>;

#[derive(Default)]
struct Collected {
    global: BTreeMap<Field, Statements>,
    vehicles: BTreeMap<usize, BTreeMap<Field, Statements>>,
}

fn normalize(line: &str) -> String {
    let stripped = MARKUP.replace_all(line.trim(), "");
    LIST_PREFIX.replace(stripped.trim(), "").trim().to_string()
}

fn collect(text: &str) -> Collected {
    let mut out = Collected::default();
    let mut vehicle = 1usize;
    for raw in text.lines() {
        let line = normalize(raw);
        if line.is_empty() {
            continue;
        }
        if let Some(caps) = VEHICLE_HEADER.captures(&line) {
            let n = caps
                .iter()
                .skip(1)
                .flatten()
                .next()
                .and_then(|m| m.as_str().parse::<usize>().ok());
            if let Some(n) = n.filter(|n| *n >= 1) {
                vehicle = n;
                continue;
            }
        }
        let Some(caps) = KEY_VALUE.captures(&line) else {
            continue;
        };
        let Some(field) = Field::from_key(&caps[1]) else {
            continue;
        };
        let value = caps[2].trim().trim_matches(['"', '\'']).trim();
        if value.is_empty() {
            continue;
        }
        let slot = if field.per_vehicle() {
            out.vehicles.entry(vehicle).or_default()
        } else {
            &mut out.global
        };
        slot.entry(field).or_default().push(value.to_string());
    }
    out
}

/// Applies `map` to statements from newest to oldest and keeps the first hit.
fn last_mapped<T>(
    field: &str,
    found: Option<&Statements>,
    map: impl Fn(&str) -> Option<T>,
) -> Result<T, EncodeError> {
    let found = found.filter(|f| !f.is_empty()).ok_or_else(|| EncodeError::MissingField {
        field: field.to_string(),
    })?;
    found
        .iter()
        .rev()
        .find_map(|s| map(s))
        .ok_or_else(|| EncodeError::Unmappable {
            field: field.to_string(),
            found: found.clone(),
        })
}

pub(crate) fn map_road_type(s: &str) -> Option<RoadType> {
    let m = squash(ROAD_TYPE.find(s)?.as_str());
    Some(if m.starts_with("three") || (m.starts_with('t') && m != "intersection") {
        RoadType::TIntersection
    } else if m == "intersection" {
        RoadType::Intersection
    } else if m.starts_with("curve") {
        RoadType::Curve
    } else if m == "straight" {
        RoadType::Straight
    } else {
        RoadType::Merging
    })
}

pub(crate) fn map_count(s: &str) -> Option<u32> {
    let m = COUNT.find(s)?.as_str().to_lowercase();
    m.parse().ok().or(match m.as_str() {
        "one" => Some(1),
        "two" => Some(2),
        "three" => Some(3),
        "four" => Some(4),
        "five" => Some(5),
        "six" => Some(6),
        "seven" => Some(7),
        "eight" => Some(8),
        _ => None,
    })
}

fn map_stem(s: &str) -> Option<Option<Cardinal>> {
    let lower = s.to_lowercase();
    if is_not_applicable(s) || lower.contains("not applicable") || lower.contains("n/a") {
        return Some(None);
    }
    let m = CARDINAL.find(s)?.as_str().to_lowercase();
    Some(Some(match m.as_str() {
        "north" => Cardinal::North,
        "south" => Cardinal::South,
        "east" => Cardinal::East,
        _ => Cardinal::West,
    }))
}

fn map_model(s: &str) -> Option<VehicleModel> {
    let m = squash(MODEL.find(s)?.as_str());
    Some(if m.starts_with("semi") || m.starts_with("tractor") {
        VehicleModel::SemiTruck
    } else if m == "suv" || m.starts_with("sport") {
        VehicleModel::Suv
    } else if m.starts_with("mini") {
        VehicleModel::Minivan
    } else if m.starts_with("pick") {
        VehicleModel::Pickup
    } else {
        VehicleModel::Sedan
    })
}

pub(crate) fn map_position(s: &str) -> Option<InitialPosition> {
    let m = squash(POSITION.find(s)?.as_str());
    Some(match m.as_str() {
        "w2e" => InitialPosition::W2E,
        "e2w" => InitialPosition::E2W,
        "s2n" => InitialPosition::S2N,
        "n2s" => InitialPosition::N2S,
        "mainroad" => InitialPosition::MainRoad,
        _ => InitialPosition::OnRamp,
    })
}

fn map_actions(s: &str) -> Option<Vec<Action>> {
    // A list in canonical spelling is taken as written, repeats included.
    let listed: Option<Vec<Action>> = s.split(',').map(|item| Action::from_dsl(item.trim())).collect();
    if let Some(actions) = listed.filter(|a| !a.is_empty()) {
        return Some(actions);
    }
    // Free prose tends to restate the same manoeuvre, so adjacent repeats collapse.
    let mut actions: Vec<Action> = Vec::new();
    for m in ACTION.find_iter(s) {
        let t = m.as_str().to_lowercase();
        let a = if t.contains("left") {
            Action::TurnLeft
        } else if t.contains("right") {
            Action::TurnRight
        } else {
            Action::MoveForward
        };
        if actions.last() != Some(&a) {
            actions.push(a);
        }
    }
    (!actions.is_empty()).then_some(actions)
}

fn map_speed(s: &str) -> Option<f64> {
    NUMBER
        .find(s)?
        .as_str()
        .parse::<f64>()
        .ok()
        .filter(|v| *v > 0.0)
}

fn map_time(s: &str) -> Option<TimeOfDay> {
    let m = TIME.find(s)?.as_str().to_lowercase();
    Some(if m.starts_with("night") || m.starts_with("dark") {
        TimeOfDay::Nighttime
    } else {
        TimeOfDay::Daytime
    })
}

fn map_weather(s: &str) -> Option<Weather> {
    let m = WEATHER.find(s)?.as_str().to_lowercase();
    Some(match m.as_bytes()[0] {
        b's' if m.starts_with("sn") => Weather::Snowy,
        b's' => Weather::Sunny,
        b'c' if m.starts_with("clo") => Weather::Cloudy,
        b'c' => Weather::Clear,
        b'o' => Weather::Overcast,
        b'r' => Weather::Rainy,
        b'f' => Weather::Foggy,
        _ => Weather::Windy,
    })
}

/// Maps a free-form model reply onto a validated scenario.
pub fn encode_raw_response(text: &str) -> Result<Scenario, EncodeError> {
    let c = collect(text);
    let g = |f: Field| c.global.get(&f);

    let road_type = last_mapped(Field::RoadType.label(), g(Field::RoadType), map_road_type)?;
    let num_lanes = last_mapped(Field::Lanes.label(), g(Field::Lanes), map_count)?;
    let stem_direction = if road_type == RoadType::TIntersection {
        last_mapped(Field::Stem.label(), g(Field::Stem), map_stem)?.ok_or_else(|| {
            EncodeError::Unmappable {
                field: Field::Stem.label().into(),
                found: g(Field::Stem).cloned().unwrap_or_default(),
            }
        })?
        .into()
    } else {
        None
    };

    let vehicles: Vec<_> = c.vehicles.values().collect();
    if vehicles.is_empty() {
        return Err(EncodeError::MissingField { field: "Actors".into() });
    }
    // A vehicle whose speed is not stated inherits the last stated limit of another vehicle.
    let posted = vehicles
        .iter()
        .rev()
        .filter_map(|v| v.get(&Field::Speed))
        .find_map(|found| found.iter().rev().find_map(|s| map_speed(s)));

    let mut actors = Vec::with_capacity(vehicles.len());
    for (i, v) in vehicles.iter().enumerate() {
        let label = |f: Field| format!("Actors[{i}].{}", f.label());
        let speed_limit = match last_mapped(&label(Field::Speed), v.get(&Field::Speed), map_speed) {
            Ok(s) => s,
            Err(e) => posted.ok_or(e)?,
        };
        actors.push(Actor {
            model: last_mapped(&label(Field::Model), v.get(&Field::Model), map_model)?,
            initial_position: last_mapped(
                &label(Field::Position),
                v.get(&Field::Position),
                map_position,
            )?,
            actions: last_mapped(&label(Field::Actions), v.get(&Field::Actions), map_actions)?,
            speed_limit,
        });
    }

    let env = Environment {
        time: last_mapped(Field::Time.label(), g(Field::Time), map_time)?,
        weather: last_mapped(Field::Weather.label(), g(Field::Weather), map_weather)?,
    };

    let scenario = Scenario {
        road_network: RoadNetwork {
            road_type,
            num_lanes,
            stem_direction,
        },
        actors,
        env,
    };
    let issues = validate(&scenario);
    if issues.is_empty() {
        Ok(scenario)
    } else {
        Err(EncodeError::Invalid(issues))
    }
}
