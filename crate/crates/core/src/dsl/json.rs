//! Key-tree mirror of the `.scenario` layout for machine consumers.
//!
//! Keys are the DSL keys with spaces replaced by underscores (`Road_type`,
//! `No._lanes`, `Vehicle_1`, ...). Values use the canonical DSL spellings.

use serde_json::{json, Map, Value};
use thiserror::Error;

use super::text::is_not_applicable;
use super::{
    format_speed, validate, Action, Actor, Cardinal, DslEnum, Environment, InitialPosition,
    RoadNetwork, RoadType, Scenario, TimeOfDay, ValidationIssue, VehicleModel, Weather,
    NOT_APPLICABLE,
};

#[derive(Debug, Error, PartialEq)]
pub enum JsonError {
    #[error("missing or malformed field {0}")]
    Field(String),
    #[error("{path}: '{value}' is not a recognised value")]
    Value { path: String, value: String },
    #[error("scenario is invalid: {0:?}")]
    Invalid(Vec<ValidationIssue>),
}

pub fn scenario_to_json(s: &Scenario) -> Value {
    let rn = &s.road_network;
    let mut actors = Map::new();
    for (i, a) in s.actors.iter().enumerate() {
        let speed: Value = format_speed(a.speed_limit)
            .parse::<serde_json::Number>()
            .map(Value::Number)
            .unwrap_or(Value::Null);
        actors.insert(
            format!("Vehicle_{}", i + 1),
            json!({
                "Model": a.model.canonical(),
                "Initial_position": a.initial_position.canonical(),
                "Actions": a.actions.iter().map(|x| x.canonical()).collect::<Vec<_>>(),
                "Speed_limit": speed,
            }),
        );
    }
    json!({
        "Scenario": {
            "Road_network": {
                "Road_type": rn.road_type.canonical(),
                "No._lanes": rn.num_lanes,
                "Stem_direction": rn.stem_direction.map_or(NOT_APPLICABLE, Cardinal::canonical),
            },
            "Actors": actors,
            "Env": {
                "Time": s.env.time.canonical(),
                "Weather": s.env.weather.canonical(),
            }
        }
    })
}

fn field<'a>(v: &'a Value, path: &str, key: &str) -> Result<&'a Value, JsonError> {
    v.get(key)
        .ok_or_else(|| JsonError::Field(format!("{path}.{key}")))
}

fn enum_field<E: DslEnum>(v: &Value, path: &str, key: &str) -> Result<E, JsonError> {
    let raw = field(v, path, key)?
        .as_str()
        .ok_or_else(|| JsonError::Field(format!("{path}.{key}")))?;
    E::from_dsl(raw).ok_or_else(|| JsonError::Value {
        path: format!("{path}.{key}"),
        value: raw.to_string(),
    })
}

pub fn scenario_from_json(v: &Value) -> Result<Scenario, JsonError> {
    let root = field(v, "", "Scenario")?;
    let rn = field(root, "Scenario", "Road_network")?;
    let lanes = field(rn, "Road_network", "No._lanes")?
        .as_u64()
        .and_then(|n| u32::try_from(n).ok())
        .ok_or_else(|| JsonError::Field("Road_network.No._lanes".into()))?;
    let stem_raw = field(rn, "Road_network", "Stem_direction")?;
    let stem_direction = match stem_raw.as_str() {
        None => None,
        Some(s) if is_not_applicable(s) => None,
        Some(_) => Some(enum_field::<Cardinal>(rn, "Road_network", "Stem_direction")?),
    };
    let road_network = RoadNetwork {
        road_type: enum_field::<RoadType>(rn, "Road_network", "Road_type")?,
        num_lanes: lanes,
        stem_direction,
    };

    let actors_obj = field(root, "Scenario", "Actors")?
        .as_object()
        .ok_or_else(|| JsonError::Field("Scenario.Actors".into()))?;
    let mut actors = Vec::with_capacity(actors_obj.len());
    for i in 1..=actors_obj.len() {
        let key = format!("Vehicle_{i}");
        let a = actors_obj
            .get(&key)
            .ok_or_else(|| JsonError::Field(format!("Actors.{key}")))?;
        let path = format!("Actors.{key}");
        let actions = field(a, &path, "Actions")?
            .as_array()
            .ok_or_else(|| JsonError::Field(format!("{path}.Actions")))?
            .iter()
            .map(|x| {
                x.as_str().and_then(Action::from_dsl).ok_or_else(|| JsonError::Value {
                    path: format!("{path}.Actions"),
                    value: x.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        actors.push(Actor {
            model: enum_field::<VehicleModel>(a, &path, "Model")?,
            initial_position: enum_field::<InitialPosition>(a, &path, "Initial_position")?,
            actions,
            speed_limit: field(a, &path, "Speed_limit")?
                .as_f64()
                .ok_or_else(|| JsonError::Field(format!("{path}.Speed_limit")))?,
        });
    }

    let env = field(root, "Scenario", "Env")?;
    let scenario = Scenario {
        road_network,
        actors,
        env: Environment {
            time: enum_field::<TimeOfDay>(env, "Env", "Time")?,
            weather: enum_field::<Weather>(env, "Env", "Weather")?,
        },
    };
    let issues = validate(&scenario);
    if issues.is_empty() {
        Ok(scenario)
    } else {
        Err(JsonError::Invalid(issues))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::testutil::night_crossing;

    #[test]
    fn mirror_keys_and_round_trip() {
        let s = night_crossing();
        let v = scenario_to_json(&s);
        assert_eq!(v["Scenario"]["Road_network"]["No._lanes"], 3);
        assert_eq!(v["Scenario"]["Road_network"]["Stem_direction"], "Not applicable");
        assert_eq!(v["Scenario"]["Actors"]["Vehicle_2"]["Model"], "SUV");
        assert_eq!(v["Scenario"]["Actors"]["Vehicle_1"]["Speed_limit"], 45);
        assert_eq!(scenario_from_json(&v).unwrap(), s);
    }

    #[test]
    fn rejects_bad_enum() {
        let mut v = scenario_to_json(&night_crossing());
        v["Scenario"]["Env"]["Weather"] = "Hail".into();
        assert_eq!(
            scenario_from_json(&v).unwrap_err(),
            JsonError::Value { path: "Env.Weather".into(), value: "Hail".into() }
        );
    }
}
