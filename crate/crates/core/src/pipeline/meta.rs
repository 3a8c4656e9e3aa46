//! Parser for the `{'Road type': ..., 'Number of cars': ..., 'Driving direction': ...}` answer.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::dsl::encode::{map_count, map_road_type};
use crate::kb::MetaMessage;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetaParseError {
    #[error("reply has no '{0}' entry")]
    Missing(&'static str),
    #[error("'{key}' value '{value}' is not recognised")]
    Unrecognised { key: &'static str, value: String },
    #[error("'Number of cars' is {cars} but {directions} driving directions were given")]
    CountMismatch { cars: u32, directions: usize },
}

fn entry_regex(key: &str) -> Regex {
    // Key in optional quotes, then a list, a quoted string or a bare token.
    Regex::new(&format!(
        r#"(?i)['"]?{key}['"]?\s*:\s*(\[[^\]]*\]|'[^']*'|"[^"]*"|[^,}}\n]+)"#
    ))
    .expect("static pattern")
}

static ROAD_TYPE: LazyLock<Regex> = LazyLock::new(|| entry_regex("road type"));
static CARS: LazyLock<Regex> = LazyLock::new(|| entry_regex(r"(?:number of cars|num_cars)"));
static DIRECTION: LazyLock<Regex> =
    LazyLock::new(|| entry_regex(r"(?:driving directions?|directions)"));
static QUOTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"'([^']*)'|"([^"]*)""#).unwrap());
static VEHICLE_PREFIX: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:vehicle\s*_?\d+|v\d+|car\s*\d+)\s*(?:\([^)]*\))?\s*[:\-]\s*").unwrap()
});

/// The last value stated for a key; answers follow any analysis text.
fn last_value(re: &Regex, text: &str) -> Option<String> {
    re.captures_iter(text)
        .last()
        .map(|c| c[1].trim().to_string())
}

fn unquote(s: &str) -> &str {
    s.trim()
        .trim_matches(|c| c == '\'' || c == '"')
        .trim()
}

fn split_directions(raw: &str) -> Vec<String> {
    let items: Vec<String> = if raw.starts_with('[') {
        QUOTED
            .captures_iter(raw)
            .map(|c| c.get(1).or(c.get(2)).map_or("", |m| m.as_str()).to_string())
            .collect()
    } else {
        unquote(raw)
            .split([',', ';'])
            .map(str::to_string)
            .collect()
    };
    items
        .iter()
        .map(|s| VEHICLE_PREFIX.replace(s.trim(), "").trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn parse_meta(text: &str) -> Result<MetaMessage, MetaParseError> {
    let road = last_value(&ROAD_TYPE, text).ok_or(MetaParseError::Missing("Road type"))?;
    let road_type = map_road_type(unquote(&road)).ok_or_else(|| MetaParseError::Unrecognised {
        key: "Road type",
        value: road.clone(),
    })?;
    let cars = last_value(&CARS, text).ok_or(MetaParseError::Missing("Number of cars"))?;
    let num_cars = map_count(unquote(&cars))
        .filter(|n| *n >= 1)
        .ok_or_else(|| MetaParseError::Unrecognised {
            key: "Number of cars",
            value: cars.clone(),
        })?;
    let raw = last_value(&DIRECTION, text).ok_or(MetaParseError::Missing("Driving direction"))?;
    let driving_directions = split_directions(&raw);
    let meta = MetaMessage {
        road_type,
        num_cars,
        driving_directions,
    };
    if !meta.is_consistent() {
        return Err(MetaParseError::CountMismatch {
            cars: num_cars,
            directions: meta.driving_directions.len(),
        });
    }
    Ok(meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::RoadType;

    #[test]
    fn parses_dict_answer() {
        let m = parse_meta(
            "Analysis ...\n{'Road type': 'Intersection', 'Number of cars': 2, 'Driving direction': 'Vehicle 1: S2N, Vehicle 2: E2W'}",
        )
        .unwrap();
        assert_eq!(m.road_type, RoadType::Intersection);
        assert_eq!(m.num_cars, 2);
        assert_eq!(m.driving_directions, ["S2N", "E2W"]);
    }

    #[test]
    fn parses_lists_and_double_quotes() {
        let m = parse_meta(
            r#"{"Road type": "T-intersection", "Number of cars": "two", "Driving direction": ["V1: W2E turning left", "V2: E2W"]}"#,
        )
        .unwrap();
        assert_eq!(m.road_type, RoadType::TIntersection);
        assert_eq!(m.driving_directions, ["W2E turning left", "E2W"]);
    }

    #[test]
    fn last_answer_wins() {
        let m = parse_meta(
            "Example: {'Road type': 'Curve', 'Number of cars': 1, 'Driving direction': 'W2E'}\nAnswer: {'Road type': 'Merging', 'Number of cars': 1, 'Driving direction': 'On-ramp'}",
        )
        .unwrap();
        assert_eq!(m.road_type, RoadType::Merging);
        assert_eq!(m.driving_directions, ["On-ramp"]);
    }

    #[test]
    fn missing_and_inconsistent_fields() {
        assert_eq!(
            parse_meta("{'Road type': 'Straight', 'Driving direction': 'W2E'}"),
            Err(MetaParseError::Missing("Number of cars"))
        );
        assert_eq!(
            parse_meta("{'Road type': 'Straight', 'Number of cars': 3, 'Driving direction': 'W2E, E2W'}"),
            Err(MetaParseError::CountMismatch { cars: 3, directions: 2 })
        );
        assert!(matches!(
            parse_meta("{'Road type': 'Roundabout', 'Number of cars': 1, 'Driving direction': 'W2E'}"),
            Err(MetaParseError::Unrecognised { key: "Road type", .. })
        ));
    }
}
