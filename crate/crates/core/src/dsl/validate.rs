use std::fmt;

use serde::{Deserialize, Serialize};

use super::{RoadType, Scenario, MAX_ACTORS, MAX_LANES, MAX_SPEED_LIMIT_MPH};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub path: String,
    pub message: String,
}

impl ValidationIssue {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Checks every structural and cross-field rule. An empty result means valid.
pub fn validate(s: &Scenario) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let rn = &s.road_network;

    if rn.num_lanes == 0 {
        issues.push(ValidationIssue::new("RoadNetwork.NumLanes", "must be at least 1"));
    } else if rn.num_lanes > MAX_LANES {
        issues.push(ValidationIssue::new(
            "RoadNetwork.NumLanes",
            format!("{} exceeds the cap of {MAX_LANES}", rn.num_lanes),
        ));
    }

    match (rn.road_type, rn.stem_direction) {
        (RoadType::TIntersection, None) => issues.push(ValidationIssue::new(
            "RoadNetwork.StemDirection",
            "a T-intersection needs a stem direction",
        )),
        (rt, Some(dir)) if rt != RoadType::TIntersection => issues.push(ValidationIssue::new(
            "RoadNetwork.StemDirection",
            format!("stem direction {dir} given for a {rt} road"),
        )),
        _ => {}
    }

    if s.actors.is_empty() || s.actors.len() > MAX_ACTORS {
        issues.push(ValidationIssue::new(
            "Actors",
            format!("expected 1..={MAX_ACTORS} actors, found {}", s.actors.len()),
        ));
    }

    for (i, actor) in s.actors.iter().enumerate() {
        if !actor.initial_position.legal_on(rn.road_type) {
            issues.push(ValidationIssue::new(
                format!("Actors[{i}].Initial_position"),
                format!(
                    "{} is not a legal position on a {} road",
                    actor.initial_position, rn.road_type
                ),
            ));
        }
        if actor.actions.is_empty() {
            issues.push(ValidationIssue::new(format!("Actors[{i}].Actions"), "no actions given"));
        }
        let v = actor.speed_limit;
        if !(v.is_finite() && v > 0.0 && v <= MAX_SPEED_LIMIT_MPH) {
            issues.push(ValidationIssue::new(
                format!("Actors[{i}].Speed_limit"),
                format!("{v} mph is outside (0, {MAX_SPEED_LIMIT_MPH}]"),
            ));
        }
    }

    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::testutil::night_crossing;
    use crate::dsl::{Cardinal, InitialPosition};

    #[test]
    fn worked_example_is_valid() {
        assert!(validate(&night_crossing()).is_empty());
    }

    #[test]
    fn on_ramp_on_straight_road() {
        let mut s = night_crossing();
        s.road_network.road_type = RoadType::Straight;
        s.actors[1].initial_position = InitialPosition::OnRamp;
        let issues = validate(&s);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].path, "Actors[1].Initial_position");
    }

    #[test]
    fn t_intersection_requires_stem() {
        let mut s = night_crossing();
        s.road_network.road_type = RoadType::TIntersection;
        let issues = validate(&s);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].path, "RoadNetwork.StemDirection");

        s.road_network.stem_direction = Some(Cardinal::North);
        assert!(validate(&s).is_empty());
    }

    #[test]
    fn stem_on_other_roads_is_rejected() {
        let mut s = night_crossing();
        s.road_network.stem_direction = Some(Cardinal::East);
        assert_eq!(validate(&s)[0].path, "RoadNetwork.StemDirection");
    }

    #[test]
    fn bounds() {
        let mut s = night_crossing();
        s.road_network.num_lanes = 9;
        s.actors[0].speed_limit = 0.0;
        s.actors[1].actions.clear();
        let paths: Vec<_> = validate(&s).into_iter().map(|i| i.path).collect();
        assert_eq!(
            paths,
            ["RoadNetwork.NumLanes", "Actors[0].Speed_limit", "Actors[1].Actions"]
        );

        let mut s = night_crossing();
        s.actors = vec![s.actors[0].clone(); 7];
        assert_eq!(validate(&s)[0].path, "Actors");
    }
}
