//! The scenario language: road network, actors and environment of one crash scene.
//!
//! The canonical on-disk form is the indented angle-bracket layout:
//!
//! ```text
//! <Scenario>:
//!     <Road network>:
//!         <Road type>: Intersection
//!         <No. lanes>: 3
//!         <Stem direction>: Not applicable
//!     <Actors>:
//!         <Vehicle_1>:
//!             <Model>: Sedan
//!             <Initial_position>: S2N
//!             <Actions>: Move forward
//!             <Speed_limit>: 45
//!     <Env>:
//!         <Time>: Nighttime
//!         <Weather>: Clear
//! ```

pub(crate) mod encode;
mod json;
mod text;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use encode::{encode_raw_response, EncodeError};
pub use json::{scenario_from_json, scenario_to_json, JsonError};
pub use text::{parse_scenario, serialize_scenario, ParseError};
pub use validate::{validate, ValidationIssue};

/// Upper bound on `RoadNetwork::num_lanes`.
pub const MAX_LANES: u32 = 8;
/// Upper bound on the number of actors in a scenario.
pub const MAX_ACTORS: usize = 6;
/// Upper bound on an actor's speed limit, in mph.
pub const MAX_SPEED_LIMIT_MPH: f64 = 100.0;

/// Sentinel written for an absent stem direction.
pub const NOT_APPLICABLE: &str = "Not applicable";

/// Closed enumeration with a canonical spelling and a lenient parser.
pub trait DslEnum: Sized + Copy + 'static {
    const ALL: &'static [Self];
    fn canonical(self) -> &'static str;

    /// Case-insensitive match ignoring spaces, hyphens and underscores.
    fn from_dsl(s: &str) -> Option<Self> {
        let key = squash(s);
        Self::ALL.iter().copied().find(|v| squash(v.canonical()) == key)
    }
}

pub(crate) fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| !matches!(c, ' ' | '-' | '_' | '\t'))
        .flat_map(char::to_lowercase)
        .collect()
}

macro_rules! dsl_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name { $($variant),+ }

        impl DslEnum for $name {
            const ALL: &'static [Self] = &[$($name::$variant),+];
            fn canonical(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.canonical())
            }
        }
    };
}

dsl_enum!(
    RoadType {
        Straight => "Straight",
        Curve => "Curve",
        Intersection => "Intersection",
        TIntersection => "T-intersection",
        Merging => "Merging",
    }
);

dsl_enum!(
    /// Compass side of a T-intersection's stem road.
    Cardinal {
        North => "North",
        South => "South",
        East => "East",
        West => "West",
    }
);

dsl_enum!(
    VehicleModel {
        Sedan => "Sedan",
        Suv => "SUV",
        Minivan => "Minivan",
        Pickup => "Pickup",
        SemiTruck => "Semi Truck",
    }
);

dsl_enum!(
    InitialPosition {
        W2E => "W2E",
        E2W => "E2W",
        S2N => "S2N",
        N2S => "N2S",
        MainRoad => "Main road",
        OnRamp => "On-ramp",
    }
);

dsl_enum!(
    Action {
        MoveForward => "Move forward",
        TurnLeft => "Turn left",
        TurnRight => "Turn right",
    }
);

dsl_enum!(
    TimeOfDay {
        Daytime => "Daytime",
        Nighttime => "Nighttime",
    }
);

dsl_enum!(
    Weather {
        Sunny => "Sunny",
        Cloudy => "Cloudy",
        Overcast => "Overcast",
        Rainy => "Rainy",
        Snowy => "Snowy",
        Foggy => "Foggy",
        Windy => "Windy",
        Clear => "Clear",
    }
);

impl InitialPosition {
    /// Compass positions are legal everywhere except on merging roads.
    pub fn is_compass(self) -> bool {
        matches!(self, Self::W2E | Self::E2W | Self::S2N | Self::N2S)
    }

    pub fn legal_on(self, road: RoadType) -> bool {
        (road == RoadType::Merging) != self.is_compass()
    }

    /// Positions a scenario on `road` may use.
    pub fn legal_for(road: RoadType) -> Vec<InitialPosition> {
        Self::ALL.iter().copied().filter(|p| p.legal_on(road)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub road_type: RoadType,
    pub num_lanes: u32,
    pub stem_direction: Option<Cardinal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub model: VehicleModel,
    pub initial_position: InitialPosition,
    pub actions: Vec<Action>,
    /// Miles per hour.
    pub speed_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub time: TimeOfDay,
    pub weather: Weather,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub road_network: RoadNetwork,
    pub actors: Vec<Actor>,
    pub env: Environment,
}

impl Scenario {
    pub fn is_valid(&self) -> bool {
        validate(self).is_empty()
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&text::render(self))
    }
}

/// Formats a speed limit so that integral values carry no fractional part.
pub(crate) fn format_speed(mph: f64) -> String {
    if mph.fract() == 0.0 && mph.abs() < 1e15 {
        format!("{}", mph as i64)
    } else {
        format!("{mph}")
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enum_parsing_is_lenient() {
        assert_eq!(RoadType::from_dsl("t intersection"), Some(RoadType::TIntersection));
        assert_eq!(RoadType::from_dsl("T-Intersection"), Some(RoadType::TIntersection));
        assert_eq!(VehicleModel::from_dsl("semi-truck"), Some(VehicleModel::SemiTruck));
        assert_eq!(InitialPosition::from_dsl("on ramp"), Some(InitialPosition::OnRamp));
        assert_eq!(Action::from_dsl("Move Forward"), Some(Action::MoveForward));
        assert_eq!(Weather::from_dsl("Hail"), None);
    }

    #[test]
    fn canonical_spelling() {
        assert_eq!(RoadType::TIntersection.to_string(), "T-intersection");
        assert_eq!(Action::MoveForward.to_string(), "Move forward");
    }

    #[test]
    fn position_legality() {
        assert!(InitialPosition::OnRamp.legal_on(RoadType::Merging));
        assert!(!InitialPosition::OnRamp.legal_on(RoadType::Straight));
        assert!(!InitialPosition::W2E.legal_on(RoadType::Merging));
        assert_eq!(InitialPosition::legal_for(RoadType::Curve).len(), 4);
    }

    #[test]
    fn speed_formatting() {
        assert_eq!(format_speed(45.0), "45");
        assert_eq!(format_speed(27.5), "27.5");
    }
}
