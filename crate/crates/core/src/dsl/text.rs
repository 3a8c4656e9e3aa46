//! Reader and writer for the indented `.scenario` layout.

use std::fmt::Write as _;

use thiserror::Error;

use super::{
    format_speed, squash, validate, Action, Actor, Cardinal, DslEnum, Environment, InitialPosition,
    RoadNetwork, RoadType, Scenario, TimeOfDay, ValidationIssue, VehicleModel, Weather,
    NOT_APPLICABLE,
};

const INDENT: &str = "    ";

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: unknown key <{key}> under {parent}")]
    UnknownKey {
        line: usize,
        parent: String,
        key: String,
    },
    #[error("line {line}: duplicate key {path}")]
    DuplicateKey { line: usize, path: String },
    #[error("line {line}: {path}: '{value}' is not one of {}", expected.join(", "))]
    InvalidValue {
        line: usize,
        path: String,
        value: String,
        expected: Vec<&'static str>,
    },
    #[error("missing mandatory field {path}")]
    MissingField { path: String },
    #[error("scenario is invalid: {}", join_issues(.0))]
    Invalid(Vec<ValidationIssue>),
}

impl ParseError {
    /// Field path the error refers to, when it has one.
    pub fn path(&self) -> Option<&str> {
        match self {
            Self::InvalidValue { path, .. }
            | Self::MissingField { path }
            | Self::DuplicateKey { path, .. } => Some(path),
            _ => None,
        }
    }
}

fn join_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Writes the canonical layout. Fails when the scenario does not validate.
pub fn serialize_scenario(s: &Scenario) -> Result<String, Vec<ValidationIssue>> {
    let issues = validate(s);
    if issues.is_empty() {
        Ok(render(s))
    } else {
        Err(issues)
    }
}

pub(super) fn render(s: &Scenario) -> String {
    let mut out = String::new();
    let mut line = |depth: usize, key: &str, value: Option<&str>| {
        for _ in 0..depth {
            out.push_str(INDENT);
        }
        match value {
            Some(v) => writeln!(out, "<{key}>: {v}"),
            None => writeln!(out, "<{key}>:"),
        }
        .expect("writing to a String");
    };

    let rn = &s.road_network;
    line(0, "Scenario", None);
    line(1, "Road network", None);
    line(2, "Road type", Some(rn.road_type.canonical()));
    line(2, "No. lanes", Some(&rn.num_lanes.to_string()));
    line(
        2,
        "Stem direction",
        Some(rn.stem_direction.map_or(NOT_APPLICABLE, Cardinal::canonical)),
    );
    line(1, "Actors", None);
    for (i, a) in s.actors.iter().enumerate() {
        line(2, &format!("Vehicle_{}", i + 1), None);
        line(3, "Model", Some(a.model.canonical()));
        line(3, "Initial_position", Some(a.initial_position.canonical()));
        let actions: Vec<_> = a.actions.iter().map(|a| a.canonical()).collect();
        line(3, "Actions", Some(&actions.join(", ")));
        line(3, "Speed_limit", Some(&format_speed(a.speed_limit)));
    }
    line(1, "Env", None);
    line(2, "Time", Some(s.env.time.canonical()));
    line(2, "Weather", Some(s.env.weather.canonical()));
    out
}

#[derive(Debug)]
struct Node {
    key: String,
    value: Option<String>,
    line: usize,
    children: Vec<Node>,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

/// Splits the document into a tree of `<Key>: value` nodes by indentation.
fn tokenize(text: &str) -> Result<Vec<Node>, ParseError> {
    // (indent, node) stack; the bottom entry is a virtual root.
    let mut stack: Vec<(isize, Node)> = vec![(
        -1,
        Node {
            key: String::new(),
            value: None,
            line: 0,
            children: Vec::new(),
        },
    )];

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let raw = raw.trim_end();
        if raw.trim().is_empty() {
            continue;
        }
        let mut indent = 0usize;
        for c in raw.chars() {
            match c {
                ' ' => indent += 1,
                '\t' => indent += 4,
                _ => break,
            }
        }
        let body = raw.trim_start();
        let col = raw.len() - body.len() + 1;
        if !body.starts_with('<') {
            return Err(syntax(lineno, col, "expected '<' to open a key"));
        }
        let close = body
            .find('>')
            .ok_or_else(|| syntax(lineno, col, "unterminated key, expected '>'"))?;
        let key = body[1..close].trim().to_string();
        if key.is_empty() {
            return Err(syntax(lineno, col + 1, "empty key"));
        }
        let rest = &body[close + 1..];
        let rest_trim = rest.trim_start();
        if !rest_trim.starts_with(':') {
            return Err(syntax(
                lineno,
                col + close + 1 + (rest.len() - rest_trim.len()),
                "expected ':' after key",
            ));
        }
        let value = rest_trim[1..].trim();
        let value = (!value.is_empty()).then(|| value.to_string());

        let indent = indent as isize;
        while stack.last().is_some_and(|(ind, _)| *ind >= indent) {
            let (_, done) = stack.pop().expect("non-empty stack");
            stack
                .last_mut()
                .ok_or_else(|| syntax(lineno, col, "inconsistent indentation"))?
                .1
                .children
                .push(done);
        }
        if let Some((_, parent)) = stack.last() {
            if parent.value.is_some() && stack.len() > 1 {
                return Err(syntax(
                    lineno,
                    col,
                    format!("<{}> has a value and cannot contain nested keys", parent.key),
                ));
            }
        }
        stack.push((
            indent,
            Node {
                key,
                value,
                line: lineno,
                children: Vec::new(),
            },
        ));
    }

    while stack.len() > 1 {
        let (_, done) = stack.pop().expect("non-empty stack");
        stack.last_mut().expect("root").1.children.push(done);
    }
    Ok(stack.pop().expect("root").1.children)
}

/// Children of a section looked up by normalized key, rejecting unknown or repeated keys.
struct Section<'a> {
    path: String,
    fields: Vec<(&'static str, &'a Node)>,
}

impl<'a> Section<'a> {
    fn new(path: &str, node: &'a Node, allowed: &[&'static str]) -> Result<Self, ParseError> {
        if node.value.is_some() {
            return Err(syntax(node.line, 1, format!("<{}> must not carry a value", node.key)));
        }
        let mut fields: Vec<(&'static str, &Node)> = Vec::new();
        for child in &node.children {
            let key = squash(&child.key);
            let Some(&name) = allowed.iter().find(|a| squash(a) == key) else {
                return Err(ParseError::UnknownKey {
                    line: child.line,
                    parent: path.to_string(),
                    key: child.key.clone(),
                });
            };
            if fields.iter().any(|(n, _)| *n == name) {
                return Err(ParseError::DuplicateKey {
                    line: child.line,
                    path: format!("{path}.{}", field_path(name)),
                });
            }
            fields.push((name, child));
        }
        Ok(Self {
            path: path.to_string(),
            fields,
        })
    }

    fn node(&self, name: &str) -> Result<&'a Node, ParseError> {
        self.fields
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, node)| *node)
            .ok_or_else(|| ParseError::MissingField {
                path: format!("{}.{}", self.path, field_path(name)),
            })
    }

    fn value(&self, name: &str) -> Result<(&'a str, usize, String), ParseError> {
        let node = self.node(name)?;
        let path = format!("{}.{}", self.path, field_path(name));
        match &node.value {
            Some(v) if node.children.is_empty() => Ok((v.as_str(), node.line, path)),
            Some(_) => Err(syntax(node.line, 1, format!("<{}> cannot have children", node.key))),
            None => Err(ParseError::MissingField { path }),
        }
    }

    fn enum_value<E: DslEnum>(&self, name: &str) -> Result<E, ParseError> {
        let (v, line, path) = self.value(name)?;
        E::from_dsl(v).ok_or_else(|| invalid::<E>(line, path, v))
    }
}

fn invalid<E: DslEnum>(line: usize, path: String, value: &str) -> ParseError {
    ParseError::InvalidValue {
        line,
        path,
        value: value.to_string(),
        expected: E::ALL.iter().map(|e| e.canonical()).collect(),
    }
}

/// Field names in paths drop spaces and punctuation, e.g. `Road type` -> `RoadType`.
fn field_path(name: &str) -> String {
    match name {
        "Road network" => "RoadNetwork".into(),
        "Road type" => "RoadType".into(),
        "No. lanes" => "NumLanes".into(),
        "Stem direction" => "StemDirection".into(),
        other => other.to_string(),
    }
}

/// Reads a `.scenario` document. The result always validates.
pub fn parse_scenario(text: &str) -> Result<Scenario, ParseError> {
    let roots = tokenize(text)?;
    let root = match roots.as_slice() {
        [] => return Err(ParseError::MissingField { path: "Scenario".into() }),
        [root] => root,
        [_, extra, ..] => {
            return Err(syntax(extra.line, 1, "only one top-level <Scenario> is allowed"))
        }
    };
    if squash(&root.key) != "scenario" {
        return Err(ParseError::UnknownKey {
            line: root.line,
            parent: "document".into(),
            key: root.key.clone(),
        });
    }

    let top = Section::new("Scenario", root, &["Road network", "Actors", "Env"])?;
    let road_network = parse_road(top.node("Road network")?)?;
    let actors = parse_actors(top.node("Actors")?)?;
    let env = parse_env(top.node("Env")?)?;

    let scenario = Scenario {
        road_network,
        actors,
        env,
    };
    let issues = validate(&scenario);
    if issues.is_empty() {
        Ok(scenario)
    } else {
        Err(ParseError::Invalid(issues))
    }
}

fn parse_road(node: &Node) -> Result<RoadNetwork, ParseError> {
    let sec = Section::new(
        "RoadNetwork",
        node,
        &["Road type", "No. lanes", "Stem direction"],
    )?;
    let road_type = sec.enum_value::<RoadType>("Road type")?;

    let (v, line, path) = sec.value("No. lanes")?;
    let num_lanes = v
        .parse::<u32>()
        .map_err(|_| syntax(line, 1, format!("{path}: '{v}' is not a lane count")))?;

    let (v, line, path) = sec.value("Stem direction")?;
    let stem_direction = if is_not_applicable(v) {
        None
    } else {
        Some(Cardinal::from_dsl(v).ok_or_else(|| invalid::<Cardinal>(line, path, v))?)
    };

    Ok(RoadNetwork {
        road_type,
        num_lanes,
        stem_direction,
    })
}

pub(crate) fn is_not_applicable(v: &str) -> bool {
    matches!(squash(v).as_str(), "notapplicable" | "n/a" | "na" | "none")
}

fn parse_actors(node: &Node) -> Result<Vec<Actor>, ParseError> {
    if node.value.is_some() {
        return Err(syntax(node.line, 1, "<Actors> must not carry a value"));
    }
    let mut numbered: Vec<(usize, &Node)> = Vec::new();
    for child in &node.children {
        let key = squash(&child.key);
        let n = key
            .strip_prefix("vehicle")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|n| *n >= 1)
            .ok_or_else(|| ParseError::UnknownKey {
                line: child.line,
                parent: "Actors".into(),
                key: child.key.clone(),
            })?;
        if numbered.iter().any(|(m, _)| *m == n) {
            return Err(ParseError::DuplicateKey {
                line: child.line,
                path: format!("Actors.Vehicle_{n}"),
            });
        }
        numbered.push((n, child));
    }
    numbered.sort_by_key(|(n, _)| *n);
    if let Some(pos) = numbered.iter().enumerate().position(|(i, (n, _))| *n != i + 1) {
        return Err(ParseError::MissingField {
            path: format!("Actors.Vehicle_{}", pos + 1),
        });
    }

    numbered
        .into_iter()
        .enumerate()
        .map(|(i, (_, node))| parse_actor(i, node))
        .collect()
}

fn parse_actor(i: usize, node: &Node) -> Result<Actor, ParseError> {
    let sec = Section::new(
        &format!("Actors[{i}]"),
        node,
        &["Model", "Initial_position", "Actions", "Speed_limit"],
    )?;
    let model = sec.enum_value::<VehicleModel>("Model")?;
    let initial_position = sec.enum_value::<InitialPosition>("Initial_position")?;

    let (v, line, path) = sec.value("Actions")?;
    let actions = v
        .split([',', ';'])
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| Action::from_dsl(t).ok_or_else(|| invalid::<Action>(line, path.clone(), t)))
        .collect::<Result<Vec<_>, _>>()?;

    let (v, line, path) = sec.value("Speed_limit")?;
    let number = v.trim_end_matches(|c: char| c.is_alphabetic() || c.is_whitespace());
    let speed_limit = number
        .parse::<f64>()
        .map_err(|_| syntax(line, 1, format!("{path}: '{v}' is not a speed")))?;

    Ok(Actor {
        model,
        initial_position,
        actions,
        speed_limit,
    })
}

fn parse_env(node: &Node) -> Result<Environment, ParseError> {
    let sec = Section::new("Env", node, &["Time", "Weather"])?;
    Ok(Environment {
        time: sec.enum_value::<TimeOfDay>("Time")?,
        weather: sec.enum_value::<Weather>("Weather")?,
    })
}
