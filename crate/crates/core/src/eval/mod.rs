//! Extraction accuracy, test-run aggregation, crash reproduction and the U-test.

mod utest;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{Actor, RoadType, Scenario};
use crate::sim::Trace;

pub use utest::{mann_whitney_u, UMethod, UTestResult, EXACT_LIMIT};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no oracle for case {0}")]
    MissingOracle(String),
    #[error("duplicate oracle for case {0}")]
    DuplicateOracle(String),
    #[error("nothing to evaluate")]
    Empty,
    #[error("{traces} traces but {verdicts} reproduction verdicts")]
    VerdictCount { traces: usize, verdicts: usize },
    #[error("U-test sample {0} is empty")]
    EmptySample(char),
    #[error("U-test samples must be finite")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub case_id: String,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub n: usize,
    pub n_road: usize,
    pub n_actor: usize,
    pub n_env: usize,
    pub n_all: usize,
    pub road_network_accuracy: f64,
    pub actors_accuracy: f64,
    pub env_accuracy: f64,
    pub overall_accuracy: f64,
}

impl AccuracyReport {
    fn from_counts(n: usize, n_road: usize, n_actor: usize, n_env: usize, n_all: usize) -> Self {
        let ratio = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        Self {
            n,
            n_road,
            n_actor,
            n_env,
            n_all,
            road_network_accuracy: ratio(n_road),
            actors_accuracy: ratio(n_actor),
            env_accuracy: ratio(n_env),
            overall_accuracy: ratio(n_all),
        }
    }

    pub fn table(&self) -> String {
        let pct = |v: f64| format!("{:.1}%", v * 100.0);
        let mut out = String::new();
        let _ = writeln!(out, "{:<16}{:>8}{:>8}", "Category", "Correct", "Acc.");
        for (name, k, acc) in [
            ("Road network", self.n_road, self.road_network_accuracy),
            ("Actors", self.n_actor, self.actors_accuracy),
            ("Environment", self.n_env, self.env_accuracy),
            ("Overall", self.n_all, self.overall_accuracy),
        ] {
            let _ = writeln!(out, "{name:<16}{:>8}{:>8}", format!("{k}/{}", self.n), pct(acc));
        }
        out
    }
}

/// Pairs oracle actors with predicted actors of the same initial position,
/// in declaration order within a position, and compares every field.
pub fn actors_match(predicted: &[Actor], oracle: &[Actor]) -> bool {
    if predicted.len() != oracle.len() {
        return false;
    }
    let mut used = vec![false; predicted.len()];
    oracle.iter().all(|want| {
        let found = predicted
            .iter()
            .enumerate()
            .find(|(i, got)| !used[*i] && got.initial_position == want.initial_position);
        match found {
            Some((i, got)) => {
                used[i] = true;
                got == want
            }
            None => false,
        }
    })
}

/// Per-category exact-match accuracy of predictions against oracles.
pub fn score_extraction(
    predictions: &[(String, Scenario)],
    oracles: &[OracleRecord],
) -> Result<AccuracyReport, EvalError> {
    let mut by_id: HashMap<&str, &Scenario> = HashMap::new();
    for o in oracles {
        if by_id.insert(&o.case_id, &o.scenario).is_some() {
            return Err(EvalError::DuplicateOracle(o.case_id.clone()));
        }
    }
    let (mut road, mut actor, mut env, mut all) = (0, 0, 0, 0);
    for (case_id, pred) in predictions {
        let want = by_id
            .get(case_id.as_str())
            .ok_or_else(|| EvalError::MissingOracle(case_id.clone()))?;
        let r = pred.road_network == want.road_network;
        let a = actors_match(&pred.actors, &want.actors);
        let e = pred.env == want.env;
        road += usize::from(r);
        actor += usize::from(a);
        env += usize::from(e);
        all += usize::from(r && a && e);
    }
    Ok(AccuracyReport::from_counts(predictions.len(), road, actor, env, all))
}

/// A trace reproduces the crash when it ends in a collision between the
/// report's two vehicles (or, with more actors, one involving the ego) on the
/// expected road type.
pub fn check_reproduction(trace: &Trace, scenario: &Scenario, expected_road: Option<RoadType>) -> bool {
    if !trace.collided() {
        return false;
    }
    if expected_road.is_some_and(|rt| rt != scenario.road_network.road_type) {
        return false;
    }
    let Some(v) = trace.violations.first() else {
        return false;
    };
    let (a, b) = v.actors;
    match scenario.actors.len() {
        2 => (a.min(b), a.max(b)) == (0, 1),
        _ => a == trace.ego || b == trace.ego,
    }
}

/// Number of scenarios executed up to and including the k-th violation, k = 1..=3.
pub fn top_k(flags: &[bool]) -> BTreeMap<u8, usize> {
    let mut out = BTreeMap::new();
    let mut seen = 0u8;
    for (i, &hit) in flags.iter().enumerate() {
        if hit {
            seen += 1;
            out.insert(seen, i + 1);
            if seen == 3 {
                break;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub case_id: Option<String>,
    pub ego: usize,
    pub termination: crate::sim::Termination,
    pub collision: Option<(usize, usize)>,
    pub collision_step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reproduced: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub num_scenarios: usize,
    pub num_violations: usize,
    pub top_k: BTreeMap<u8, usize>,
    pub detection_ratio: f64,
    /// Wall-clock per scenario; left out of reproducible report files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_ms: Option<Vec<f64>>,
    pub reproduced_crashes: usize,
    pub reproduced_cases: Vec<String>,
    /// At most one violation per run: a run stops at its first collision.
    pub violations_per_run_cap: usize,
    pub scenarios: Vec<ScenarioRow>,
}

impl TestReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24}{:>10}", "Scenarios executed", self.num_scenarios);
        let _ = writeln!(out, "{:<24}{:>10}", "Violations", self.num_violations);
        for k in 1..=3u8 {
            let v = self.top_k.get(&k).map_or("-".to_string(), usize::to_string);
            let _ = writeln!(out, "{:<24}{:>10}", format!("Top {k} - violation"), v);
        }
        let _ = writeln!(out, "{:<24}{:>9.2}%", "Detection ratio", self.detection_ratio * 100.0);
        let _ = writeln!(out, "{:<24}{:>10}", "Reproduced crashes", self.reproduced_crashes);
        out
    }
}

/// Aggregates traces in execution order. `reproduction`, when given, holds one verdict per trace.
pub fn aggregate_report(
    traces: &[Trace],
    reproduction: Option<&[bool]>,
    generation_ms: Option<Vec<f64>>,
) -> Result<TestReport, EvalError> {
    if traces.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(r) = reproduction {
        if r.len() != traces.len() {
            return Err(EvalError::VerdictCount { traces: traces.len(), verdicts: r.len() });
        }
    }
    let flags: Vec<bool> = traces.iter().map(|t| !t.violations.is_empty()).collect();
    let num_violations = flags.iter().filter(|&&f| f).count();
    let mut reproduced_cases: Vec<String> = Vec::new();
    let scenarios = traces
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let verdict = reproduction.map(|r| r[i]);
            if verdict == Some(true) {
                let id = t.case_id.clone().unwrap_or_else(|| format!("#{i}"));
                if !reproduced_cases.contains(&id) {
                    reproduced_cases.push(id);
                }
            }
            ScenarioRow {
                case_id: t.case_id.clone(),
                ego: t.ego,
                termination: t.termination,
                collision: t.violations.first().map(|v| v.actors),
                collision_step: t.violations.first().map(|v| v.step),
                reproduced: verdict,
            }
        })
        .collect();
    Ok(TestReport {
        num_scenarios: traces.len(),
        num_violations,
        top_k: top_k(&flags),
        detection_ratio: num_violations as f64 / traces.len() as f64,
        generation_ms,
        reproduced_crashes: reproduced_cases.len(),
        reproduced_cases,
        violations_per_run_cap: 1,
        scenarios,
    })
}

#[cfg(test)]
mod tests;
