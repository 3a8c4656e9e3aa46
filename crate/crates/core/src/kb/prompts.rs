//! Chat prompt bundles for meta-message extraction, scenario extraction,
//! the single-prompt ablation and self-validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{dsl_grammar, KnowledgeEntry, MetaMessage};
use crate::dsl::{DslEnum, InitialPosition};
use crate::report::{CrashReport, Image};

pub const META_SYSTEM: &str =
    "Role: An experienced road engineering expert skilled in identifying road types.";
pub const EXTRACTION_SYSTEM: &str =
    "Role: An experienced road engineering expert skilled in extracting scenario representations.";
pub const VALIDATION_SYSTEM: &str =
    "Role: An experienced road engineering expert who checks extracted crash information against the original crash report.";

/// Assistant Output 1 of the meta-message conversation.
pub const META_ACK_EXAMPLE: &str = "Please go ahead and provide an example so I can better understand the task and assist you accordingly.";
/// Assistant Output 1 of the scenario-extraction conversation.
pub const EXTRACTION_ACK_EXAMPLE: &str =
    "Got it! Please provide me with an example so I can better understand this task!";
/// Assistant Output 2 of both conversations.
pub const ACK_NEW_CASE: &str = "Got it! Please provide a new crash case and I'll follow the process to extract the required information.";

pub const META_OUTPUT_FORMAT: &str = "{'Road type': '<your answer>', 'Number of cars': <your answer>, 'Driving direction': '<your answer>'}";

const META_TASK: &str = "\
1. Dataset Description:
(1)Crash Sketch: Depict road networks, vehicle trajectories and the final rest positions of the vehicles. North points up unless the sketch shows a compass.
(2)Crash Summary: Describe the road networks, and vehicle actions before, during and after the crash.

2. Task definition:
(1)Extract the Road Network: decide which of Straight, Curve, Intersection, T-intersection or Merging best describes the road where the crash happened.
(2)Identify the driving direction of traffic actors: for every car involved, give its initial travel direction as W2E, E2W, S2N or N2S, or Main road / On-ramp on a merging road, and note any turn it was making.

3. Analysis steps:
###Step 1. Extract the road network
####Step 1.1 Read the crash summary to identify the content that describes the road segment
####Step 1.2 Determine the road type based on the description.
####Step 1.3 Confirm the road type against the crash sketch.
### Step 2 - Extract the number of cars involved in the crash:
Count the vehicles named in the summary (V1, V2, ...) and drawn in the sketch.
### Step 3 - Determine the initial driving direction of the cars:
Use the travel lanes in the summary and the arrows in the sketch.

4. Output Format:
";

const META_EXAMPLE_SUMMARY: &str = "\
This two-vehicle crash occurred at a four-leg intersection controlled by traffic signals during daylight hours. The north/south roadway has two lanes in each direction and the east/west roadway has one lane in each direction. The speed limit for both roads is 40 mph. Vehicle 1 (V1), a 2014 Honda Accord, was traveling northbound intending to proceed straight through the intersection. Vehicle 2 (V2), a 2011 Ford Escape, was traveling westbound intending to turn left. The front of V1 struck the right side of V2 within the intersection.";

const META_EXAMPLE_ANALYSIS: &str = "\
Analysis Process:
### Step 1. Extract the road network
#### Step 1.1 The summary says the crash \"occurred at a four-leg intersection controlled by traffic signals\".
#### Step 1.2 Four legs meeting at one junction is an Intersection.
#### Step 1.3 The sketch shows two roads crossing, which confirms an Intersection.
### Step 2 - Extract the number of cars involved in the crash:
The summary names V1 and V2 and the sketch shows two vehicles, so there are 2 cars.
### Step 3 - Determine the initial driving direction of the cars:
V1 was traveling northbound, so it drives S2N. V2 was traveling westbound, so it drives E2W and was turning left.

Answer:
{'Road type': 'Intersection', 'Number of cars': 2, 'Driving direction': 'Vehicle 1: S2N, Vehicle 2: E2W turning left'}";

const META_EXAMPLE_SKETCH: &[u8] = include_bytes!("../../assets/meta_example_sketch.png");

const EXTRACTION_TASK: &str =
    "Data & Task: Extract scenario representations from crash reports according to the keys in DSL.";

const VALIDATION_INSTRUCTIONS: &str = "\
Check the extracted information below against the crash sketch and summary of the case and against the original task.
Answer with the single word Pass on the first line when every extracted field is supported by the crash report.
Otherwise answer Fail on the first line, followed by the fields that are wrong and why.";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BundleError {
    #[error("bundle has no messages")]
    Empty,
    #[error("first message must be the system message")]
    MissingSystem,
    #[error("message {index} has role {found:?}, expected {expected:?}")]
    RoleOrder {
        index: usize,
        found: Role,
        expected: Role,
    },
    #[error("final message must come from the user")]
    FinalNotUser,
    #[error("message {index} has no content")]
    EmptyMessage { index: usize },
    #[error("message {index} carries an image without bytes or media type")]
    BadImage { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChatPart {
    Text { text: String },
    Image { image: Image },
}

impl ChatPart {
    pub fn text(s: impl Into<String>) -> Self {
        ChatPart::Text { text: s.into() }
    }

    pub fn image(image: Image) -> Self {
        ChatPart::Image { image }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<ChatPart>,
}

impl ChatMessage {
    pub fn new(role: Role, parts: Vec<ChatPart>) -> Self {
        Self { role, parts }
    }

    pub fn text(role: Role, text: impl Into<String>) -> Self {
        Self::new(role, vec![ChatPart::text(text)])
    }

    /// Text parts joined by blank lines.
    pub fn joined_text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                ChatPart::Text { text } => Some(text.as_str()),
                ChatPart::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn images(&self) -> impl Iterator<Item = &Image> {
        self.parts.iter().filter_map(|p| match p {
            ChatPart::Image { image } => Some(image),
            ChatPart::Text { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub messages: Vec<ChatMessage>,
    /// Set when the case has no sketch and the prompt is text-only.
    #[serde(default)]
    pub degraded: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl PromptBundle {
    /// Checks the system / alternating user-assistant / final user shape.
    pub fn check(&self) -> Result<(), BundleError> {
        let first = self.messages.first().ok_or(BundleError::Empty)?;
        if first.role != Role::System {
            return Err(BundleError::MissingSystem);
        }
        for (index, m) in self.messages.iter().enumerate() {
            if index > 0 {
                let expected = if index % 2 == 1 { Role::User } else { Role::Assistant };
                if m.role != expected {
                    return Err(BundleError::RoleOrder {
                        index,
                        found: m.role,
                        expected,
                    });
                }
            }
            if m.parts.is_empty() {
                return Err(BundleError::EmptyMessage { index });
            }
            if m.images().any(|i| !i.is_well_formed()) {
                return Err(BundleError::BadImage { index });
            }
        }
        if self.messages.len() < 2 || self.messages.last().map(|m| m.role) != Some(Role::User) {
            return Err(BundleError::FinalNotUser);
        }
        Ok(())
    }

    pub fn last_user(&self) -> &ChatMessage {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .expect("checked bundles end with a user message")
    }

    fn new(messages: Vec<ChatMessage>, degraded: bool) -> Self {
        Self {
            messages,
            degraded,
            warnings: Vec::new(),
        }
    }
}

fn case_parts(heading: &str, report: &CrashReport) -> Vec<ChatPart> {
    let mut parts = vec![ChatPart::text(heading)];
    if let Some(sketch) = &report.sketch {
        parts.push(ChatPart::image(sketch.clone()));
    }
    parts.push(ChatPart::text(format!("Crash summary:\n{}", report.summary)));
    parts
}

/// Six-message meta-message conversation ending with the new case.
pub fn build_meta_prompts(report: &CrashReport) -> PromptBundle {
    let example = vec![
        ChatPart::text("Example <Sketch> & <Summary>"),
        ChatPart::image(Image::new(META_EXAMPLE_SKETCH.to_vec(), "image/png")),
        ChatPart::text(format!("Crash summary:\n{META_EXAMPLE_SUMMARY}")),
        ChatPart::text(META_EXAMPLE_ANALYSIS),
    ];
    PromptBundle::new(
        vec![
            ChatMessage::text(Role::System, META_SYSTEM),
            ChatMessage::text(Role::User, format!("{META_TASK}{META_OUTPUT_FORMAT}")),
            ChatMessage::text(Role::Assistant, META_ACK_EXAMPLE),
            ChatMessage::new(Role::User, example),
            ChatMessage::text(Role::Assistant, ACK_NEW_CASE),
            ChatMessage::new(Role::User, case_parts("New Case <Sketch> & <Summary>", report)),
        ],
        report.sketch.is_none(),
    )
}

/// Placeholder layout of the scenario answer.
pub fn output_skeleton() -> String {
    "\
<Scenario>:
    <Road network>:
        <Road type>: <Road type>
        <No. lanes>: <No. lanes>
        <Stem direction>: <Stem direction, or Not applicable>
    <Actors>:
        <Vehicle_1>:
            <Model>: <model>
            <Initial_position>: <Initial_position>
            <Actions>: <Actions>
            <Speed_limit>: <Speed_limit>
        <Vehicle_2>:
            ... (one block per vehicle)
    <Env>:
        <Time>: <Time>
        <Weather>: <Weather>
"
    .to_string()
}

/// Six-message extraction conversation built around a retrieved entry.
pub fn build_extraction_prompts(
    report: &CrashReport,
    entry: &KnowledgeEntry,
    meta: Option<&MetaMessage>,
) -> PromptBundle {
    let mut task = vec![
        ChatPart::text(format!(
            "{EXTRACTION_TASK}\n\nDSL:\n{}\nOutput format:\n{}",
            entry.dsl_reference,
            output_skeleton()
        )),
        ChatPart::text(format!(
            "Example:\nInput:\nCrash summary - \"{}\"",
            entry.example_case.summary
        )),
    ];
    if let Some(sketch) = &entry.example_case.sketch {
        task.push(ChatPart::text("Crash sketch -"));
        task.push(ChatPart::image(sketch.clone()));
    }
    task.push(ChatPart::text(format!("Output:\n{}", entry.example_output)));

    let mut bundle = PromptBundle::new(
        vec![
            ChatMessage::text(Role::System, EXTRACTION_SYSTEM),
            ChatMessage::new(Role::User, task),
            ChatMessage::text(Role::Assistant, EXTRACTION_ACK_EXAMPLE),
            ChatMessage::text(Role::User, entry.analysis_template.clone()),
            ChatMessage::text(Role::Assistant, ACK_NEW_CASE),
            ChatMessage::new(
                Role::User,
                case_parts("Crash sketch and summary of a new case", report),
            ),
        ],
        report.sketch.is_none(),
    );
    if let Some(meta) = meta {
        if meta.road_type != entry.road_type {
            bundle.warnings.push(format!(
                "meta message names a {} road but the retrieved template is for {}",
                meta.road_type, entry.road_type
            ));
        }
    }
    bundle
}

/// Single-template prompt used when prompt generation is disabled.
pub fn build_generic_prompt(report: &CrashReport) -> PromptBundle {
    let mut parts = vec![ChatPart::text(format!(
        "{EXTRACTION_TASK}\n\nDSL:\n{}\nOutput format:\n{}",
        dsl_grammar(InitialPosition::ALL),
        output_skeleton()
    ))];
    parts.extend(case_parts("Crash sketch and summary of the case", report));
    PromptBundle::new(
        vec![
            ChatMessage::text(Role::System, EXTRACTION_SYSTEM),
            ChatMessage::new(Role::User, parts),
        ],
        report.sketch.is_none(),
    )
}

/// Validation round: the report, the query that produced `artifact`, and the artifact.
pub fn build_validation_prompt(
    report: &CrashReport,
    original: &PromptBundle,
    artifact: &str,
) -> PromptBundle {
    let query = original
        .messages
        .iter()
        .filter(|m| m.role == Role::User)
        .map(ChatMessage::joined_text)
        .next()
        .unwrap_or_default();
    let mut parts = vec![
        ChatPart::text(VALIDATION_INSTRUCTIONS),
        ChatPart::text(format!("Original task:\n{query}")),
    ];
    parts.extend(case_parts("Crash report", report));
    parts.push(ChatPart::text(format!("Extracted information:\n{artifact}")));
    PromptBundle::new(
        vec![
            ChatMessage::text(Role::System, VALIDATION_SYSTEM),
            ChatMessage::new(Role::User, parts),
        ],
        report.sketch.is_none(),
    )
}

/// Re-execution prompt: the original bundle plus the rejected answer and the
/// validator's objection appended to the final user message.
pub fn with_retry_feedback(bundle: &PromptBundle, previous: &str, rationale: &str) -> PromptBundle {
    let mut out = bundle.clone();
    if let Some(last) = out.messages.last_mut() {
        last.parts.push(ChatPart::text(format!(
            "A previous answer to this case was rejected.\nPrevious answer:\n{previous}\nReviewer feedback:\n{rationale}\nAnswer again, correcting these problems."
        )));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::testutil::night_crossing;
    use crate::dsl::{RoadType, Scenario};
    use crate::kb::{dsl_reference_for, find_foreign_token, testutil, ExampleCase};

    fn report(sketch: bool) -> CrashReport {
        let img = sketch.then(|| Image::new(vec![137, 80, 78, 71], "image/png"));
        CrashReport::new("1", "V1 was eastbound when it struck V2.", img).unwrap()
    }

    fn entry(scenario: Scenario) -> KnowledgeEntry {
        let rt = scenario.road_network.road_type;
        KnowledgeEntry {
            road_type: rt,
            direction_key: None,
            example_case: ExampleCase {
                summary: "Two vehicles collided.".into(),
                sketch_path: None,
                sketch: None,
            },
            analysis_template: testutil::template(),
            dsl_reference: dsl_reference_for(rt),
            example_output: scenario,
            source: "mem".into(),
        }
    }

    #[test]
    fn meta_bundle_shape() {
        let b = build_meta_prompts(&report(true));
        b.check().unwrap();
        assert_eq!(b.messages.len(), 6);
        assert!(b.messages[1].joined_text().contains(META_OUTPUT_FORMAT));
        assert_eq!(b.messages[2].joined_text(), META_ACK_EXAMPLE);
        assert_eq!(b.messages[4].joined_text(), ACK_NEW_CASE);
        let last = b.last_user();
        assert!(last.joined_text().contains("V1 was eastbound"));
        assert_eq!(last.images().count(), 1);
        assert!(!b.degraded);
    }

    #[test]
    fn missing_sketch_degrades() {
        let b = build_meta_prompts(&report(false));
        b.check().unwrap();
        assert_eq!(b.last_user().images().count(), 0);
        assert!(b.degraded);
    }

    #[test]
    fn extraction_bundle_carries_template() {
        let b = build_extraction_prompts(&report(true), &entry(night_crossing()), None);
        b.check().unwrap();
        let step_two = b.messages[3].joined_text();
        for h in ["Extract Actors Information", "Extract Road Network", "Extract Environment"] {
            assert!(step_two.contains(h));
        }
        assert_eq!(b.messages[2].joined_text(), EXTRACTION_ACK_EXAMPLE);
        assert!(b.warnings.is_empty());
    }

    #[test]
    fn road_type_mismatch_is_a_warning() {
        let meta = MetaMessage {
            road_type: RoadType::Curve,
            num_cars: 1,
            driving_directions: vec!["W2E".into()],
        };
        let b = build_extraction_prompts(&report(true), &entry(night_crossing()), Some(&meta));
        assert_eq!(b.warnings.len(), 1);
    }

    #[test]
    fn bundles_are_deterministic() {
        let e = entry(night_crossing());
        let a = serde_json::to_string(&build_extraction_prompts(&report(true), &e, None)).unwrap();
        let b = serde_json::to_string(&build_extraction_prompts(&report(true), &e, None)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn role_checks() {
        let mut b = build_generic_prompt(&report(true));
        b.check().unwrap();
        b.messages.push(ChatMessage::text(Role::Assistant, "x"));
        assert_eq!(b.check(), Err(BundleError::FinalNotUser));
        b.messages.swap(0, 1);
        assert_eq!(b.check(), Err(BundleError::MissingSystem));
        let mut b = build_generic_prompt(&report(true));
        b.messages.insert(1, ChatMessage::text(Role::Assistant, "x"));
        assert!(matches!(b.check(), Err(BundleError::RoleOrder { index: 1, .. })));
    }

    #[test]
    fn merging_bundle_has_no_compass_vocabulary() {
        let mut s = night_crossing();
        s.road_network.road_type = RoadType::Merging;
        for a in &mut s.actors {
            a.initial_position = InitialPosition::MainRoad;
        }
        let b = build_extraction_prompts(&report(false), &entry(s), None);
        let retrieved: String = b.messages[1..5].iter().map(|m| m.joined_text()).collect();
        assert_eq!(find_foreign_token(RoadType::Merging, &retrieved), None);
    }

    #[test]
    fn feedback_changes_final_message_only() {
        let b = build_generic_prompt(&report(true));
        let r = with_retry_feedback(&b, "old", "Fail: wrong road");
        assert_eq!(r.messages.len(), b.messages.len());
        assert_ne!(r, b);
        assert!(r.last_user().joined_text().contains("Fail: wrong road"));
        r.check().unwrap();
    }

    #[test]
    fn validation_bundle_contains_query_report_and_artifact() {
        let r = report(true);
        let meta = build_meta_prompts(&r);
        let v = build_validation_prompt(&r, &meta, "{'Road type': 'Curve'}");
        v.check().unwrap();
        let text = v.last_user().joined_text();
        assert!(text.contains(META_OUTPUT_FORMAT));
        assert!(text.contains("V1 was eastbound"));
        assert!(text.contains("{'Road type': 'Curve'}"));
        assert_eq!(v.last_user().images().count(), 1);
    }
}
