//! Road-type indexed store of crash-analysis templates.
//!
//! Each entry lives in its own directory:
//!
//! ```text
//! <kb>/<entry>/entry.toml            road_type = "Intersection", optional direction_key and sketch
//! <kb>/<entry>/template.md           stepwise analysis (Step 1..3 and Final Output headings)
//! <kb>/<entry>/example_summary.txt   summary of the worked example case
//! <kb>/<entry>/example.scenario      the worked example's answer in canonical form
//! <kb>/<entry>/example_sketch.png    optional sketch of the worked example
//! <kb>/<entry>/dsl.md                optional; replaces the generated language reference
//! ```

mod prompts;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{parse_scenario, DslEnum, InitialPosition, ParseError, RoadType, Scenario};
use crate::report::{Image, ReportError};

pub use prompts::{
    build_extraction_prompts, build_generic_prompt, build_meta_prompts, build_validation_prompt,
    output_skeleton, with_retry_feedback, BundleError, ChatMessage, ChatPart, PromptBundle, Role,
    ACK_NEW_CASE, EXTRACTION_ACK_EXAMPLE, EXTRACTION_SYSTEM, META_ACK_EXAMPLE, META_OUTPUT_FORMAT,
    META_SYSTEM, VALIDATION_SYSTEM,
};

/// Template headings every entry must contain.
pub const REQUIRED_SECTIONS: [&str; 4] = [
    "Step 1: Extract Actors Information",
    "Step 2: Extract Road Network",
    "Step 3: Extract Environment",
    "Final Output",
];

#[derive(Debug, Error)]
pub enum KbError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed entry header: {message}")]
    Header { path: PathBuf, message: String },
    #[error("{path}: duplicate index key ({road_type}, {direction})")]
    DuplicateKey {
        path: PathBuf,
        road_type: RoadType,
        direction: String,
    },
    #[error("{path}: template lacks section '{section}'")]
    MissingSection { path: PathBuf, section: &'static str },
    #[error("{path}: unreadable sketch: {source}")]
    UnreadableSketch {
        path: PathBuf,
        #[source]
        source: ReportError,
    },
    #[error("{path}: example scenario: {source}")]
    Example {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("{path}: mentions '{token}', which is not a legal position on a {road_type} road")]
    VocabularyLeak {
        path: PathBuf,
        road_type: RoadType,
        token: &'static str,
    },
    #[error("knowledge base has no entry for road type {0}")]
    NoEntry(RoadType),
}

/// First-stage extraction output: road type, car count and per-car directions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaMessage {
    pub road_type: RoadType,
    pub num_cars: u32,
    pub driving_directions: Vec<String>,
}

impl MetaMessage {
    pub fn is_consistent(&self) -> bool {
        self.num_cars >= 1 && self.num_cars as usize == self.driving_directions.len()
    }

    /// Coarse direction tag used to refine knowledge-base retrieval.
    pub fn direction_key(&self) -> Option<String> {
        let lower: Vec<String> = self
            .driving_directions
            .iter()
            .map(|d| d.to_lowercase())
            .collect();
        if lower.iter().any(|d| d.contains("left")) {
            return Some("left-turn".into());
        }
        if lower.iter().any(|d| d.contains("right")) {
            return Some("right-turn".into());
        }
        let positions: Vec<InitialPosition> = self
            .driving_directions
            .iter()
            .filter_map(|d| {
                InitialPosition::ALL
                    .iter()
                    .copied()
                    .find(|p| d.to_lowercase().contains(&p.canonical().to_lowercase()))
            })
            .collect();
        if positions.len() < 2 {
            return None;
        }
        let axis = |p: &InitialPosition| match p {
            InitialPosition::W2E | InitialPosition::E2W => Some(0),
            InitialPosition::S2N | InitialPosition::N2S => Some(1),
            _ => None,
        };
        if positions.iter().all(|p| *p == positions[0]) {
            Some("same-direction".into())
        } else if positions.iter().all(|p| axis(p).is_some() && axis(p) == axis(&positions[0])) {
            Some("opposing".into())
        } else if positions.iter().all(|p| axis(p).is_some()) {
            Some("crossing".into())
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleCase {
    pub summary: String,
    pub sketch_path: Option<PathBuf>,
    pub sketch: Option<Image>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub road_type: RoadType,
    pub direction_key: Option<String>,
    pub example_case: ExampleCase,
    pub analysis_template: String,
    pub dsl_reference: String,
    pub example_output: Scenario,
    /// Directory the entry was loaded from.
    pub source: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Coverage {
    pub present: Vec<RoadType>,
    pub missing: Vec<RoadType>,
}

type IndexKey = (RoadType, Option<String>);

#[derive(Debug, Default)]
pub struct KnowledgeBase {
    entries: BTreeMap<IndexKey, KnowledgeEntry>,
    lookups: AtomicUsize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryHeader {
    road_type: String,
    direction_key: Option<String>,
    sketch: Option<String>,
}

impl KnowledgeBase {
    pub fn from_entries(entries: impl IntoIterator<Item = KnowledgeEntry>) -> Result<Self, KbError> {
        let mut map = BTreeMap::new();
        for e in entries {
            let key = (e.road_type, e.direction_key.clone());
            if map.contains_key(&key) {
                return Err(KbError::DuplicateKey {
                    path: e.source.clone(),
                    road_type: e.road_type,
                    direction: e.direction_key.unwrap_or_else(|| "none".into()),
                });
            }
            map.insert(key, e);
        }
        Ok(Self {
            entries: map,
            lookups: AtomicUsize::new(0),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &KnowledgeEntry> {
        self.entries.values()
    }

    pub fn coverage(&self) -> Coverage {
        let (present, missing) = RoadType::ALL
            .iter()
            .copied()
            .partition(|rt| self.entries.keys().any(|(r, _)| r == rt));
        Coverage { present, missing }
    }

    /// Number of `index_lookup` calls served so far.
    pub fn lookups(&self) -> usize {
        self.lookups.load(Ordering::Relaxed)
    }

    /// Finds the entry for the meta message's road type, preferring a matching
    /// direction tag and falling back to the untagged entry.
    pub fn index_lookup(&self, meta: &MetaMessage) -> Result<&KnowledgeEntry, KbError> {
        self.lookups.fetch_add(1, Ordering::Relaxed);
        let rt = meta.road_type;
        if let Some(tag) = meta.direction_key() {
            if let Some(e) = self.entries.get(&(rt, Some(tag))) {
                return Ok(e);
            }
        }
        self.entries
            .get(&(rt, None))
            .or_else(|| {
                self.entries
                    .iter()
                    .find(|((r, _), _)| *r == rt)
                    .map(|(_, e)| e)
            })
            .ok_or(KbError::NoEntry(rt))
    }
}

/// Loads every entry directory under `dir`.
pub fn load_knowledge_base(dir: &Path) -> Result<KnowledgeBase, KbError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| KbError::Io { path, source }
    };
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join("entry.toml").is_file())
        .collect();
    dirs.sort();
    let entries = dirs
        .iter()
        .map(|d| load_entry(d))
        .collect::<Result<Vec<_>, _>>()?;
    KnowledgeBase::from_entries(entries)
}

fn load_entry(dir: &Path) -> Result<KnowledgeEntry, KbError> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|source| KbError::Io { path, source })
    };
    let header_path = dir.join("entry.toml");
    let header: EntryHeader = toml::from_str(&read("entry.toml")?).map_err(|e| KbError::Header {
        path: header_path.clone(),
        message: e.to_string(),
    })?;
    let road_type = RoadType::from_dsl(&header.road_type).ok_or_else(|| KbError::Header {
        path: header_path.clone(),
        message: format!("unknown road type '{}'", header.road_type),
    })?;

    let template_path = dir.join("template.md");
    let analysis_template = read("template.md")?;
    for section in REQUIRED_SECTIONS {
        if !analysis_template.contains(section) {
            return Err(KbError::MissingSection {
                path: template_path,
                section,
            });
        }
    }

    let sketch_path = match &header.sketch {
        Some(name) => Some(dir.join(name)),
        None => Some(dir.join("example_sketch.png")).filter(|p| p.is_file()),
    };
    let sketch = sketch_path
        .as_deref()
        .map(|p| {
            Image::read(p).map_err(|source| KbError::UnreadableSketch {
                path: p.to_path_buf(),
                source,
            })
        })
        .transpose()?;

    let example_path = dir.join("example.scenario");
    let example_output = parse_scenario(&read("example.scenario")?).map_err(|source| {
        KbError::Example {
            path: example_path.clone(),
            source,
        }
    })?;
    if example_output.road_network.road_type != road_type {
        return Err(KbError::Header {
            path: header_path,
            message: format!(
                "example scenario is a {} road but the entry is indexed as {road_type}",
                example_output.road_network.road_type
            ),
        });
    }

    let dsl_reference = match fs::read_to_string(dir.join("dsl.md")) {
        Ok(s) => s,
        Err(_) => dsl_reference_for(road_type),
    };

    let entry = KnowledgeEntry {
        road_type,
        direction_key: header.direction_key,
        example_case: ExampleCase {
            summary: read("example_summary.txt")?.trim_end().to_string(),
            sketch_path,
            sketch,
        },
        analysis_template,
        dsl_reference,
        example_output,
        source: dir.to_path_buf(),
    };
    check_vocabulary(&entry)?;
    Ok(entry)
}

/// Position tokens that must not appear in material retrieved for `road_type`.
pub fn foreign_position_tokens(road_type: RoadType) -> Vec<&'static str> {
    InitialPosition::ALL
        .iter()
        .filter(|p| !p.legal_on(road_type))
        .map(|p| p.canonical())
        .collect()
}

/// Returns the first foreign position token found in `text`, if any.
pub fn find_foreign_token(road_type: RoadType, text: &str) -> Option<&'static str> {
    let lower = text.to_lowercase();
    foreign_position_tokens(road_type)
        .into_iter()
        .find(|t| lower.contains(&t.to_lowercase()))
}

fn check_vocabulary(e: &KnowledgeEntry) -> Result<(), KbError> {
    let texts = [
        (e.source.join("template.md"), e.analysis_template.as_str()),
        (e.source.join("example_summary.txt"), e.example_case.summary.as_str()),
        (e.source.join("dsl.md"), e.dsl_reference.as_str()),
    ];
    for (path, text) in texts {
        if let Some(token) = find_foreign_token(e.road_type, text) {
            return Err(KbError::VocabularyLeak {
                path,
                road_type: e.road_type,
                token,
            });
        }
    }
    Ok(())
}

fn alternatives<E: DslEnum>(items: &[E]) -> String {
    items
        .iter()
        .map(|e| e.canonical())
        .collect::<Vec<_>>()
        .join(" | ")
}

/// The scenario grammar with initial positions restricted to those legal on `road_type`.
pub fn dsl_reference_for(road_type: RoadType) -> String {
    dsl_grammar(&InitialPosition::legal_for(road_type))
}

/// The scenario grammar offering `positions` as initial positions.
pub fn dsl_grammar(positions: &[InitialPosition]) -> String {
    use crate::dsl::{Action, Cardinal, TimeOfDay, VehicleModel, Weather};
    let mut out = String::new();
    let rows: [(&str, String); 14] = [
        ("<Scenario>", "<Road network>;<Actors>;<Env>".into()),
        ("<Road network>", "<Road type>;<No. lanes>;<Stem direction>".into()),
        ("<Road type>", alternatives(RoadType::ALL)),
        ("<No. lanes>", "Total number of lanes on the road".into()),
        (
            "<Stem direction>",
            format!("{} (T-intersection only, otherwise Not applicable)", alternatives(Cardinal::ALL)),
        ),
        ("<Actors>", "<Vehicle_1>;...;<Vehicle_n>".into()),
        ("<Vehicle_n>", "<Model>;<Initial_position>;<Actions>;<Speed_limit>".into()),
        ("<Model>", alternatives(VehicleModel::ALL)),
        ("<Initial_position>", alternatives(positions)),
        ("<Actions>", alternatives(Action::ALL)),
        ("<Speed_limit>", "speed limit in mph".into()),
        ("<Env>", "<Time>;<Weather>".into()),
        ("<Time>", alternatives(TimeOfDay::ALL)),
        ("<Weather>", alternatives(Weather::ALL)),
    ];
    for (lhs, rhs) in rows {
        out.push_str(&format!("{lhs:<20}::= {rhs}\n"));
    }
    out
}
