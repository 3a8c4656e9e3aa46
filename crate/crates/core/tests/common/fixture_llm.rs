//! Scripted chat model behind the checked-in fixture cassette.
//!
//! Shared by `examples/regen_fixtures.rs`, which writes the cassette, and by
//! the test that checks the cassette is still current.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use crashscene::kb::{load_knowledge_base, PromptBundle, EXTRACTION_SYSTEM, META_SYSTEM, VALIDATION_SYSTEM};
use crashscene::llm::{BackendConfig, FnTransport, Gateway, LlmMode, TransportError, TransportReply, Usage};
use crashscene::pipeline::{run_batch, CaseOutcome, PipelineConfig};
use crashscene::report::read_cases;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixtures() -> PathBuf {
    repo_root().join("fixtures")
}

/// Every on/off combination of the two pipeline features.
pub fn ablation_configs() -> Vec<PipelineConfig> {
    let mut out = Vec::new();
    for pg in [true, false] {
        for sv in [true, false] {
            out.push(PipelineConfig {
                enable_prompt_generation: pg,
                enable_self_validation: sv,
                max_validation_retries: 2,
            });
        }
    }
    out
}

struct CaseReplies {
    summary: String,
    meta: String,
    scenario: String,
    rejected: Option<String>,
    generic: String,
}

fn load_replies() -> Vec<CaseReplies> {
    let root = fixtures();
    let mut out = Vec::new();
    let mut dirs: Vec<_> = fs::read_dir(root.join("responses"))
        .expect("fixtures/responses")
        .map(|e| e.unwrap().path())
        .collect();
    dirs.sort();
    for dir in dirs {
        let name = dir.file_name().unwrap().to_str().unwrap().to_string();
        let read = |f: &str| fs::read_to_string(dir.join(f)).ok();
        out.push(CaseReplies {
            summary: fs::read_to_string(root.join("cases").join(&name).join("summary.txt"))
                .unwrap()
                .trim()
                .to_string(),
            meta: read("meta.txt").unwrap(),
            scenario: read("scenario.txt").unwrap(),
            rejected: read("scenario_rejected.txt"),
            generic: read("generic.txt").unwrap(),
        });
    }
    out
}

fn reply_for(cases: &[CaseReplies], bundle: &PromptBundle) -> Result<String, String> {
    let system = bundle.messages[0].joined_text();
    let last = bundle.messages.last().unwrap().joined_text();
    let case = cases
        .iter()
        .find(|c| last.contains(&c.summary))
        .ok_or("request does not mention a fixture case")?;
    let retry = last.contains("A previous answer to this case was rejected.");
    if system == VALIDATION_SYSTEM {
        let artifact = last.rsplit("Extracted information:\n").next().unwrap_or("");
        // Only the case with a scripted rejection has a lane count the reviewer catches.
        let wrong_lanes = case.rejected.is_some() && artifact.contains("<No. lanes>: 2\n");
        return Ok(if wrong_lanes {
            "Fail\nNo. lanes: the summary gives two lanes in each direction, so the road has 4 lanes in total.".to_string()
        } else {
            "Pass".to_string()
        });
    }
    if system == META_SYSTEM {
        return Ok(case.meta.clone());
    }
    if system != EXTRACTION_SYSTEM {
        return Err(format!("unexpected system prompt: {system}"));
    }
    Ok(match (bundle.messages.len(), retry, &case.rejected) {
        (_, true, _) => case.scenario.clone(),
        (2, false, _) => case.generic.clone(),
        (_, false, Some(bad)) => bad.clone(),
        (_, false, None) => case.scenario.clone(),
    })
}

fn usage(bundle: &PromptBundle, text: &str) -> Usage {
    let words = |s: &str| s.split_whitespace().count() as u64;
    Usage {
        prompt_tokens: bundle.messages.iter().map(|m| words(&m.joined_text())).sum(),
        completion_tokens: words(text),
    }
}

/// Runs every ablation configuration over the fixture cases with the scripted
/// model, recording into `cassette`. Returns outcomes per configuration.
pub fn record(cassette: &Path) -> Vec<(PipelineConfig, Vec<CaseOutcome>)> {
    let cases = load_replies();
    let transport = FnTransport::new(move |b: &PromptBundle| {
        reply_for(&cases, b)
            .map(|text| TransportReply { usage: usage(b, &text), text })
            .map_err(|e| TransportError::Fatal(crashscene::llm::LlmError::Config(e)))
    });
    let cfg = BackendConfig {
        mode: LlmMode::Record,
        cassette: Some(cassette.to_path_buf()),
        requests_per_minute: None,
        ..BackendConfig::default()
    };
    let gateway = Gateway::with_transport(&cfg, Some(Box::new(transport))).expect("gateway");
    let reports = read_cases(&fixtures().join("cases")).expect("fixture cases");
    let kb = load_knowledge_base(&repo_root().join("data/kb")).expect("knowledge base");
    ablation_configs()
        .into_iter()
        .map(|pc| {
            let out = run_batch(&reports, Some(&kb), &gateway, &pc, 1).expect("batch");
            (pc, out)
        })
        .collect()
}
