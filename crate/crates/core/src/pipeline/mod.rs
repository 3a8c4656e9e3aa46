//! Two-stage extraction: meta message, retrieval, scenario, with self-validation gates.

mod meta;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{encode_raw_response, validate, EncodeError, Scenario};
use crate::kb::{
    build_extraction_prompts, build_generic_prompt, build_meta_prompts, build_validation_prompt,
    with_retry_feedback, KbError, KnowledgeBase, MetaMessage, PromptBundle,
};
use crate::llm::{ChatModel, LlmError, LlmResponse};
use crate::report::CrashReport;

pub use meta::{parse_meta, MetaParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub enable_prompt_generation: bool,
    pub enable_self_validation: bool,
    /// Attempts allowed per stage, counting the first.
    pub max_validation_retries: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            enable_prompt_generation: true,
            enable_self_validation: true,
            max_validation_retries: 2,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("max_validation_retries must be at least 1")]
    ZeroRetries,
    #[error("prompt generation is enabled but no knowledge base was supplied")]
    NoKnowledgeBase,
    #[error("duplicate case id {0}")]
    DuplicateCase(String),
    #[error("{stage} request failed: {source}")]
    Llm {
        stage: Stage,
        #[source]
        source: LlmError,
    },
    #[error("meta message unparseable after {tries} attempts: {source}")]
    Meta {
        tries: u32,
        #[source]
        source: MetaParseError,
    },
    #[error("knowledge-base retrieval failed: {0}")]
    Kb(#[from] KbError),
    #[error("raw response could not be encoded after {tries} attempts: {source}")]
    Encode {
        tries: u32,
        #[source]
        source: EncodeError,
    },
}

impl PipelineConfig {
    pub fn check(&self) -> Result<(), PipelineError> {
        if self.max_validation_retries == 0 {
            Err(PipelineError::ZeroRetries)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Meta,
    MetaValidation,
    Scenario,
    ScenarioValidation,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Meta => "meta",
            Stage::MetaValidation => "meta validation",
            Stage::Scenario => "scenario",
            Stage::ScenarioValidation => "scenario validation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub passed: bool,
    pub rationale: String,
}

impl ValidationVerdict {
    /// A reply whose first word is "Pass" (any case) passes.
    pub fn from_reply(reply: &str) -> Self {
        let first = reply
            .trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '#' | '`' | '"' | '\''))
            .split(|c: char| !c.is_ascii_alphabetic())
            .next()
            .unwrap_or("");
        let passed = first.eq_ignore_ascii_case("pass");
        let rationale = if reply.trim().is_empty() {
            "empty validator reply".to_string()
        } else {
            reply.trim().to_string()
        };
        Self { passed, rationale }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempts {
    pub meta_tries: u32,
    pub scenario_tries: u32,
    pub validation_calls: u32,
}

/// One request/response exchange kept for the audit file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub stage: Stage,
    pub attempt: u32,
    pub fingerprint: String,
    pub response: String,
    pub from_cassette: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<ValidationVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub case_id: String,
    /// Absent when prompt generation is disabled.
    pub meta: Option<MetaMessage>,
    pub scenario: Scenario,
    pub attempts: Attempts,
    pub meta_validation_exhausted: bool,
    pub scenario_validation_exhausted: bool,
    /// Directory of the knowledge-base entry used, if any.
    pub kb_entry: Option<String>,
    pub warnings: Vec<String>,
    pub transcript: Vec<Exchange>,
}

impl ExtractionResult {
    pub fn validation_exhausted(&self) -> bool {
        self.meta_validation_exhausted || self.scenario_validation_exhausted
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub case_id: String,
    pub error: String,
    pub attempts: Attempts,
    pub transcript: Vec<Exchange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CaseOutcome {
    Ok(Box<ExtractionResult>),
    Failed(CaseFailure),
}

impl CaseOutcome {
    pub fn case_id(&self) -> &str {
        match self {
            CaseOutcome::Ok(r) => &r.case_id,
            CaseOutcome::Failed(f) => &f.case_id,
        }
    }
}

struct Run<'a> {
    llm: &'a dyn ChatModel,
    cfg: PipelineConfig,
    report: &'a CrashReport,
    attempts: Attempts,
    transcript: Vec<Exchange>,
    warnings: Vec<String>,
}

/// Result of one validated stage: the parsed artifact and whether validation gave up.
struct StageOutput<T> {
    value: T,
    exhausted: bool,
}

impl<'a> Run<'a> {
    fn ask(&mut self, stage: Stage, bundle: &PromptBundle) -> Result<LlmResponse, PipelineError> {
        self.llm
            .complete(bundle)
            .map_err(|source| PipelineError::Llm { stage, source })
    }

    fn self_validate(
        &mut self,
        stage: Stage,
        attempt: u32,
        query: &PromptBundle,
        artifact: &str,
    ) -> Result<ValidationVerdict, PipelineError> {
        let bundle = build_validation_prompt(self.report, query, artifact);
        self.attempts.validation_calls += 1;
        let resp = self.ask(stage, &bundle)?;
        let verdict = ValidationVerdict::from_reply(&resp.text);
        self.transcript.push(Exchange {
            stage,
            attempt,
            fingerprint: resp.fingerprint,
            response: resp.text,
            from_cassette: resp.from_cassette,
            verdict: Some(verdict.clone()),
            parse_error: None,
        });
        Ok(verdict)
    }

    /// Ask, parse, optionally validate; re-ask with feedback until the
    /// attempt budget runs out.
    fn stage<T, E: std::fmt::Display>(
        &mut self,
        stage: Stage,
        validation_stage: Stage,
        bundle: &PromptBundle,
        parse: impl Fn(&str) -> Result<T, E>,
        give_up: impl Fn(u32, E) -> PipelineError,
    ) -> Result<StageOutput<T>, PipelineError> {
        let max = self.cfg.max_validation_retries;
        let mut current = bundle.clone();
        for attempt in 1..=max {
            match stage {
                Stage::Meta => self.attempts.meta_tries = attempt,
                _ => self.attempts.scenario_tries = attempt,
            }
            let resp = self.ask(stage, &current)?;
            let parsed = parse(&resp.text);
            self.transcript.push(Exchange {
                stage,
                attempt,
                fingerprint: resp.fingerprint.clone(),
                response: resp.text.clone(),
                from_cassette: resp.from_cassette,
                verdict: None,
                parse_error: parsed.as_ref().err().map(|e| e.to_string()),
            });
            let value = match parsed {
                Ok(v) => v,
                Err(e) if attempt == max => return Err(give_up(attempt, e)),
                Err(e) => {
                    current = with_retry_feedback(bundle, &resp.text, &format!("Fail: {e}"));
                    continue;
                }
            };
            if !self.cfg.enable_self_validation {
                return Ok(StageOutput { value, exhausted: false });
            }
            let verdict = self.self_validate(validation_stage, attempt, bundle, &resp.text)?;
            if verdict.passed {
                return Ok(StageOutput { value, exhausted: false });
            }
            if attempt == max {
                self.warnings.push(format!(
                    "{stage} validation did not pass after {max} attempts; keeping the last answer"
                ));
                return Ok(StageOutput { value, exhausted: true });
            }
            current = with_retry_feedback(bundle, &resp.text, &verdict.rationale);
        }
        unreachable!("max_validation_retries is at least 1")
    }
}

fn encode_valid(text: &str) -> Result<Scenario, EncodeError> {
    let s = encode_raw_response(text)?;
    debug_assert!(validate(&s).is_empty());
    Ok(s)
}

/// Runs the whole extraction for one report.
pub fn extract_scenario(
    report: &CrashReport,
    kb: Option<&KnowledgeBase>,
    llm: &dyn ChatModel,
    cfg: &PipelineConfig,
) -> Result<ExtractionResult, CaseFailure> {
    let mut run = Run {
        llm,
        cfg: *cfg,
        report,
        attempts: Attempts::default(),
        transcript: Vec::new(),
        warnings: Vec::new(),
    };
    match extract_inner(&mut run, kb) {
        Ok((meta, scenario, meta_ex, scen_ex, kb_entry)) => Ok(ExtractionResult {
            case_id: report.case_id.clone(),
            meta,
            scenario,
            attempts: run.attempts,
            meta_validation_exhausted: meta_ex,
            scenario_validation_exhausted: scen_ex,
            kb_entry,
            warnings: run.warnings,
            transcript: run.transcript,
        }),
        Err(e) => Err(CaseFailure {
            case_id: report.case_id.clone(),
            error: e.to_string(),
            attempts: run.attempts,
            transcript: run.transcript,
        }),
    }
}

type Extracted = (Option<MetaMessage>, Scenario, bool, bool, Option<String>);

fn extract_inner(run: &mut Run<'_>, kb: Option<&KnowledgeBase>) -> Result<Extracted, PipelineError> {
    run.cfg.check()?;
    let report = run.report;
    let (meta, meta_ex, bundle, kb_entry) = if run.cfg.enable_prompt_generation {
        let kb = kb.ok_or(PipelineError::NoKnowledgeBase)?;
        let meta_bundle = build_meta_prompts(report);
        let out = run.stage(
            Stage::Meta,
            Stage::MetaValidation,
            &meta_bundle,
            parse_meta,
            |tries, source| PipelineError::Meta { tries, source },
        )?;
        let entry = kb.index_lookup(&out.value)?;
        let bundle = build_extraction_prompts(report, entry, Some(&out.value));
        (
            Some(out.value),
            out.exhausted,
            bundle,
            Some(entry.source.display().to_string()),
        )
    } else {
        (None, false, build_generic_prompt(report), None)
    };
    if bundle.degraded {
        run.warnings
            .push("case has no sketch; prompts are text-only".to_string());
    }
    run.warnings.extend(bundle.warnings.iter().cloned());
    let out = run.stage(
        Stage::Scenario,
        Stage::ScenarioValidation,
        &bundle,
        encode_valid,
        |tries, source| PipelineError::Encode { tries, source },
    )?;
    Ok((meta, out.value, meta_ex, out.exhausted, kb_entry))
}

/// Extracts every report with up to `jobs` workers; output order follows input order.
pub fn run_batch(
    reports: &[CrashReport],
    kb: Option<&KnowledgeBase>,
    llm: &dyn ChatModel,
    cfg: &PipelineConfig,
    jobs: usize,
) -> Result<Vec<CaseOutcome>, PipelineError> {
    cfg.check()?;
    if cfg.enable_prompt_generation && kb.is_none() {
        return Err(PipelineError::NoKnowledgeBase);
    }
    let mut seen = HashSet::new();
    for r in reports {
        if !seen.insert(r.case_id.as_str()) {
            return Err(PipelineError::DuplicateCase(r.case_id.clone()));
        }
    }
    let one = |r: &CrashReport| match extract_scenario(r, kb, llm, cfg) {
        Ok(res) => CaseOutcome::Ok(Box::new(res)),
        Err(f) => {
            log::warn!("case {} failed: {}", f.case_id, f.error);
            CaseOutcome::Failed(f)
        }
    };
    if jobs <= 1 {
        return Ok(reports.iter().map(one).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    Ok(pool.install(|| reports.par_iter().map(one).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::testutil::night_crossing;
    use crate::dsl::RoadType;
    use crate::kb::{load_knowledge_base, testutil::write_entry, ChatPart, Role};
    use crate::llm::Usage;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    const META_OK: &str =
        "{'Road type': 'Intersection', 'Number of cars': 2, 'Driving direction': 'Vehicle 1: S2N, Vehicle 2: E2W'}";

    /// Scripted model: validation bundles get `verdicts` in turn (default Pass),
    /// other bundles get `answers` in turn keyed by their system prompt.
    struct Script {
        meta: Mutex<Vec<&'static str>>,
        scenario: Mutex<Vec<String>>,
        verdicts: Mutex<Vec<&'static str>>,
        calls: AtomicUsize,
        validations: AtomicUsize,
    }

    impl Script {
        fn new(meta: &[&'static str], scenario: &[String], verdicts: &[&'static str]) -> Self {
            Self {
                meta: Mutex::new(meta.iter().rev().copied().collect()),
                scenario: Mutex::new(scenario.iter().rev().cloned().collect()),
                verdicts: Mutex::new(verdicts.iter().rev().copied().collect()),
                calls: AtomicUsize::new(0),
                validations: AtomicUsize::new(0),
            }
        }
    }

    impl ChatModel for Script {
        fn complete(&self, bundle: &PromptBundle) -> Result<LlmResponse, LlmError> {
            bundle.check()?;
            self.calls.fetch_add(1, Ordering::SeqCst);
            let system = match &bundle.messages[0].parts[0] {
                ChatPart::Text { text } => text.clone(),
                ChatPart::Image { .. } => unreachable!(),
            };
            assert_eq!(bundle.messages[0].role, Role::System);
            let text = if system.contains("checks extracted") {
                self.validations.fetch_add(1, Ordering::SeqCst);
                self.verdicts.lock().unwrap().pop().unwrap_or("Pass").to_string()
            } else if system.contains("identifying road types") {
                self.meta.lock().unwrap().pop().unwrap_or(META_OK).to_string()
            } else {
                self.scenario.lock().unwrap().pop().unwrap_or_else(|| night_crossing().to_string())
            };
            Ok(LlmResponse {
                text,
                usage: Usage::default(),
                elapsed_ms: 0,
                fingerprint: crate::llm::fingerprint(bundle),
                from_cassette: false,
            })
        }
    }

    fn kb() -> (tempfile::TempDir, KnowledgeBase) {
        let tmp = tempfile::tempdir().unwrap();
        write_entry(tmp.path(), "intersection", &night_crossing(), None);
        let kb = load_knowledge_base(tmp.path()).unwrap();
        (tmp, kb)
    }

    fn report(id: &str) -> CrashReport {
        CrashReport::new(id, "V1 northbound struck V2 westbound.", None).unwrap()
    }

    #[test]
    fn verdict_token_rule() {
        assert!(ValidationVerdict::from_reply("Pass: all fields consistent with sketch.").passed);
        assert!(ValidationVerdict::from_reply("**PASS**").passed);
        let v = ValidationVerdict::from_reply("Fail: vehicle 1 direction contradicts sketch");
        assert!(!v.passed);
        assert_eq!(v.rationale, "Fail: vehicle 1 direction contradicts sketch");
        assert!(!ValidationVerdict::from_reply("Passive voice").passed);
        assert!(!ValidationVerdict::from_reply("").rationale.is_empty());
    }

    #[test]
    fn happy_path() {
        let (_tmp, kb) = kb();
        let llm = Script::new(&[], &[], &[]);
        let r = extract_scenario(&report("1"), Some(&kb), &llm, &PipelineConfig::default()).unwrap();
        assert_eq!(r.scenario, night_crossing());
        assert_eq!(r.meta.as_ref().unwrap().road_type, RoadType::Intersection);
        assert_eq!(r.attempts, Attempts { meta_tries: 1, scenario_tries: 1, validation_calls: 2 });
        assert_eq!(kb.lookups(), 1);
        assert!(!r.validation_exhausted());
    }

    #[test]
    fn failed_validation_reexecutes_once() {
        let (_tmp, kb) = kb();
        let llm = Script::new(&[], &[], &["Fail: wrong road", "Pass"]);
        let r = extract_scenario(&report("1"), Some(&kb), &llm, &PipelineConfig::default()).unwrap();
        assert_eq!(r.attempts.meta_tries, 2);
        assert_eq!(r.attempts.scenario_tries, 1);
        assert_eq!(r.attempts.validation_calls, 3);
        // The retry carried the objection, so it is a different request.
        assert_ne!(r.transcript[0].fingerprint, r.transcript[2].fingerprint);
    }

    #[test]
    fn exhaustion_keeps_last_answer() {
        let (_tmp, kb) = kb();
        let llm = Script::new(&[], &[], &["Pass", "Fail: a", "Fail: b"]);
        let r = extract_scenario(&report("1"), Some(&kb), &llm, &PipelineConfig::default()).unwrap();
        assert!(r.scenario_validation_exhausted);
        assert_eq!(r.attempts.scenario_tries, 2);
        assert_eq!(r.scenario, night_crossing());
    }

    #[test]
    fn unparseable_meta_consumes_retry_then_fails() {
        let (_tmp, kb) = kb();
        let bad = "{'Road type': 'Intersection', 'Driving direction': 'S2N'}";
        let llm = Script::new(&[bad, bad], &[], &[]);
        let f = extract_scenario(&report("1"), Some(&kb), &llm, &PipelineConfig::default())
            .unwrap_err();
        assert_eq!(f.attempts.meta_tries, 2);
        assert!(f.error.contains("Number of cars"));
        assert_eq!(llm.validations.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn toggles_skip_lookup_and_validation() {
        let (_tmp, kb) = kb();
        let llm = Script::new(&[], &[], &[]);
        let cfg = PipelineConfig {
            enable_prompt_generation: false,
            enable_self_validation: false,
            ..PipelineConfig::default()
        };
        let r = extract_scenario(&report("1"), Some(&kb), &llm, &cfg).unwrap();
        assert_eq!(kb.lookups(), 0);
        assert_eq!(llm.validations.load(Ordering::SeqCst), 0);
        assert_eq!(llm.calls.load(Ordering::SeqCst), 1);
        assert!(r.meta.is_none());
    }

    #[test]
    fn batch_isolates_failures_and_keeps_order() {
        let (_tmp, kb) = kb();
        let reports: Vec<_> = (0..6).map(|i| report(&i.to_string())).collect();
        let llm = Script::new(&[], &["no road here".to_string(), "nor here".to_string()], &[]);
        let cfg = PipelineConfig { enable_self_validation: false, ..PipelineConfig::default() };
        let out = run_batch(&reports, Some(&kb), &llm, &cfg, 1).unwrap();
        let ids: Vec<_> = out.iter().map(CaseOutcome::case_id).collect();
        assert_eq!(ids, ["0", "1", "2", "3", "4", "5"]);
        assert!(matches!(out[0], CaseOutcome::Failed(_)));
        assert!(out[1..].iter().all(|o| matches!(o, CaseOutcome::Ok(_))));

        assert!(run_batch(&[], Some(&kb), &llm, &cfg, 4).unwrap().is_empty());
        let dup = [report("7"), report("7")];
        assert!(matches!(
            run_batch(&dup, Some(&kb), &llm, &cfg, 1),
            Err(PipelineError::DuplicateCase(_))
        ));
    }
}
