use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde_json::json;
use sha2::{Digest, Sha256};

use crashscene::dsl::{scenario_to_json, validate};
use crashscene::kb::load_knowledge_base;
use crashscene::llm::{BackendConfig, Gateway, LlmMode};
use crashscene::pipeline::{run_batch, CaseOutcome};
use crashscene::report::read_cases;

use super::default_jobs;
use crate::config::FileConfig;
use crate::manifest::{file_digest, now_ms, run_id, InputFile, RunManifest};
use crate::out::OutDir;
use crate::ExtractArgs;

pub fn run(args: &ExtractArgs, file: &FileConfig) -> Result<ExitCode> {
    let started = now_ms();
    let mut pipeline = file.pipeline;
    if args.no_prompt_generation {
        pipeline.enable_prompt_generation = false;
    }
    if args.no_self_validation {
        pipeline.enable_self_validation = false;
    }
    if let Some(n) = args.max_validation_retries {
        pipeline.max_validation_retries = n;
    }
    let mut backend = BackendConfig::default();
    file.llm.apply(&mut backend)?;
    if let Some(m) = args.llm_mode {
        backend.mode = m;
    }
    if let Some(c) = &args.cassette {
        backend.cassette = Some(c.clone());
    }
    if let Some(m) = &args.model {
        backend.model = m.clone();
    }
    if let Some(e) = &args.endpoint {
        backend.endpoint = e.clone();
    }
    let jobs = args.jobs.or(file.jobs).unwrap_or_else(default_jobs).max(1);

    let reports = read_cases(&args.cases).with_context(|| format!("reading cases from {}", args.cases.display()))?;
    if reports.is_empty() {
        bail!("no cases found in {}", args.cases.display());
    }
    let kb = if pipeline.enable_prompt_generation {
        Some(load_knowledge_base(&args.kb).with_context(|| format!("loading knowledge base {}", args.kb.display()))?)
    } else {
        None
    };
    let gateway = Gateway::from_config(&backend)?;
    let out = OutDir::create(&args.out)?;

    let t0 = Instant::now();
    let outcomes = run_batch(&reports, kb.as_ref(), &gateway, &pipeline, jobs)?;
    let elapsed_ms = t0.elapsed().as_secs_f64() * 1e3;

    let mut ok = 0usize;
    let mut validation_calls = 0u32;
    let mut rows = Vec::new();
    for o in &outcomes {
        let id = o.case_id();
        out.write_json(&format!("audit/{id}.json"), o)?;
        match o {
            CaseOutcome::Ok(r) => {
                ok += 1;
                validation_calls += r.attempts.validation_calls;
                let issues = validate(&r.scenario);
                out.write(&format!("scenarios/{id}.scenario"), r.scenario.to_string().as_bytes())?;
                out.write_json(&format!("scenarios/{id}.json"), &scenario_to_json(&r.scenario))?;
                rows.push(json!({
                    "case_id": id,
                    "status": "ok",
                    "attempts": r.attempts,
                    "validation_exhausted": r.validation_exhausted(),
                    "valid": issues.is_empty(),
                    "kb_entry": r.kb_entry,
                    "warnings": r.warnings,
                }));
                println!("{id}: ok ({} scenario attempts)", r.attempts.scenario_tries);
            }
            CaseOutcome::Failed(f) => {
                validation_calls += f.attempts.validation_calls;
                rows.push(json!({
                    "case_id": id,
                    "status": "failed",
                    "attempts": f.attempts,
                    "error": f.error,
                }));
                println!("{id}: failed: {}", f.error);
            }
        }
    }
    let kb_lookups = kb.as_ref().map_or(0, |k| k.lookups());
    out.write_json(
        "audit/summary.json",
        &json!({
            "enable_prompt_generation": pipeline.enable_prompt_generation,
            "enable_self_validation": pipeline.enable_self_validation,
            "max_validation_retries": pipeline.max_validation_retries,
            "kb_lookups": kb_lookups,
            "validation_calls": validation_calls,
            "transport_calls": gateway.transport_calls(),
            "cases": rows,
        }),
    )?;

    let inputs: Vec<InputFile> = reports
        .iter()
        .map(|r| {
            let mut h = Sha256::new();
            h.update(r.summary.as_bytes());
            if let Some(s) = &r.sketch {
                h.update(s.sha256_hex().as_bytes());
            }
            InputFile {
                path: args.cases.join(format!("case_{}", r.case_id)).display().to_string(),
                sha256: hex::encode(h.finalize()),
            }
        })
        .collect();
    // The API key is read from the environment and never part of the config.
    let config = json!({ "pipeline": pipeline, "llm": backend, "jobs": jobs, "kb": args.kb });
    let cassette_sha256 = backend.cassette.as_deref().filter(|p| p.is_file()).map(file_digest).transpose()?;
    let manifest = RunManifest {
        run_id: run_id("extract", &config, &inputs),
        command: "extract".into(),
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
        inputs,
        reproducible: backend.mode == LlmMode::Replay && cassette_sha256.is_some(),
        cassette_sha256,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        timings_ms: json!({ "extraction_total": elapsed_ms }),
    };
    out.write_json("manifest.json", &manifest)?;
    println!(
        "{ok}/{} cases extracted; kb lookups {kb_lookups}; validation calls {validation_calls}; output in {}",
        outcomes.len(),
        out.root().display()
    );
    Ok(if ok > 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
