use std::process::ExitCode;

use anyhow::{bail, Result};
use serde_json::json;

use crashscene::eval::{score_extraction, OracleRecord};

use super::{read_scenario, scenario_files};
use crate::config::FileConfig;
use crate::manifest::{input_files, now_ms, run_id, RunManifest};
use crate::out::OutDir;
use crate::ScoreArgs;

pub fn run(args: &ScoreArgs, _file: &FileConfig) -> Result<ExitCode> {
    let started = now_ms();
    // An extract output directory keeps its scenarios one level down.
    let nested = args.predictions.join("scenarios");
    let pred_dir = if nested.is_dir() { nested } else { args.predictions.clone() };
    let preds = scenario_files(std::slice::from_ref(&pred_dir))?;
    let oracles = scenario_files(std::slice::from_ref(&args.oracles))?;
    let no_oracle: Vec<&str> = preds
        .iter()
        .filter(|(id, _)| !oracles.iter().any(|(o, _)| o == id))
        .map(|(id, _)| id.as_str())
        .collect();
    let no_prediction: Vec<&str> = oracles
        .iter()
        .filter(|(id, _)| !preds.iter().any(|(p, _)| p == id))
        .map(|(id, _)| id.as_str())
        .collect();
    if !no_oracle.is_empty() || !no_prediction.is_empty() {
        let mut msg = String::from("unmatched cases:");
        for id in &no_oracle {
            msg.push_str(&format!(" {id} (no oracle)"));
        }
        for id in &no_prediction {
            msg.push_str(&format!(" {id} (no prediction)"));
        }
        bail!(msg);
    }
    if preds.is_empty() {
        bail!("no scenario files in {}", pred_dir.display());
    }
    let predictions = preds
        .iter()
        .map(|(id, p)| Ok((id.clone(), read_scenario(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let records = oracles
        .iter()
        .map(|(id, p)| Ok(OracleRecord { case_id: id.clone(), scenario: read_scenario(p)? }))
        .collect::<Result<Vec<_>>>()?;
    let report = score_extraction(&predictions, &records)?;
    let table = report.table();
    print!("{table}");

    let out = OutDir::create(&args.out)?;
    out.write_json("accuracy.json", &report)?;
    out.write("summary.txt", table.as_bytes())?;
    let paths: Vec<&std::path::Path> = preds.iter().chain(&oracles).map(|(_, p)| p.as_path()).collect();
    let inputs = input_files(&paths)?;
    let config = json!({});
    out.write_json(
        "manifest.json",
        &RunManifest {
            run_id: run_id("score", &config, &inputs),
            command: "score".into(),
            tool_version: env!("CARGO_PKG_VERSION"),
            config,
            inputs,
            cassette_sha256: None,
            reproducible: true,
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
            timings_ms: json!({}),
        },
    )?;
    Ok(ExitCode::SUCCESS)
}
