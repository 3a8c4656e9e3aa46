use std::process::ExitCode;

use anyhow::{Context, Result};
use serde_json::json;

use crashscene::dsl::scenario_to_json;
use crashscene::scene::compile;

use super::{read_scenario, scenario_files};
use crate::config::FileConfig;
use crate::manifest::{input_files, now_ms, run_id, RunManifest};
use crate::out::OutDir;
use crate::CompileArgs;

pub fn run(args: &CompileArgs, file: &FileConfig) -> Result<ExitCode> {
    let started = now_ms();
    let gp = file.geometry;
    gp.check()?;
    let files = scenario_files(&args.scenarios)?;
    let out = OutDir::create(&args.out)?;
    for (stem, path) in &files {
        let scenario = read_scenario(path)?;
        let scene = compile(&scenario, &gp, Some(stem)).with_context(|| format!("compiling {}", path.display()))?;
        out.write_json(&format!("scenes/{stem}.scene.json"), &scene)?;
        out.write_json(&format!("scenes/{stem}.coords.json"), &scene.coordinate_config())?;
        out.write_json(&format!("scenes/{stem}.scenario.json"), &scenario_to_json(&scenario))?;
        for w in &scene.warnings {
            println!("{stem}: warning: {w}");
        }
        println!("{stem}: {} lanes, {} actors", scene.lanes.len(), scene.actors.len());
    }
    let paths: Vec<&std::path::Path> = files.iter().map(|(_, p)| p.as_path()).collect();
    let inputs = input_files(&paths)?;
    let config = json!({ "geometry": gp });
    out.write_json(
        "manifest.json",
        &RunManifest {
            run_id: run_id("compile", &config, &inputs),
            command: "compile".into(),
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
