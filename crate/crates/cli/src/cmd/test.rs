use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crashscene::dsl::RoadType;
use crashscene::eval::{aggregate_report, check_reproduction, TestReport};
use crashscene::scene::{compile, CompiledScene, GeometryParams};
use crashscene::sim::{render_trace_png, run_all_egos, SimConfig, Trace};

use super::{default_jobs, read_scenario, scenario_files};
use crate::config::FileConfig;
use crate::manifest::{input_files, now_ms, run_id, RunManifest};
use crate::out::OutDir;
use crate::TestArgs;

#[derive(Debug, Serialize)]
struct Failure {
    case_id: String,
    error: String,
}

#[derive(Debug, Serialize)]
struct RunReport {
    #[serde(flatten)]
    report: TestReport,
    failures: Vec<Failure>,
}

struct Done {
    scene: CompiledScene,
    traces: Vec<Trace>,
    verdicts: Vec<bool>,
    ms: f64,
}

fn one(
    stem: &str,
    path: &Path,
    gp: &GeometryParams,
    sim: &SimConfig,
    oracle_road: Option<RoadType>,
) -> Result<Done> {
    let t0 = Instant::now();
    let scenario = read_scenario(path)?;
    let scene = compile(&scenario, gp, Some(stem)).context("compile")?;
    let traces = run_all_egos(&scene, sim).context("simulate")?;
    let verdicts = traces
        .iter()
        .map(|t| check_reproduction(t, &scenario, oracle_road))
        .collect();
    Ok(Done { scene, traces, verdicts, ms: t0.elapsed().as_secs_f64() * 1e3 })
}

pub fn run(args: &TestArgs, file: &FileConfig) -> Result<ExitCode> {
    let started = now_ms();
    let gp = file.geometry;
    gp.check()?;
    let mut sim = file.sim;
    if let Some(s) = args.seed {
        sim.seed = s;
    }
    if let Some(dt) = args.dt {
        sim.dt = dt;
    }
    if let Some(n) = args.max_steps {
        sim.max_steps = n;
    }
    sim.check()?;
    let jobs = args.jobs.or(file.jobs).unwrap_or_else(default_jobs).max(1);
    let files = scenario_files(&args.scenarios)?;
    if files.is_empty() {
        bail!("no scenario files given");
    }
    let oracle_roads: Vec<Option<RoadType>> = files
        .iter()
        .map(|(stem, _)| -> Result<Option<RoadType>> {
            let Some(dir) = &args.oracles else { return Ok(None) };
            let p = dir.join(format!("{stem}.scenario"));
            Ok(if p.is_file() { Some(read_scenario(&p)?.road_network.road_type) } else { None })
        })
        .collect::<Result<_>>()?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let results: Vec<Result<Done>> = pool.install(|| {
        files
            .par_iter()
            .zip(oracle_roads.par_iter())
            .map(|((stem, path), road)| one(stem, path, &gp, &sim, *road))
            .collect()
    });

    let out = OutDir::create(&args.out)?;
    let mut traces = Vec::new();
    let mut verdicts = Vec::new();
    let mut failures = Vec::new();
    let mut timings = serde_json::Map::new();
    for ((stem, _), res) in files.iter().zip(results) {
        match res {
            Ok(done) => {
                timings.insert(stem.clone(), json!(done.ms));
                for t in &done.traces {
                    let base = format!("traces/{stem}.ego{}", t.ego + 1);
                    out.write_json(&format!("{base}.json"), t)?;
                    out.write(&format!("{base}.tsv"), trace_table(t).as_bytes())?;
                    if args.emit_plots {
                        out.write(&format!("plots/{stem}.ego{}.png", t.ego + 1), &render_trace_png(&done.scene, t)?)?;
                    }
                }
                out.write_json(&format!("scenes/{stem}.scene.json"), &done.scene)?;
                traces.extend(done.traces);
                verdicts.extend(done.verdicts);
            }
            Err(e) => {
                eprintln!("{stem}: {e:#}");
                failures.push(Failure { case_id: stem.clone(), error: format!("{e:#}") });
            }
        }
    }
    if traces.is_empty() {
        bail!("every scenario failed to compile or simulate");
    }
    let report = aggregate_report(&traces, args.check_reproduction.then_some(verdicts.as_slice()), None)?;
    let mut summary = report.table();
    for f in &failures {
        summary.push_str(&format!("failed {}: {}\n", f.case_id, f.error));
    }
    print!("{summary}");
    out.write("summary.txt", summary.as_bytes())?;
    out.write_json("report.json", &RunReport { report, failures })?;

    let paths: Vec<&Path> = files.iter().map(|(_, p)| p.as_path()).collect();
    let inputs = input_files(&paths)?;
    let config = json!({ "geometry": gp, "sim": sim, "check_reproduction": args.check_reproduction, "jobs": jobs });
    out.write_json(
        "manifest.json",
        &RunManifest {
            run_id: run_id("test", &config, &inputs),
            command: "test".into(),
            tool_version: env!("CARGO_PKG_VERSION"),
            config,
            inputs,
            cassette_sha256: None,
            reproducible: true,
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
            timings_ms: serde_json::Value::Object(timings),
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

/// Violations block followed by the step table.
fn trace_table(t: &Trace) -> String {
    let mut s = format!(
        "# ego\t{}\n# termination\t{:?}\n# violations\t{}\n",
        t.ego + 1,
        t.termination,
        t.violations.len()
    );
    for v in &t.violations {
        s.push_str(&format!(
            "# {:?}\tstep {}\tvehicles {} and {}\n",
            v.kind,
            v.step,
            v.actors.0 + 1,
            v.actors.1 + 1
        ));
    }
    s.push_str(&t.step_table());
    s
}
