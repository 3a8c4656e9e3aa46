//! Rewrites fixtures/fixtures.ndrec from the scripted replies in fixtures/responses.
//!
//! cargo run -p crashscene-core --example regen_fixtures

#[path = "../tests/common/fixture_llm.rs"]
mod fixture_llm;

use crashscene::pipeline::CaseOutcome;

fn main() -> anyhow::Result<()> {
    let path = fixture_llm::fixtures().join("fixtures.ndrec");
    if path.exists() {
        std::fs::remove_file(&path)?;
    }
    for (cfg, outcomes) in fixture_llm::record(&path) {
        for o in outcomes {
            let status = match &o {
                CaseOutcome::Ok(r) => format!("ok after {} scenario attempts", r.attempts.scenario_tries),
                CaseOutcome::Failed(f) => format!("failed: {}", f.error),
            };
            println!(
                "pg={} sv={} {}: {status}",
                cfg.enable_prompt_generation,
                cfg.enable_self_validation,
                o.case_id()
            );
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}
