//! `crashscene`: extract scenarios from crash reports, compile and simulate them, score extractions.

mod cmd;
mod config;
mod manifest;
mod out;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crashscene::llm::LlmMode;

#[derive(Debug, Parser)]
#[command(name = "crashscene", version, about)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract scenario files from crash-report case directories.
    Extract(ExtractArgs),
    /// Compile scenario files into scene files and coordinate configs.
    Compile(CompileArgs),
    /// Compile, simulate every ego assignment and report violations.
    Test(TestArgs),
    /// Score predicted scenario files against oracle scenario files.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Directory holding `case_<id>` subdirectories.
    pub cases: PathBuf,
    /// Knowledge-base directory.
    pub kb: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_mode)]
    pub llm_mode: Option<LlmMode>,
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Skip the meta stage and knowledge-base retrieval.
    #[arg(long)]
    pub no_prompt_generation: bool,
    /// Skip the validation round after each stage.
    #[arg(long)]
    pub no_self_validation: bool,
    /// Attempts per stage, counting the first.
    #[arg(long)]
    pub max_validation_retries: Option<u32>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompileArgs {
    /// Scenario files or directories of `.scenario` files.
    #[arg(required = true)]
    pub scenarios: Vec<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Scenario files or directories of `.scenario` files.
    #[arg(required = true)]
    pub scenarios: Vec<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Judge each trace as a reproduction of its scenario's crash.
    #[arg(long)]
    pub check_reproduction: bool,
    /// Oracle scenarios (`<case_id>.scenario`) giving the expected road type.
    #[arg(long)]
    pub oracles: Option<PathBuf>,
    /// Write a top-down PNG per trace.
    #[arg(long)]
    pub emit_plots: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Predicted scenarios, or an extract output directory.
    pub predictions: PathBuf,
    pub oracles: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn parse_mode(s: &str) -> Result<LlmMode, String> {
    s.parse().map_err(|e: crashscene::llm::LlmError| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = config::load(cli.config.as_deref()).and_then(|file| match &cli.command {
        Command::Extract(a) => cmd::extract::run(a, &file),
        Command::Compile(a) => cmd::compile::run(a, &file),
        Command::Test(a) => cmd::test::run(a, &file),
        Command::Score(a) => cmd::score::run(a, &file),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
