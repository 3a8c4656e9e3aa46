pub mod compile;
pub mod extract;
pub mod score;
pub mod test;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use crashscene::dsl::{parse_scenario, Scenario};

/// Expands files and directories into `(stem, path)` pairs of `.scenario` files, sorted by stem.
pub fn scenario_files(inputs: &[PathBuf]) -> Result<Vec<(String, PathBuf)>> {
    let mut found: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut add = |p: PathBuf| -> Result<()> {
        let stem = p
            .file_stem()
            .and_then(|s| s.to_str())
            .with_context(|| format!("bad file name {}", p.display()))?
            .to_string();
        if let Some(prev) = found.insert(stem.clone(), p.clone()) {
            bail!("case {stem} given twice: {} and {}", prev.display(), p.display());
        }
        Ok(())
    };
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(input)
                .with_context(|| format!("reading {}", input.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "scenario"))
                .collect();
            entries.sort();
            for p in entries {
                add(p)?;
            }
        } else if input.is_file() {
            add(input.clone())?;
        } else {
            bail!("no such file or directory: {}", input.display());
        }
    }
    Ok(found.into_iter().collect())
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scenario(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
