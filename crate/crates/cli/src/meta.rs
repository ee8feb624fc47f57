use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Global {
    pub seed: u64,
    pub threads: usize,
}

#[derive(Serialize)]
struct Meta<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    threads: usize,
    parallel: bool,
    config: &'a T,
}

/// Writes `meta.json` with the fully resolved configuration of a run.
pub fn write_meta<T: Serialize>(dir: &Path, command: &str, global: &Global, config: &T) -> Result<()> {
    write_meta_over(dir, command, global, config, None)
}

/// As [`write_meta`], keeping the keys of `base` that the run record does not set.
pub fn write_meta_over<T: Serialize>(
    dir: &Path,
    command: &str,
    global: &Global,
    config: &T,
    base: Option<serde_json::Value>,
) -> Result<()> {
    let meta = Meta {
        tool: "dmri-uq",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: global.seed,
        threads: global.threads,
        parallel: dmri_uq::par::is_parallel(),
        config,
    };
    let mut value = serde_json::to_value(&meta)?;
    if let (Some(serde_json::Value::Object(mut base)), serde_json::Value::Object(run)) = (base, value.clone()) {
        base.extend(run);
        value = serde_json::Value::Object(base);
    }
    write_json(&dir.join("meta.json"), &value)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
