//! `dmri-uq`: simulate diffusion phantoms, fit them, and check how well the
//! closed-form posteriors are calibrated.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

mod commands;
mod meta;
mod svg;

use commands::{cohort, fit, group, pp, scheme, simulate};

#[derive(Parser, Debug)]
#[command(
    name = "dmri-uq",
    version,
    about = "Bayesian uncertainty for linear diffusion MRI fits",
    args_override_self = true
)]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// JSON object of flag defaults, keyed by long flag name
    /// (e.g. {"trials": 200, "sigma-rel": 0.05}). Flags on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write an acquisition scheme as FSL bvals/bvecs.
    Scheme(scheme::Args),
    /// Simulate noisy measurements of a tensor phantom.
    Simulate(simulate::Args),
    /// Fit every trial of a simulated set.
    Fit(fit::Args),
    /// P-P calibration curves of a derived quantity.
    Pp(pp::Args),
    /// Voxelwise group comparison from per-subject posterior draws.
    Group(group::Args),
    /// Generate a synthetic cohort of posterior draws.
    Cohort(cohort::Args),
}

/// Invalid combination of otherwise well-formed arguments.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 usage, 3 data, 4 numerical.
fn exit_code(err: &anyhow::Error) -> u8 {
    use dmri_uq::Error as E;
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Singular { .. }
                | E::NonPositiveDof { .. }
                | E::CovarianceUndefined { .. }
                | E::NotPositiveSemiDefinite { .. }
                | E::RankDeficient(_)
                | E::RtopUndefined
                | E::BetaFit { .. } => 4,
                _ => 3,
            };
        }
    }
    3
}

/// Re-parses with the config file's entries inserted right after the
/// subcommand, so explicit flags override them.
fn parse_with_config(args: Vec<OsString>) -> Result<Cli, clap::Error> {
    let cli = Cli::try_parse_from(&args)?;
    let Some(path) = cli.config.clone() else { return Ok(cli) };
    let extra = match config_args(&path) {
        Ok(extra) => extra,
        Err(e) => return Err(Cli::command().error(clap::error::ErrorKind::ValueValidation, format!("{e:#}"))),
    };
    let sub = Cli::command().try_get_matches_from(&args)?.subcommand_name().map(str::to_owned);
    let pos =
        sub.and_then(|name| args.iter().position(|a| a.to_str() == Some(name.as_str()))).map_or(args.len(), |p| p + 1);
    let mut merged = args[..pos].to_vec();
    merged.extend(extra.into_iter().map(OsString::from));
    merged.extend_from_slice(&args[pos..]);
    let matches = Cli::command().try_get_matches_from(merged)?;
    Cli::from_arg_matches(&matches)
}

fn config_args(path: &PathBuf) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let obj = value.as_object().context("config must be a JSON object")?;
    let mut out = Vec::new();
    for (key, v) in obj {
        let flag = format!("--{key}");
        match v {
            serde_json::Value::Bool(true) => out.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::String(s) => out.extend([flag, s.clone()]),
            serde_json::Value::Number(n) => out.extend([flag, n.to_string()]),
            serde_json::Value::Array(items) => {
                let joined: Vec<String> =
                    items.iter().map(|i| i.as_str().map_or_else(|| i.to_string(), str::to_owned)).collect();
                out.extend([flag, joined.join(",")]);
            }
            serde_json::Value::Object(_) => anyhow::bail!("config key {key:?} has a nested object"),
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    dmri_uq::par::configure_threads(cli.threads).map_err(|e| usage(format!("--threads: {e}")))?;
    let global = meta::Global { seed: cli.seed, threads: cli.threads };
    match cli.command {
        Command::Scheme(a) => scheme::run(&a, &global),
        Command::Simulate(a) => simulate::run(&a, &global),
        Command::Fit(a) => fit::run(&a, &global),
        Command::Pp(a) => pp::run(&a, &global),
        Command::Group(a) => group::run(&a, &global),
        Command::Cohort(a) => cohort::run(&a, &global),
    }
}

fn main() -> ExitCode {
    let cli = match parse_with_config(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &[&str]) -> Vec<OsString> {
        s.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_values_become_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"trials": 5, "noise": "gaussian", "bias-correct": true, "weighted": false, "shells": [1000, 2000]}"#,
        )
        .unwrap();
        let mut got = config_args(&path).unwrap();
        got.sort();
        let mut want = vec!["--trials", "5", "--noise", "gaussian", "--bias-correct", "--shells", "1000,2000"];
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn command_line_overrides_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"trials": 5, "fa": 0.3}"#).unwrap();
        let p = path.to_str().unwrap();
        let cli =
            parse_with_config(args(&["dmri-uq", "--config", p, "simulate", "--fa", "0.9", "--out", "x"])).unwrap();
        let Command::Simulate(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!((a.trials, a.fa), (5, 0.9));
    }

    #[test]
    fn unknown_config_key_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"no-such-flag": 1}"#).unwrap();
        let p = path.to_str().unwrap();
        let err = parse_with_config(args(&["dmri-uq", "--config", p, "simulate", "--out", "x"])).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code(&usage("bad")), 2);
        assert_eq!(exit_code(&anyhow::Error::new(dmri_uq::Error::Parse("x".into()))), 3);
        assert_eq!(exit_code(&anyhow::Error::new(dmri_uq::Error::NonPositiveDof { dof: 0.0 }).context("fitting")), 4);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), 3);
    }
}
