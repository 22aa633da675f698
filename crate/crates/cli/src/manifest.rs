//! Run manifests: written before any computation, replayable later.

use std::fs;
use std::path::{Path, PathBuf};

use crate::{CliError, Command};

pub const MANIFEST_FILE: &str = "manifest.txt";

fn version() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

/// `(name, config, seed, out)` of a command.
fn describe(cmd: &Command) -> (&'static str, Option<&Path>, Option<u64>, &Path) {
    match cmd {
        Command::GenData { seed, out, .. } => ("gen-data", None, Some(*seed), out),
        Command::Train { config, seed, out, .. } => ("train", Some(config), *seed, out),
        Command::Eval { seed, out, .. } => ("eval", None, Some(*seed), out),
        Command::Universality { out, .. } => ("universality", None, None, out),
        Command::AdversarialCheck { seed, out, .. } => ("adversarial-check", None, Some(*seed), out),
        Command::Replay { .. } => unreachable!("replays are resolved before dispatch"),
    }
}

pub fn write(cmd: &Command, argv: &[String]) -> Result<(), CliError> {
    let (name, config, seed, out) = describe(cmd);
    fs::create_dir_all(out)?;
    let cwd = std::env::current_dir()?;
    let mut text = String::new();
    text += &format!("command = {name}\n");
    text += &format!("config = {}\n", config.map(|c| c.display().to_string()).unwrap_or_default());
    text += &format!("seed = {}\n", seed.map(|s| s.to_string()).unwrap_or_default());
    text += &format!("version = {}\n", version());
    text += &format!("out = {}\n", out.display());
    text += &format!("cwd = {}\n", cwd.display());
    for a in argv {
        if a.contains('\n') {
            return Err(CliError::Failed("arguments with newlines cannot be recorded".into()));
        }
        text += &format!("arg = {a}\n");
    }
    iqpkit::train::write_atomic(&out.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(())
}

/// Working directory and argument list recorded in a manifest, with the
/// output directory swapped for `out` when given.
pub fn load_invocation(path: &Path, out: Option<&Path>) -> Result<(PathBuf, Vec<String>), CliError> {
    let text = fs::read_to_string(path)?;
    let mut cwd = None;
    let mut args = Vec::new();
    let mut recorded_version = None;
    for (i, line) in text.lines().enumerate() {
        let (k, v) = line
            .split_once(" = ")
            .or_else(|| line.strip_suffix(" =").map(|k| (k, "")))
            .ok_or_else(|| CliError::Failed(format!("manifest line {}: malformed", i + 1)))?;
        match k {
            "cwd" => cwd = Some(PathBuf::from(v)),
            "arg" => args.push(v.to_string()),
            "version" => recorded_version = Some(v.to_string()),
            _ => {}
        }
    }
    if recorded_version.as_deref() != Some(version().as_str()) {
        eprintln!(
            "warning: manifest was written by {}, replaying with {}",
            recorded_version.unwrap_or_else(|| "an unknown version".into()),
            version()
        );
    }
    let cwd = cwd.ok_or_else(|| CliError::Failed("manifest has no cwd".into()))?;
    if let Some(out) = out {
        let out = std::env::current_dir()?.join(out).display().to_string();
        if let Some(a) = args.iter_mut().find(|a| a.starts_with("--out=")) {
            *a = format!("--out={out}");
        } else {
            let pos = args
                .iter()
                .position(|a| a == "--out")
                .ok_or_else(|| CliError::Failed("manifest has no --out argument".into()))?;
            match args.get_mut(pos + 1) {
                Some(v) => *v = out,
                None => return Err(CliError::Failed("manifest --out has no value".into())),
            }
        }
    }
    Ok((cwd, args))
}
