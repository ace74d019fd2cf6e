//! `config.toml` written next to every output: the resolved parameters of the
//! run, enough to regenerate its artifacts. Worker count is deliberately absent.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

pub const FILE_NAME: &str = "config.toml";

#[derive(Debug, Serialize)]
struct Sidecar<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_digest: Option<&'a str>,
    args: &'a T,
}

pub fn write<T: Serialize>(dir: &Path, command: &str, seed: u64, source_digest: Option<&str>, args: &T) -> Result<()> {
    let sidecar = Sidecar {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        source_digest,
        args,
    };
    let text = toml::to_string(&sidecar).context("serializing run config")?;
    let path = dir.join(FILE_NAME);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

/// Parsed sidecar sitting in the same directory as `artifact`.
pub fn read_next_to(artifact: &Path) -> Result<toml::Table> {
    let dir = artifact.parent().unwrap_or_else(|| Path::new("."));
    let path = dir.join(FILE_NAME);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    text.parse::<toml::Table>()
        .with_context(|| format!("parsing {}", path.display()))
}
