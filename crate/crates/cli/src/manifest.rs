//! Run manifests. Every artifact-producing command writes `manifest.toml`
//! before doing any work; the `[config]` echo is a complete resolved config,
//! so feeding the manifest back through `--config` replays the run.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::config::Config;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run: RunInfo,
    pub config: Config,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub subcommand: String,
    pub seeds: Vec<u64>,
    pub config_sha256: String,
    pub output: String,
}

/// SHA-256 of the canonical TOML serialization of the resolved config.
pub fn config_sha256(config: &Config) -> Result<String> {
    let text = toml::to_string_pretty(config).context("config is not serializable")?;
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    Ok(out)
}

pub fn write_manifest(
    dir: &Path,
    subcommand: &str,
    seeds: &[u64],
    config: &Config,
) -> Result<PathBuf> {
    let manifest = Manifest {
        run: RunInfo {
            subcommand: subcommand.to_string(),
            seeds: seeds.to_vec(),
            config_sha256: config_sha256(config)?,
            output: dir.display().to_string(),
        },
        config: config.clone(),
    };
    let text = toml::to_string_pretty(&manifest).context("manifest is not serializable")?;
    let path = dir.join("manifest.toml");
    std::fs::write(&path, text)
        .with_context(|| format!("cannot write manifest {}", path.display()))?;
    Ok(path)
}
