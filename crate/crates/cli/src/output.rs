//! Output files: JSON results with embedded provenance, CSV field dumps.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Resolved configuration echoed into every output file, with its hash.
#[derive(Debug, Serialize)]
pub struct Provenance {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(command: &str, config: Vec<(String, String)>) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        for (k, v) in &config {
            hasher.update(k.as_bytes());
            hasher.update(b"=");
            hasher.update(v.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Provenance {
            command: command.to_string(),
            config,
            config_sha256: hex,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub provenance: Provenance,
    pub result: T,
}

pub fn out_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os("HURWITZ_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, report: &Report<T>) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}

pub fn write_csv(dir: &Path, name: &str, header: &str, rows: &[String]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut text = String::with_capacity(rows.len() * 32 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}
