use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

/// The only file in a bundle that carries a timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub created: String,
    pub version: String,
    pub artifacts: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn entry(dir: &Path, name: &str) -> Result<ManifestEntry> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(ManifestEntry {
        name: name.to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

pub fn write_manifest(dir: &Path, names: &[String]) -> Result<Manifest> {
    let manifest = Manifest {
        created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        version: env!("CARGO_PKG_VERSION").to_string(),
        artifacts: names.iter().map(|n| entry(dir, n)).collect::<Result<_>>()?,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Names of listed artifacts that are missing or whose hash changed.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let manifest = read_manifest(dir)?;
    let mut bad = Vec::new();
    for e in &manifest.artifacts {
        match entry(dir, &e.name) {
            Ok(now) if now == *e => {}
            _ => bad.push(e.name.clone()),
        }
    }
    Ok(bad)
}
