//! Run manifests: resolved parameters plus checksums of every file read or
//! written.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Serialize)]
struct ManifestFile<'a> {
    command: &'a str,
    tool_version: &'a str,
    params: &'a Map<String, Value>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes `<out_dir>/<stem>.manifest.json`.
pub fn write_manifest(
    out_dir: &Path,
    stem: &str,
    command: &str,
    params: &Map<String, Value>,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Result<PathBuf, Failure> {
    let sums = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>, Failure> {
        paths
            .iter()
            .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
            .collect()
    };
    let file = ManifestFile {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        params,
        inputs: sums(inputs)?,
        outputs: sums(outputs)?,
    };
    let path = out_dir.join(format!("{stem}.manifest.json"));
    let mut text = serde_json::to_string_pretty(&file).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    Ok(path)
}
