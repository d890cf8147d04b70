//! File formats: chain models, CSV logs, scenario descriptions, fit results
//! and run manifests.

pub mod csv_log;
pub mod model_file;
pub mod scenario;

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::identify::FitResult;

pub use csv_log::{read_control_log, read_samples, write_control_log, write_samples};
pub use model_file::{load_model, parse_model, serialize_model};
pub use scenario::{load_scenario, LoadedScenario};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::InvalidInput(format!("TOML encoding: {e}")))
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    pub version: String,
    /// SHA-256 of the command's inputs and settings.
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &[u8], seed: Option<u64>) -> Self {
        Self {
            format_version: MANIFEST_FORMAT_VERSION,
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: sha256_hex(config),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, to_toml(self)?.as_bytes())
    }
}

/// Serialized form of a [`FitResult`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitFile {
    pub format_version: u32,
    pub r_squared: f64,
    pub per_joint_r_squared: Vec<f64>,
    pub residual_norm: f64,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub theta: Vec<f64>,
}

impl From<&FitResult> for FitFile {
    fn from(f: &FitResult) -> Self {
        Self {
            format_version: 1,
            r_squared: f.r_squared,
            per_joint_r_squared: f.per_joint_r_squared.clone(),
            residual_norm: f.residual_norm,
            rank: f.rank,
            singular_values: f.singular_values.iter().copied().collect(),
            theta: f.theta_hat.values().iter().copied().collect(),
        }
    }
}
