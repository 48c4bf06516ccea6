//! Run manifests: everything needed to regenerate a command's outputs.

use std::path::Path;

use rica::evalsim::{BenchConfig, MethodKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmixSettings {
    pub input: String,
    pub method: MethodKind,
    pub seed: u64,
    pub sweeps: Option<usize>,
    pub mcd_starts: usize,
    pub true_mixing: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    pub bench: BenchConfig,
    /// Whether measured runtimes are written to trials.csv.
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    None,
    Bowl,
    Biloop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcorSettings {
    pub input: String,
    pub cols_x: Vec<usize>,
    pub cols_y: Vec<usize>,
    pub transform: Transform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "lowercase")]
pub enum Invocation {
    Unmix(UnmixSettings),
    Bench(BenchSettings),
    Dcor(DcorSettings),
}

impl Invocation {
    pub fn seed(&self) -> u64 {
        match self {
            Invocation::Unmix(u) => u.seed,
            Invocation::Bench(b) => b.bench.seed,
            Invocation::Dcor(_) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &str, bytes: &[u8]) -> Self {
        InputDigest {
            path: path.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub invocation: Invocation,
    pub seed: u64,
    pub version: String,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("manifest {}: {e}", path.display())))?;
        if m.seed != m.invocation.seed() {
            return Err(CliError::Config(format!(
                "seed: manifest seed {} disagrees with the configuration ({})",
                m.seed,
                m.invocation.seed()
            )));
        }
        Ok(m)
    }
}
