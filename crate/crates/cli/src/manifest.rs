//! Run provenance: config echo, dataset fingerprint, seed and phase timings.

use std::fs;
use std::path::Path;
use std::time::Instant;

use ipgdn::graphio::{EDGES_FILE, FEATURES_FILE, LABELS_FILE, SPLITS_FILE};
use ipgdn::model::ModelConfig;
use ipgdn::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Version string recorded in every manifest.
pub const ARTIFACT_VERSION: &str = concat!("ipgdn-cli v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileFingerprint {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Sizes and SHA-256 digests of the four dataset files, plus one digest
/// over all of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub files: Vec<FileFingerprint>,
    pub sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl DatasetFingerprint {
    pub fn of_dir(dir: &Path) -> Result<Self> {
        let mut combined = Sha256::new();
        let mut files = Vec::new();
        for name in [FEATURES_FILE, EDGES_FILE, LABELS_FILE, SPLITS_FILE] {
            let path = dir.join(name);
            let data = fs::read(&path).map_err(|e| Error::Io { path, source: e })?;
            let digest = hex(&Sha256::digest(&data));
            combined.update(name.as_bytes());
            combined.update((data.len() as u64).to_le_bytes());
            combined.update(digest.as_bytes());
            files.push(FileFingerprint {
                name: name.to_string(),
                bytes: data.len() as u64,
                sha256: digest,
            });
        }
        Ok(DatasetFingerprint {
            files,
            sha256: hex(&combined.finalize()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config: ModelConfig,
    pub seed: u64,
    pub dataset: DatasetFingerprint,
    /// Wall-clock seconds per phase. Left out of files that must be
    /// byte-reproducible.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phases: Vec<Phase>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ModelConfig, dataset: DatasetFingerprint) -> Self {
        RunManifest {
            version: ARTIFACT_VERSION.to_string(),
            command: command.to_string(),
            config: config.clone(),
            seed: config.seed,
            dataset,
            phases: Vec::new(),
        }
    }

    /// Runs `f` and records its wall-clock time under `name`.
    pub fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.phases.push(Phase {
            name: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    /// The manifest without timings.
    pub fn reproducible(&self) -> RunManifest {
        RunManifest {
            phases: Vec::new(),
            ..self.clone()
        }
    }
}
