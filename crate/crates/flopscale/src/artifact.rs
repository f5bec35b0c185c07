//! Versioned JSON artifacts with input provenance.

use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: &str = "1";
pub const TOOL_NAME: &str = "flopscale";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    LossSurface,
    PowerLaw,
    Parabola,
    RuntimeFit,
    Plan,
    Counts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    pub inputs: Vec<InputDigest>,
}

impl Default for Provenance {
    fn default() -> Self {
        Provenance { tool: TOOL_NAME.into(), tool_version: TOOL_VERSION.into(), inputs: Vec::new() }
    }
}

impl Provenance {
    /// Records the digest of `bytes` read from `path`.
    pub fn with_input(mut self, path: &str, bytes: &[u8]) -> Self {
        self.inputs.push(InputDigest { path: path.into(), sha256: sha256_hex(bytes) });
        self
    }

    pub fn with_file(self, path: &Path) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(self.with_input(&path.display().to_string(), &bytes))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("unsupported schema_version {found:?} (expected {SCHEMA_VERSION:?})")]
    SchemaVersion { found: String },
    #[error("expected a {expected:?} artifact, found {found:?}")]
    Kind { expected: ArtifactKind, found: ArtifactKind },
    #[error("invalid artifact: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactFile {
    pub schema_version: String,
    pub kind: ArtifactKind,
    pub payload: Value,
    pub provenance: Provenance,
}

impl ArtifactFile {
    pub fn new<T: Serialize>(kind: ArtifactKind, payload: &T, provenance: Provenance) -> Result<Self, ArtifactError> {
        Ok(ArtifactFile { schema_version: SCHEMA_VERSION.into(), kind, payload: serde_json::to_value(payload)?, provenance })
    }

    /// Canonical text: pretty-printed, keys sorted, trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ArtifactError> {
        let probe: Value = serde_json::from_str(text)?;
        match probe.get("schema_version").and_then(Value::as_str) {
            Some(SCHEMA_VERSION) => {}
            other => return Err(ArtifactError::SchemaVersion { found: other.unwrap_or("<missing>").into() }),
        }
        Ok(serde_json::from_value(probe)?)
    }

    pub fn payload_as<T: DeserializeOwned>(&self, expected: ArtifactKind) -> Result<T, ArtifactError> {
        if self.kind != expected {
            return Err(ArtifactError::Kind { expected, found: self.kind });
        }
        Ok(T::deserialize(&self.payload)?)
    }

    pub fn read(path: &Path) -> Result<Self, ArtifactError> {
        let text = std::fs::read_to_string(path).map_err(|source| ArtifactError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), ArtifactError> {
        std::fs::write(path, self.to_json()).map_err(|source| ArtifactError::Io { path: path.display().to_string(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use flopscale_core::LossSurfaceFit;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn surface_round_trip() {
        let s = LossSurfaceFit::from_coefficients(16.22, 17.31, 0.11, 0.73, 0.67, 0.24);
        let a = ArtifactFile::new(ArtifactKind::LossSurface, &s, Provenance::default().with_input("runs.csv", b"x")).unwrap();
        let text = a.to_json();
        let b = ArtifactFile::from_json(&text).unwrap();
        assert_eq!(b.to_json(), text);
        assert_eq!(b.payload_as::<LossSurfaceFit>(ArtifactKind::LossSurface).unwrap(), s);
        assert!(matches!(b.payload_as::<LossSurfaceFit>(ArtifactKind::Plan), Err(ArtifactError::Kind { .. })));
    }

    #[test]
    fn schema_version_checked() {
        let a = ArtifactFile::new(ArtifactKind::Counts, &1u8, Provenance::default()).unwrap();
        let text = a.to_json().replace("\"schema_version\": \"1\"", "\"schema_version\": \"2\"");
        assert!(matches!(ArtifactFile::from_json(&text), Err(ArtifactError::SchemaVersion { .. })));
        assert!(matches!(ArtifactFile::from_json("{}"), Err(ArtifactError::SchemaVersion { .. })));
    }
}
