//! Run manifest and atomic artifact writes.
//!
//! Every artifact is written temp-then-rename so a killed run never leaves a
//! half-written file, and the final manifest lists each artifact with its
//! content hash. Resume scans per-unit record files and trusts only those
//! whose listed artifacts still hash-match on disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::errors::Result;
use crate::eval::EvalRecord;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Hex SHA-256 of a byte string.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write `bytes` to `path` atomically: temp file in the same directory, then
/// rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| "artifact".to_string());
    let tmp = dir.join(format!(".{file_name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// A work unit that produced no record, itemized in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedUnit {
    pub prompt_id: String,
    pub method: String,
    pub reason: String,
}

/// The run manifest: every artifact path (relative to the output directory)
/// with its content hash, plus the itemized skips.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, String>,
    pub skipped: Vec<SkippedUnit>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("manifest serializes");
        out.push('\n');
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Per-unit completion record persisted as soon as a (prompt, method) pair
/// finishes: the eval record plus the content hashes of the artifacts the
/// unit produced. A rerun recomputes the unit unless every hash still
/// matches the file on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitRecord {
    pub record: EvalRecord,
    pub artifacts: BTreeMap<String, String>,
}

impl UnitRecord {
    pub fn path(output_dir: &Path, sanitized_id: &str, method: &str) -> PathBuf {
        output_dir
            .join("records")
            .join(format!("{sanitized_id}.{method}.json"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self).expect("unit record serializes");
        json.push('\n');
        write_atomic(path, json.as_bytes())
    }

    /// Load and verify a previously written unit. Returns `None` when the
    /// file is absent, unreadable, or any listed artifact is missing or
    /// hash-mismatched.
    pub fn load_verified(path: &Path, output_dir: &Path) -> Option<Self> {
        let raw = std::fs::read_to_string(path).ok()?;
        let unit: UnitRecord = serde_json::from_str(&raw).ok()?;
        for (relative, expected) in &unit.artifacts {
            let bytes = std::fs::read(output_dir.join(relative)).ok()?;
            if content_hash(&bytes) != *expected {
                return None;
            }
        }
        Some(unit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> EvalRecord {
        EvalRecord {
            prompt_id: "p1".to_string(),
            method: "CONTINUATION".to_string(),
            completion: "words".to_string(),
            attribute_score: Some(0.5),
            success: Some(false),
            perplexity: Some(12.0),
            relevance: Some(0.4),
            elapsed_seconds: 0.0,
            flags: Vec::new(),
        }
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/a.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert!(!dir.path().join("nested/.a.txt.tmp").exists());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(content_hash(b"abc"), content_hash(b"abc"));
        assert_ne!(content_hash(b"abc"), content_hash(b"abd"));
        assert_eq!(content_hash(b"").len(), 64);
    }

    #[test]
    fn unit_round_trip_verifies() {
        let dir = tempfile::tempdir().unwrap();
        let artifact_rel = "corpus/p1.jsonl";
        let artifact_abs = dir.path().join(artifact_rel);
        write_atomic(&artifact_abs, b"{\"idx\":0}\n").unwrap();

        let unit = UnitRecord {
            record: record(),
            artifacts: BTreeMap::from([(artifact_rel.to_string(), content_hash(b"{\"idx\":0}\n"))]),
        };
        let path = UnitRecord::path(dir.path(), "p1", "CONTINUATION");
        unit.write(&path).unwrap();

        let loaded = UnitRecord::load_verified(&path, dir.path()).unwrap();
        assert_eq!(loaded.record, unit.record);
    }

    #[test]
    fn tampered_artifact_invalidates_the_unit() {
        let dir = tempfile::tempdir().unwrap();
        let artifact_rel = "corpus/p1.jsonl";
        write_atomic(&dir.path().join(artifact_rel), b"original").unwrap();

        let unit = UnitRecord {
            record: record(),
            artifacts: BTreeMap::from([(artifact_rel.to_string(), content_hash(b"original"))]),
        };
        let path = UnitRecord::path(dir.path(), "p1", "CONTINUATION");
        unit.write(&path).unwrap();

        write_atomic(&dir.path().join(artifact_rel), b"tampered").unwrap();
        assert!(UnitRecord::load_verified(&path, dir.path()).is_none());
    }

    #[test]
    fn missing_artifact_invalidates_the_unit() {
        let dir = tempfile::tempdir().unwrap();
        let unit = UnitRecord {
            record: record(),
            artifacts: BTreeMap::from([("gone.json".to_string(), content_hash(b"x"))]),
        };
        let path = UnitRecord::path(dir.path(), "p1", "CONTINUATION");
        unit.write(&path).unwrap();
        assert!(UnitRecord::load_verified(&path, dir.path()).is_none());
    }

    #[test]
    fn manifest_json_is_deterministic() {
        let manifest = Manifest {
            artifacts: BTreeMap::from([
                ("b.json".to_string(), "22".to_string()),
                ("a.json".to_string(), "11".to_string()),
            ]),
            skipped: Vec::new(),
        };
        assert_eq!(manifest.to_json(), manifest.clone().to_json());
        let a_pos = manifest.to_json().find("a.json").unwrap();
        let b_pos = manifest.to_json().find("b.json").unwrap();
        assert!(a_pos < b_pos, "artifacts serialize in sorted order");
    }
}
