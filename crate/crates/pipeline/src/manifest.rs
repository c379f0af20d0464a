//! Dataset manifests: JSON case listings that all batch operations consume.
//!
//! A manifest names cases with their mask files. Paths may be absolute or
//! relative to `root` (itself resolved against the manifest's directory).
//! Validation reports every missing file at once rather than stopping at
//! the first.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("I/O error reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed manifest JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate case_id {0:?}")]
    DuplicateId(String),
    #[error("manifest references missing files:\n{}", paths.iter().map(|p| format!("  {}", p.display())).collect::<Vec<_>>().join("\n"))]
    MissingFiles { paths: Vec<PathBuf> },
    #[error("case {case_id:?} lacks the required {channel} channel")]
    MissingChannel {
        case_id: String,
        channel: &'static str,
    },
}

/// One dataset case: a defect mask, usually alongside the defective skull
/// it was cut from, optionally with the complete skull.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defective_skull: Option<PathBuf>,
    pub defect: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complete_skull: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default)]
    pub root: PathBuf,
    pub cases: Vec<CaseEntry>,
}

impl DatasetManifest {
    /// Resolve a case path against the manifest root.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn case(&self, case_id: &str) -> Option<&CaseEntry> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    /// Check id uniqueness and that every referenced file exists; missing
    /// files are aggregated into one error.
    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut seen = HashSet::new();
        for case in &self.cases {
            if !seen.insert(&case.case_id) {
                return Err(ManifestError::DuplicateId(case.case_id.clone()));
            }
        }
        let mut missing = Vec::new();
        for case in &self.cases {
            for path in [
                case.defective_skull.as_deref(),
                Some(case.defect.as_path()),
                case.complete_skull.as_deref(),
            ]
            .into_iter()
            .flatten()
            {
                let full = self.resolve(path);
                if !full.is_file() {
                    missing.push(full);
                }
            }
        }
        if !missing.is_empty() {
            return Err(ManifestError::MissingFiles { paths: missing });
        }
        Ok(())
    }

    /// Paths of the defective skull channel, required present.
    pub fn skull_path(&self, case: &CaseEntry) -> Result<PathBuf, ManifestError> {
        case.defective_skull
            .as_ref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| ManifestError::MissingChannel {
                case_id: case.case_id.clone(),
                channel: "defective_skull",
            })
    }

    pub fn defect_path(&self, case: &CaseEntry) -> PathBuf {
        self.resolve(&case.defect)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ManifestError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path.as_ref(), json).map_err(|e| ManifestError::Io {
            path: path.as_ref().to_path_buf(),
            source: e,
        })
    }
}

/// Load and validate a manifest. A relative `root` is resolved against the
/// manifest file's directory; an empty `root` means that directory itself.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, ManifestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ManifestError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut manifest: DatasetManifest = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    manifest.root = if manifest.root.as_os_str().is_empty() {
        base
    } else if manifest.root.is_relative() {
        base.join(&manifest.root)
    } else {
        manifest.root.clone()
    };
    manifest.validate()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(path: &Path) {
        std::fs::write(path, b"x").unwrap();
    }

    #[test]
    fn empty_manifest_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let mpath = dir.path().join("m.json");
        std::fs::write(&mpath, r#"{"cases": []}"#).unwrap();
        let m = load_manifest(&mpath).unwrap();
        assert!(m.cases.is_empty());
        assert_eq!(m.root, dir.path());
    }

    #[test]
    fn duplicate_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        touch(&dir.path().join("a.nrrd"));
        let mpath = dir.path().join("m.json");
        std::fs::write(
            &mpath,
            r#"{"cases": [
                {"case_id": "c1", "defect": "a.nrrd"},
                {"case_id": "c1", "defect": "a.nrrd"}
            ]}"#,
        )
        .unwrap();
        match load_manifest(&mpath) {
            Err(ManifestError::DuplicateId(id)) => assert_eq!(id, "c1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_files_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        touch(&dir.path().join("present.nrrd"));
        let mpath = dir.path().join("m.json");
        std::fs::write(
            &mpath,
            r#"{"cases": [
                {"case_id": "c1", "defective_skull": "present.nrrd", "defect": "gone.nrrd"},
                {"case_id": "c2", "defect": "also_gone.nrrd"}
            ]}"#,
        )
        .unwrap();
        match load_manifest(&mpath) {
            Err(ManifestError::MissingFiles { paths }) => {
                assert_eq!(paths.len(), 2);
                assert!(paths[0].ends_with("gone.nrrd"));
                assert!(paths[1].ends_with("also_gone.nrrd"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_json_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mpath = dir.path().join("m.json");
        std::fs::write(&mpath, "{not json").unwrap();
        assert!(matches!(load_manifest(&mpath), Err(ManifestError::Json(_))));
    }

    #[test]
    fn skull_channel_required_reports_case() {
        let dir = tempfile::tempdir().unwrap();
        touch(&dir.path().join("d.nrrd"));
        let mpath = dir.path().join("m.json");
        std::fs::write(
            &mpath,
            r#"{"cases": [{"case_id": "c9", "defect": "d.nrrd"}]}"#,
        )
        .unwrap();
        let m = load_manifest(&mpath).unwrap();
        match m.skull_path(&m.cases[0]) {
            Err(ManifestError::MissingChannel { case_id, channel }) => {
                assert_eq!(case_id, "c9");
                assert_eq!(channel, "defective_skull");
            }
            other => panic!("{other:?}"),
        }
    }
}
