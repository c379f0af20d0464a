//! Dataset preprocessing: center each defective skull with a margin, move
//! the defect with it, resample both to the model grid, and record the
//! translation so predictions can be mapped back after inference.

use crate::manifest::{CaseEntry, DatasetManifest, ManifestError};
use craniaug_core::nrrd::{load_nrrd, save_nrrd_with, NrrdEncoding, NrrdType};
use craniaug_core::volume::{BinaryMask, ResampleMode};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Default margin between the skull bounding box and the grid faces, in
/// voxels at the native grid (chosen to leave room for defects that reach
/// past the defective outline; configurable).
pub const DEFAULT_CENTER_OFFSET: usize = 16;

/// Default model grid.
pub const DEFAULT_MODEL_DIMS: (usize, usize, usize) = (256, 256, 256);

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("case {case_id}: {message}")]
    Case { case_id: String, message: String },
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Record of what preprocessing did to one case; needed to undo it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessRecord {
    pub case_id: String,
    /// Integer translation applied to both channels at native resolution.
    pub translation: (i64, i64, i64),
    pub native_dims: (usize, usize, usize),
    pub native_spacing: (f64, f64, f64),
    pub target_dims: (usize, usize, usize),
    /// Defect voxels lost by the shared translation (nonzero only when the
    /// defect pokes out of the grid after centering).
    pub defect_voxels_dropped: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub records: Vec<PreprocessRecord>,
    pub out_dir: PathBuf,
}

fn case_err(case_id: &str) -> impl FnOnce(String) -> PreprocessError + '_ {
    move |message| PreprocessError::Case {
        case_id: case_id.to_string(),
        message,
    }
}

/// Preprocess every case of a manifest into `out_dir`, writing centered
/// and resampled channels, a per-case record JSON, and a new manifest.
pub fn preprocess_dataset(
    manifest: &DatasetManifest,
    offset: usize,
    target_dims: (usize, usize, usize),
    out_dir: &Path,
) -> Result<(DatasetManifest, PreprocessReport), PreprocessError> {
    manifest.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| PreprocessError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let mut records = Vec::new();
    let mut cases = Vec::new();
    for case in &manifest.cases {
        let id = case.case_id.as_str();
        let skull_path = manifest.skull_path(case)?;
        let skull = load_nrrd(&skull_path)
            .map_err(|e| case_err(id)(format!("{}: {e}", skull_path.display())))?
            .binarize(0.5);
        let defect_path = manifest.defect_path(case);
        let defect = load_nrrd(&defect_path)
            .map_err(|e| case_err(id)(format!("{}: {e}", defect_path.display())))?
            .binarize(0.5);

        let native_dims = skull.dims();
        let native_spacing = skull.spacing();
        let (skull_centered, translation) = skull
            .center_with_offset(offset)
            .map_err(|e| case_err(id)(e.to_string()))?;
        let defect_centered = defect.translate(translation);
        let dropped = defect.foreground_count() - defect_centered.foreground_count();

        let resample = |m: &BinaryMask| -> Result<BinaryMask, PreprocessError> {
            let v = m
                .as_volume()
                .resample(target_dims, ResampleMode::Nearest)
                .map_err(|e| case_err(id)(e.to_string()))?;
            BinaryMask::from_volume(v).map_err(|e| case_err(id)(e.to_string()))
        };
        let skull_out = resample(&skull_centered)?;
        let defect_out = resample(&defect_centered)?;

        let skull_name = format!("{id}_defective_skull.nrrd");
        let defect_name = format!("{id}_defect.nrrd");
        save_nrrd_with(
            skull_out.as_volume(),
            out_dir.join(&skull_name),
            NrrdType::Uint8,
            NrrdEncoding::Gzip,
        )
        .map_err(|e| case_err(id)(e.to_string()))?;
        save_nrrd_with(
            defect_out.as_volume(),
            out_dir.join(&defect_name),
            NrrdType::Uint8,
            NrrdEncoding::Gzip,
        )
        .map_err(|e| case_err(id)(e.to_string()))?;

        let record = PreprocessRecord {
            case_id: id.to_string(),
            translation,
            native_dims,
            native_spacing,
            target_dims,
            defect_voxels_dropped: dropped,
        };
        let rec_path = out_dir.join(format!("{id}_preprocess.json"));
        std::fs::write(
            &rec_path,
            serde_json::to_string_pretty(&record).expect("serializable"),
        )
        .map_err(|e| PreprocessError::Io {
            path: rec_path,
            source: e,
        })?;
        records.push(record);
        cases.push(CaseEntry {
            case_id: id.to_string(),
            defective_skull: Some(PathBuf::from(skull_name)),
            defect: PathBuf::from(defect_name),
            complete_skull: None,
        });
    }
    let out_manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        cases,
    };
    out_manifest
        .save(out_dir.join("manifest.json"))
        .map_err(PreprocessError::Manifest)?;
    Ok((
        out_manifest,
        PreprocessReport {
            records,
            out_dir: out_dir.to_path_buf(),
        },
    ))
}
