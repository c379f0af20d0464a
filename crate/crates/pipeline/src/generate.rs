//! Batch generation of synthetic case pairs.
//!
//! Two methods: `geo` draws a random case and runs the online geometric
//! augmentation; `ir` draws two distinct cases and synthesizes an
//! intermediate shape by deformable registration. Every sample is produced
//! from its own child generator `derive(master_seed, sample_index)`, so the
//! output set is a pure function of (manifest, config, master_seed) and is
//! byte-identical at any parallelism; any single sample can be regenerated
//! in isolation from its provenance record.

use crate::manifest::{DatasetManifest, ManifestError};
use craniaug_core::geoaug::{augment, CasePair, GeoAugConfig, GeoPreset};
use craniaug_core::nrrd::{load_nrrd, save_nrrd_with, NrrdEncoding, NrrdType};
use craniaug_core::reg::{synthesize_pair, RegConfig};
use craniaug_core::rng::{derive_seed, RngState};
use craniaug_core::volume::{BinaryMask, ResampleMode};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("invalid job config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to encode JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Generation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Online geometric augmentation of single cases.
    Geo,
    /// Offline registration-based synthesis from case pairs.
    Ir,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Geo => write!(f, "geo"),
            Method::Ir => write!(f, "ir"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobConfig {
    pub method: Method,
    pub count: usize,
    #[serde(default = "default_geo")]
    pub geo: GeoAugConfig,
    #[serde(default)]
    pub reg: RegConfig,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub out_dir: PathBuf,
}

fn default_geo() -> GeoAugConfig {
    // The strongest published setting is the reference choice for training.
    craniaug_core::geoaug::preset(GeoPreset::Extreme)
}

fn default_parallelism() -> usize {
    1
}

impl JobConfig {
    pub fn validate(&self, manifest: &DatasetManifest) -> Result<(), GenerateError> {
        if self.count == 0 {
            return Err(GenerateError::InvalidConfig("count must be >= 1".into()));
        }
        if self.parallelism == 0 {
            return Err(GenerateError::InvalidConfig(
                "parallelism must be >= 1".into(),
            ));
        }
        let min_cases = match self.method {
            Method::Geo => 1,
            Method::Ir => 2,
        };
        if manifest.cases.len() < min_cases {
            return Err(GenerateError::InvalidConfig(format!(
                "method {} needs at least {min_cases} case(s), manifest has {}",
                self.method,
                manifest.cases.len()
            )));
        }
        self.geo
            .validate()
            .map_err(|e| GenerateError::InvalidConfig(e.to_string()))?;
        self.reg
            .validate()
            .map_err(|e| GenerateError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    /// FNV-1a hash of the semantic configuration (method + transform
    /// parameters), hex encoded. Stored in provenance records so samples
    /// stay attributable to the exact settings that produced them.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Semantic<'a> {
            method: Method,
            geo: &'a GeoAugConfig,
            reg: &'a RegConfig,
        }
        let json = serde_json::to_string(&Semantic {
            method: self.method,
            geo: &self.geo,
            reg: &self.reg,
        })
        .expect("config serializes");
        format!("{:016x}", fnv1a64(json.as_bytes()))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Per-sample provenance, written beside the sample masks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub sample_index: usize,
    pub method: Method,
    pub source_case_ids: Vec<String>,
    /// Child seed: derive(master_seed, sample_index).
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleFailure {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationReport {
    pub method: Method,
    pub requested: usize,
    pub succeeded: usize,
    pub failed: Vec<SampleFailure>,
    pub out_dir: PathBuf,
    pub master_seed: u64,
    pub config_hash: String,
}

/// File stem for sample `index`.
pub fn sample_stem(index: usize) -> String {
    format!("sample_{index:06}")
}

type CaseCache = Mutex<HashMap<usize, Arc<CasePair>>>;

fn load_case(manifest: &DatasetManifest, case_index: usize) -> Result<CasePair, String> {
    let case = &manifest.cases[case_index];
    let skull_path = manifest.skull_path(case).map_err(|e| e.to_string())?;
    let defect_path = manifest.defect_path(case);
    // Inputs are segmented masks; tolerate 0/255-style labels by
    // thresholding rather than demanding exact {0,1}.
    let skull = load_nrrd(&skull_path)
        .map_err(|e| format!("{}: {e}", skull_path.display()))?
        .binarize(0.5);
    let defect = load_nrrd(&defect_path)
        .map_err(|e| format!("{}: {e}", defect_path.display()))?
        .binarize(0.5);
    let pair = CasePair::new(skull, defect).map_err(|e| format!("case {}: {e}", case.case_id))?;
    let overlap = pair.overlap_count();
    if overlap > 0 {
        eprintln!(
            "warning: case {}: defect overlaps defective skull in {overlap} voxel(s)",
            case.case_id
        );
    }
    Ok(pair)
}

fn cached_case(
    manifest: &DatasetManifest,
    cache: &CaseCache,
    case_index: usize,
) -> Result<Arc<CasePair>, String> {
    if let Some(pair) = cache.lock().unwrap().get(&case_index) {
        return Ok(pair.clone());
    }
    let pair = Arc::new(load_case(manifest, case_index)?);
    cache
        .lock()
        .unwrap()
        .entry(case_index)
        .or_insert_with(|| pair.clone());
    Ok(pair)
}

fn write_atomic(
    path: &Path,
    write: impl FnOnce(&Path) -> Result<(), String>,
) -> Result<(), String> {
    let tmp = path.with_extension("tmp");
    write(&tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| format!("rename {}: {e}", path.display()))
}

fn write_sample(
    out_dir: &Path,
    index: usize,
    pair: &CasePair,
    provenance: &Provenance,
) -> Result<(), String> {
    let stem = sample_stem(index);
    let skull_path = out_dir.join(format!("{stem}_defective_skull.nrrd"));
    let defect_path = out_dir.join(format!("{stem}_defect.nrrd"));
    let prov_path = out_dir.join(format!("{stem}.json"));
    write_atomic(&skull_path, |tmp| {
        save_nrrd_with(
            pair.defective_skull().as_volume(),
            tmp,
            NrrdType::Uint8,
            NrrdEncoding::Gzip,
        )
        .map_err(|e| e.to_string())
    })?;
    write_atomic(&defect_path, |tmp| {
        save_nrrd_with(
            pair.defect().as_volume(),
            tmp,
            NrrdType::Uint8,
            NrrdEncoding::Gzip,
        )
        .map_err(|e| e.to_string())
    })?;
    write_atomic(&prov_path, |tmp| {
        let json = serde_json::to_string_pretty(provenance).map_err(|e| e.to_string())?;
        std::fs::write(tmp, json).map_err(|e| e.to_string())
    })?;
    Ok(())
}

fn resample_pair_to(pair: &CasePair, dims: (usize, usize, usize)) -> Result<CasePair, String> {
    let resample = |m: &BinaryMask| -> Result<BinaryMask, String> {
        let v = m
            .as_volume()
            .resample(dims, ResampleMode::Nearest)
            .map_err(|e| e.to_string())?;
        BinaryMask::from_volume(v).map_err(|e| e.to_string())
    };
    CasePair::new(resample(pair.defective_skull())?, resample(pair.defect())?)
        .map_err(|e| e.to_string())
}

fn generate_one(
    manifest: &DatasetManifest,
    job: &JobConfig,
    cache: &CaseCache,
    config_hash: &str,
    index: usize,
) -> Result<(), String> {
    let seed = derive_seed(job.master_seed, index as u64);
    let mut rng = RngState::new(seed);
    let n = manifest.cases.len();
    let (pair, sources) = match job.method {
        Method::Geo => {
            let ci = rng.uniform_usize(n);
            let source = cached_case(manifest, cache, ci)?;
            let out = augment(&source, &job.geo, &mut rng).map_err(|e| e.to_string())?;
            (out, vec![manifest.cases[ci].case_id.clone()])
        }
        Method::Ir => {
            let si = rng.uniform_usize(n);
            let mut ti = rng.uniform_usize(n - 1);
            if ti >= si {
                ti += 1;
            }
            let source = cached_case(manifest, cache, si)?;
            let target = cached_case(manifest, cache, ti)?;
            let target = if target.dims() == source.dims() {
                target
            } else {
                Arc::new(resample_pair_to(&target, source.dims())?)
            };
            let out = synthesize_pair(&source, &target, &job.reg).map_err(|e| e.to_string())?;
            (
                out,
                vec![
                    manifest.cases[si].case_id.clone(),
                    manifest.cases[ti].case_id.clone(),
                ],
            )
        }
    };
    let provenance = Provenance {
        sample_index: index,
        method: job.method,
        source_case_ids: sources,
        seed,
        config_hash: config_hash.to_string(),
    };
    write_sample(&job.out_dir, index, &pair, &provenance)
}

/// Augment every manifest case once, in manifest order, with one child
/// generator per case index. Outputs are named by case id; a manifest of
/// the augmented set is written alongside.
pub fn augment_dataset(
    manifest: &DatasetManifest,
    config: &GeoAugConfig,
    master_seed: u64,
    out_dir: &Path,
) -> Result<GenerationReport, GenerateError> {
    manifest.validate()?;
    config
        .validate()
        .map_err(|e| GenerateError::InvalidConfig(e.to_string()))?;
    std::fs::create_dir_all(out_dir).map_err(|e| GenerateError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let mut failed = Vec::new();
    let mut cases = Vec::new();
    for (index, case) in manifest.cases.iter().enumerate() {
        let run = || -> Result<(), String> {
            let pair = load_case(manifest, index)?;
            let seed = derive_seed(master_seed, index as u64);
            let mut rng = RngState::new(seed);
            let out = augment(&pair, config, &mut rng).map_err(|e| e.to_string())?;
            let skull_name = format!("{}_defective_skull.nrrd", case.case_id);
            let defect_name = format!("{}_defect.nrrd", case.case_id);
            save_nrrd_with(
                out.defective_skull().as_volume(),
                out_dir.join(&skull_name),
                NrrdType::Uint8,
                NrrdEncoding::Gzip,
            )
            .map_err(|e| e.to_string())?;
            save_nrrd_with(
                out.defect().as_volume(),
                out_dir.join(&defect_name),
                NrrdType::Uint8,
                NrrdEncoding::Gzip,
            )
            .map_err(|e| e.to_string())?;
            Ok(())
        };
        match run() {
            Ok(()) => cases.push(crate::manifest::CaseEntry {
                case_id: case.case_id.clone(),
                defective_skull: Some(PathBuf::from(format!(
                    "{}_defective_skull.nrrd",
                    case.case_id
                ))),
                defect: PathBuf::from(format!("{}_defect.nrrd", case.case_id)),
                complete_skull: None,
            }),
            Err(error) => failed.push(SampleFailure { index, error }),
        }
    }
    let out_manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        cases,
    };
    out_manifest.save(out_dir.join("manifest.json"))?;
    let config_hash = format!(
        "{:016x}",
        fnv1a64(serde_json::to_string(config)?.as_bytes())
    );
    Ok(GenerationReport {
        method: Method::Geo,
        requested: manifest.cases.len(),
        succeeded: manifest.cases.len() - failed.len(),
        failed,
        out_dir: out_dir.to_path_buf(),
        master_seed,
        config_hash,
    })
}

/// Produce exactly `job.count` synthetic samples in `job.out_dir`.
///
/// Per-sample failures are recorded in the report and do not stop the run.
pub fn generate_dataset(
    manifest: &DatasetManifest,
    job: &JobConfig,
) -> Result<GenerationReport, GenerateError> {
    job.validate(manifest)?;
    manifest.validate()?;
    std::fs::create_dir_all(&job.out_dir).map_err(|e| GenerateError::Io {
        path: job.out_dir.clone(),
        source: e,
    })?;
    let config_hash = job.fingerprint();
    let cache: CaseCache = Mutex::new(HashMap::new());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(job.parallelism)
        .build()
        .map_err(|e| GenerateError::InvalidConfig(format!("thread pool: {e}")))?;
    let results: Vec<Result<(), String>> = pool.install(|| {
        use rayon::prelude::*;
        (0..job.count)
            .into_par_iter()
            .map(|i| generate_one(manifest, job, &cache, &config_hash, i))
            .collect()
    });

    let mut failed = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        if let Err(error) = r {
            failed.push(SampleFailure { index, error });
        }
    }
    Ok(GenerationReport {
        method: job.method,
        requested: job.count,
        succeeded: job.count - failed.len(),
        failed,
        out_dir: job.out_dir.clone(),
        master_seed: job.master_seed,
        config_hash,
    })
}
