//! Merging generated datasets into one training set.
//!
//! Draws a uniform random sample without replacement across the samples of
//! several generated directories, copying the mask files and provenance
//! into a fresh directory under new sequential indices. Provenance records
//! gain an `origin` pointer back to the file they came from.

use crate::generate::{sample_stem, Provenance};
use crate::manifest::{CaseEntry, DatasetManifest};
use craniaug_core::rng::RngState;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CombineError {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed provenance {path}: {source}")]
    Provenance {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("requested {requested} samples but sources hold only {available}")]
    Capacity { requested: usize, available: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CombinedProvenance {
    #[serde(flatten)]
    pub original: Provenance,
    /// Provenance file the sample was drawn from.
    pub origin: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CombineError + '_ {
    move |source| CombineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One generated sample on disk: provenance plus its two mask files.
#[derive(Debug, Clone)]
struct SourceSample {
    provenance_path: PathBuf,
    skull_path: PathBuf,
    defect_path: PathBuf,
}

fn scan_dir(dir: &Path) -> Result<Vec<SourceSample>, CombineError> {
    let mut names: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with("sample_") && name.ends_with(".json") {
            names.push(name);
        }
    }
    // Directory iteration order is filesystem-dependent; sort for a
    // deterministic sample universe.
    names.sort();
    let mut samples = Vec::with_capacity(names.len());
    for name in names {
        let stem = name.trim_end_matches(".json").to_string();
        let skull = dir.join(format!("{stem}_defective_skull.nrrd"));
        let defect = dir.join(format!("{stem}_defect.nrrd"));
        if skull.is_file() && defect.is_file() {
            samples.push(SourceSample {
                provenance_path: dir.join(&name),
                skull_path: skull,
                defect_path: defect,
            });
        }
    }
    Ok(samples)
}

/// Combine `count` samples drawn uniformly without replacement across the
/// source directories into `out_dir`, returning a manifest of the result.
pub fn combine_datasets(
    dirs: &[PathBuf],
    count: usize,
    master_seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest, CombineError> {
    let mut universe = Vec::new();
    for dir in dirs {
        universe.extend(scan_dir(dir)?);
    }
    if universe.len() < count {
        return Err(CombineError::Capacity {
            requested: count,
            available: universe.len(),
        });
    }
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut order: Vec<usize> = (0..universe.len()).collect();
    RngState::new(master_seed).shuffle(&mut order);
    order.truncate(count);

    let mut cases = Vec::with_capacity(count);
    for (new_index, &src_index) in order.iter().enumerate() {
        let src = &universe[src_index];
        let stem = sample_stem(new_index);
        let skull_name = format!("{stem}_defective_skull.nrrd");
        let defect_name = format!("{stem}_defect.nrrd");
        std::fs::copy(&src.skull_path, out_dir.join(&skull_name))
            .map_err(io_err(&src.skull_path))?;
        std::fs::copy(&src.defect_path, out_dir.join(&defect_name))
            .map_err(io_err(&src.defect_path))?;

        let text =
            std::fs::read_to_string(&src.provenance_path).map_err(io_err(&src.provenance_path))?;
        let original: Provenance =
            serde_json::from_str(&text).map_err(|source| CombineError::Provenance {
                path: src.provenance_path.clone(),
                source,
            })?;
        let combined = CombinedProvenance {
            original,
            origin: src.provenance_path.clone(),
        };
        let prov_path = out_dir.join(format!("{stem}.json"));
        std::fs::write(
            &prov_path,
            serde_json::to_string_pretty(&combined).expect("serializable"),
        )
        .map_err(io_err(&prov_path))?;

        cases.push(CaseEntry {
            case_id: stem,
            defective_skull: Some(PathBuf::from(skull_name)),
            defect: PathBuf::from(defect_name),
            complete_skull: None,
        });
    }
    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        cases,
    };
    let mpath = out_dir.join("manifest.json");
    manifest.save(&mpath).map_err(|e| CombineError::Io {
        path: mpath,
        source: std::io::Error::other(e.to_string()),
    })?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::Method;

    fn fake_sample(dir: &Path, index: usize, tag: &str) {
        let stem = sample_stem(index);
        std::fs::write(
            dir.join(format!("{stem}_defective_skull.nrrd")),
            format!("skull-{tag}-{index}"),
        )
        .unwrap();
        std::fs::write(
            dir.join(format!("{stem}_defect.nrrd")),
            format!("defect-{tag}-{index}"),
        )
        .unwrap();
        let prov = Provenance {
            sample_index: index,
            method: Method::Geo,
            source_case_ids: vec![format!("{tag}")],
            seed: index as u64,
            config_hash: "deadbeef".into(),
        };
        std::fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&prov).unwrap(),
        )
        .unwrap();
    }

    #[test]
    fn full_take_is_a_permutation() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src");
        std::fs::create_dir(&src).unwrap();
        for i in 0..10 {
            fake_sample(&src, i, "a");
        }
        let out = dir.path().join("out");
        let manifest = combine_datasets(&[src], 10, 42, &out).unwrap();
        assert_eq!(manifest.cases.len(), 10);
        // Every source sample present exactly once, identified by content.
        let mut contents: Vec<String> = (0..10)
            .map(|i| {
                std::fs::read_to_string(out.join(format!("{}_defect.nrrd", sample_stem(i))))
                    .unwrap()
            })
            .collect();
        contents.sort();
        let expected: Vec<String> = (0..10).map(|i| format!("defect-a-{i}")).collect();
        let mut expected = expected;
        expected.sort();
        assert_eq!(contents, expected);
    }

    #[test]
    fn without_replacement_across_sources() {
        let dir = tempfile::tempdir().unwrap();
        let s1 = dir.path().join("s1");
        let s2 = dir.path().join("s2");
        std::fs::create_dir(&s1).unwrap();
        std::fs::create_dir(&s2).unwrap();
        for i in 0..10 {
            fake_sample(&s1, i, "one");
            fake_sample(&s2, i, "two");
        }
        let out = dir.path().join("out");
        combine_datasets(&[s1, s2], 20, 7, &out).unwrap();
        let mut contents: Vec<String> = (0..20)
            .map(|i| {
                std::fs::read_to_string(out.join(format!("{}_defect.nrrd", sample_stem(i))))
                    .unwrap()
            })
            .collect();
        contents.sort();
        contents.dedup();
        assert_eq!(contents.len(), 20, "every sample exactly once");
    }

    #[test]
    fn capacity_error_reports_available() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src");
        std::fs::create_dir(&src).unwrap();
        for i in 0..3 {
            fake_sample(&src, i, "a");
        }
        match combine_datasets(&[src], 5, 1, &dir.path().join("out")) {
            Err(CombineError::Capacity {
                requested: 5,
                available: 3,
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src");
        std::fs::create_dir(&src).unwrap();
        for i in 0..8 {
            fake_sample(&src, i, "a");
        }
        let out1 = dir.path().join("o1");
        let out2 = dir.path().join("o2");
        combine_datasets(std::slice::from_ref(&src), 5, 11, &out1).unwrap();
        combine_datasets(std::slice::from_ref(&src), 5, 11, &out2).unwrap();
        for i in 0..5 {
            let name = format!("{}_defect.nrrd", sample_stem(i));
            assert_eq!(
                std::fs::read(out1.join(&name)).unwrap(),
                std::fs::read(out2.join(&name)).unwrap()
            );
        }
    }
}
