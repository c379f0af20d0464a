//! Orchestration for the synthetic cranial-defect engine: dataset
//! manifests, batch generation (geometric and registration-based),
//! preprocessing, prediction cleanup, dataset-level evaluation, and the
//! Wilcoxon signed-rank comparison behind the `craniaug` CLI.

pub mod combine;
pub mod components;
pub mod evaluate;
pub mod generate;
pub mod manifest;
pub mod postprocess;
pub mod preprocess;
pub mod wilcoxon;

pub use combine::{combine_datasets, CombineError};
pub use components::{connected_components, ComponentLabels, Connectivity};
pub use evaluate::{evaluate_dataset, DatasetEvaluation, EvaluateError};
pub use generate::{generate_dataset, GenerateError, GenerationReport, JobConfig, Method};
pub use manifest::{load_manifest, CaseEntry, DatasetManifest, ManifestError};
pub use postprocess::{postprocess, PostprocessRule};
pub use preprocess::{preprocess_dataset, PreprocessError, PreprocessReport};
pub use wilcoxon::{wilcoxon_signed_rank, ComparisonResult, StatsError};
