//! Core engine for synthetic cranial-defect training data.
//!
//! Volumetric binary-mask processing: dense grids with NRRD/VXF I/O,
//! geometric augmentation with published strength presets, multi-level
//! instance-optimization deformable registration for registration-based
//! augmentation, latent-space sampling strategies, and the full
//! segmentation metric suite built on an exact Euclidean distance
//! transform.
//!
//! Everything is deterministic: randomized operations consume an explicit
//! [`rng::RngState`], internal parallelism never changes results, and the
//! file writers emit byte-identical output for identical inputs.

// Validation guards are written as `!(x > 0.0)` on purpose: the negated
// form also rejects NaN, which `x <= 0.0` lets through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geoaug;
pub mod latent;
pub mod metrics;
pub mod normal;
pub mod nrrd;
pub mod reg;
pub mod rng;
pub mod synth;
pub mod volume;
pub mod vxf;

pub use geoaug::{augment, binary_noise, preset, random_affine, random_crop, random_flip};
pub use geoaug::{CasePair, GeoAugConfig, GeoAugError, GeoPreset};
pub use metrics::{bdsc, dsc, edt, evaluate_case, hd95, msd, sdsc, soft_dice_loss, surface_voxels};
pub use metrics::{MetricError, MetricsReport, SurfacePointSet};
pub use nrrd::{load_nrrd, save_nrrd, save_nrrd_with, NrrdEncoding, NrrdError, NrrdType};
pub use reg::{
    diffusive_reg, jacobian_determinant, mse, objective, objective_gradient, register,
    synthesize_pair, warp, DisplacementField, RegConfig, RegError, RegResult, TraceEntry,
};
pub use rng::RngState;
pub use volume::{
    apply_affine, AffineTransform, BinaryMask, FlipAxis, ResampleMode, Volume3, VolumeError,
};
pub use vxf::{read_vxf, write_vxf, VxfError};
