//! Online geometric augmentation for defective-skull / defect case pairs.
//!
//! Four transform families: random flips, random crops (content-zeroing
//! slabs, grid size unchanged), random affine, and random binary noise.
//! [`augment`] shuffles the enabled transforms and fires each with an
//! independent probability (0.75 by default). Flips and affines apply
//! identically to both channels; crops and noise corrupt only the
//! defective-skull channel, since they model acquisition and segmentation
//! artifacts of the input rather than of the supervision target.

use crate::rng::RngState;
use crate::volume::{apply_affine, AffineTransform, BinaryMask, FlipAxis, VolumeError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeoAugError {
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Configuration of the flip/crop/affine/noise pipeline.
///
/// Serializes to JSON with exactly these field names; tuple ranges become
/// two-element arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoAugConfig {
    pub flip_axes: Vec<FlipAxis>,
    pub crops_enabled: bool,
    pub affine_max_deg: f64,
    pub affine_max_trans: f64,
    pub affine_scale_range: (f64, f64),
    pub noise_enabled: bool,
    pub noise_std: f64,
    pub noise_threshold_range: (f64, f64),
    #[serde(default = "default_probability")]
    pub per_transform_probability: f64,
    #[serde(default = "default_crop_fraction")]
    pub crop_max_fraction: f64,
}

fn default_probability() -> f64 {
    0.75
}

fn default_crop_fraction() -> f64 {
    0.1
}

/// Named augmentation strength presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeoPreset {
    Basic,
    Heavy,
    Extreme,
}

impl std::str::FromStr for GeoPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "basic" => Ok(GeoPreset::Basic),
            "heavy" => Ok(GeoPreset::Heavy),
            "extreme" => Ok(GeoPreset::Extreme),
            _ => Err(format!(
                "unknown preset {s:?} (expected basic|heavy|extreme)"
            )),
        }
    }
}

/// The published augmentation settings per strength tier.
pub fn preset(p: GeoPreset) -> GeoAugConfig {
    match p {
        GeoPreset::Basic => GeoAugConfig {
            flip_axes: vec![FlipAxis::Sagittal],
            crops_enabled: false,
            affine_max_deg: 7.0,
            affine_max_trans: 7.0,
            affine_scale_range: (0.7, 1.1),
            noise_enabled: false,
            noise_std: 1.0,
            noise_threshold_range: (2.2, 4.5),
            per_transform_probability: 0.75,
            crop_max_fraction: 0.1,
        },
        GeoPreset::Heavy => GeoAugConfig {
            flip_axes: vec![FlipAxis::Sagittal],
            crops_enabled: true,
            affine_max_deg: 15.0,
            affine_max_trans: 10.0,
            affine_scale_range: (0.5, 1.2),
            noise_enabled: true,
            noise_std: 1.0,
            noise_threshold_range: (2.2, 4.5),
            per_transform_probability: 0.75,
            crop_max_fraction: 0.1,
        },
        GeoPreset::Extreme => GeoAugConfig {
            flip_axes: vec![
                FlipAxis::Sagittal,
                FlipAxis::Frontal,
                FlipAxis::Longitudinal,
            ],
            crops_enabled: true,
            affine_max_deg: 45.0,
            affine_max_trans: 15.0,
            affine_scale_range: (0.4, 1.3),
            noise_enabled: true,
            noise_std: 1.0,
            noise_threshold_range: (1.8, 4.5),
            per_transform_probability: 0.75,
            crop_max_fraction: 0.1,
        },
    }
}

impl GeoAugConfig {
    pub fn validate(&self) -> Result<(), GeoAugError> {
        let bad = |msg: String| Err(GeoAugError::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.per_transform_probability) {
            return bad(format!(
                "per_transform_probability must be in [0, 1], got {}",
                self.per_transform_probability
            ));
        }
        let (lo, hi) = self.affine_scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad(format!(
                "affine_scale_range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
            ));
        }
        let (tlo, thi) = self.noise_threshold_range;
        if tlo > thi {
            return bad(format!(
                "noise_threshold_range must satisfy lo <= hi, got ({tlo}, {thi})"
            ));
        }
        if self.noise_enabled && !(self.noise_std > 0.0) {
            return bad(format!(
                "noise_std must be positive, got {}",
                self.noise_std
            ));
        }
        if !(0.0..0.5).contains(&self.crop_max_fraction) {
            return bad(format!(
                "crop_max_fraction must be in [0, 0.5), got {}",
                self.crop_max_fraction
            ));
        }
        if self.affine_max_deg < 0.0 || self.affine_max_trans < 0.0 {
            return bad("affine ranges must be non-negative".to_string());
        }
        Ok(())
    }
}

/// A defective skull together with its defect, on identical grids.
///
/// The defect is expected to be disjoint from the defective skull. Violating
/// inputs are accepted (they occur in imperfect segmentations); the overlap
/// is surfaced through [`CasePair::overlap_count`] so callers can warn.
#[derive(Debug, Clone, PartialEq)]
pub struct CasePair {
    defective_skull: BinaryMask,
    defect: BinaryMask,
}

impl CasePair {
    pub fn new(defective_skull: BinaryMask, defect: BinaryMask) -> Result<Self, VolumeError> {
        if defective_skull.dims() != defect.dims() {
            return Err(VolumeError::ShapeMismatch {
                a: defective_skull.dims(),
                b: defect.dims(),
            });
        }
        if defective_skull.spacing() != defect.spacing() {
            return Err(VolumeError::SpacingMismatch {
                a: defective_skull.spacing(),
                b: defect.spacing(),
            });
        }
        Ok(CasePair {
            defective_skull,
            defect,
        })
    }

    pub fn defective_skull(&self) -> &BinaryMask {
        &self.defective_skull
    }

    pub fn defect(&self) -> &BinaryMask {
        &self.defect
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.defective_skull.dims()
    }

    pub fn into_channels(self) -> (BinaryMask, BinaryMask) {
        (self.defective_skull, self.defect)
    }

    /// Voxels set in both channels; nonzero means the disjointness
    /// expectation is violated.
    pub fn overlap_count(&self) -> usize {
        self.defective_skull
            .data()
            .iter()
            .zip(self.defect.data())
            .filter(|(a, b)| **a != 0.0 && **b != 0.0)
            .count()
    }
}

/// Flip both channels along each enabled axis independently with
/// probability 0.5. One decision per axis, shared by both channels.
///
/// Axes are visited in the fixed order sagittal, frontal, longitudinal.
pub fn random_flip(pair: &CasePair, axes: &[FlipAxis], rng: &mut RngState) -> CasePair {
    let mut skull = pair.defective_skull.clone();
    let mut defect = pair.defect.clone();
    for axis in FlipAxis::ALL {
        if !axes.contains(&axis) {
            continue;
        }
        if rng.flip(0.5) {
            skull = skull.flip(axis);
            defect = defect.flip(axis);
        }
    }
    CasePair {
        defective_skull: skull,
        defect,
    }
}

/// Zero a slab of up to `crop_max_fraction` of one randomly chosen axis,
/// from one randomly chosen side, on the defective-skull channel only.
/// Grid size is unchanged; a crop removes content, it does not shrink the
/// volume.
pub fn random_crop(
    pair: &CasePair,
    config: &GeoAugConfig,
    rng: &mut RngState,
) -> Result<CasePair, GeoAugError> {
    if !(0.0..0.5).contains(&config.crop_max_fraction) {
        return Err(GeoAugError::InvalidConfig(format!(
            "crop_max_fraction must be in [0, 0.5), got {}",
            config.crop_max_fraction
        )));
    }
    let dims = pair.dims();
    let axis = rng.uniform_usize(3);
    let high_side = rng.flip(0.5);
    let extent = [dims.0, dims.1, dims.2][axis];
    let max_depth = (config.crop_max_fraction * extent as f64).floor() as usize;
    let depth = rng.uniform_usize(max_depth + 1);
    if depth == 0 {
        return Ok(pair.clone());
    }

    let mut skull = pair.defective_skull.clone();
    let range = if high_side {
        extent - depth..extent
    } else {
        0..depth
    };
    let (nx, ny, nz) = dims;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let coord = [x, y, z][axis];
                if range.contains(&coord) {
                    skull.set_voxel(x, y, z, false);
                }
            }
        }
    }
    Ok(CasePair {
        defective_skull: skull,
        defect: pair.defect.clone(),
    })
}

/// Sample affine parameters: per-axis rotation in [-max_deg, max_deg],
/// per-axis translation in [-max_trans, max_trans], isotropic scale in
/// `affine_scale_range`. Draw order is fixed: rx ry rz, tx ty tz, scale.
pub fn random_affine(config: &GeoAugConfig, rng: &mut RngState) -> AffineTransform {
    let d = config.affine_max_deg;
    let t = config.affine_max_trans;
    let rotation_deg = [rng.uniform(-d, d), rng.uniform(-d, d), rng.uniform(-d, d)];
    let translation = [rng.uniform(-t, t), rng.uniform(-t, t), rng.uniform(-t, t)];
    let (lo, hi) = config.affine_scale_range;
    let s = if lo == hi { lo } else { rng.uniform(lo, hi) };
    AffineTransform {
        rotation_deg,
        translation,
        scale: [s, s, s],
        center: None,
    }
}

/// Flip mask voxels where a Gaussian field exceeds a sampled threshold.
///
/// Draws t uniformly from `threshold_range`, then an i.i.d. field
/// g ~ N(0, std^2) over the grid, and XORs the mask with [|g| > t]. Large
/// thresholds give a sparse, speckle-like corruption.
pub fn binary_noise(
    m: &BinaryMask,
    std: f64,
    threshold_range: (f64, f64),
    rng: &mut RngState,
) -> Result<BinaryMask, GeoAugError> {
    if !(std > 0.0) {
        return Err(GeoAugError::InvalidConfig(format!(
            "noise std must be positive, got {std}"
        )));
    }
    if threshold_range.0 > threshold_range.1 {
        return Err(GeoAugError::InvalidConfig(format!(
            "noise threshold range must satisfy lo <= hi, got {threshold_range:?}"
        )));
    }
    let t = if threshold_range.0 == threshold_range.1 {
        threshold_range.0
    } else {
        rng.uniform(threshold_range.0, threshold_range.1)
    };
    let mut out = m.clone();
    let (nx, ny, nz) = m.dims();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let g = rng.standard_normal() * std;
                if g.abs() > t {
                    let cur = out.is_set(x, y, z);
                    out.set_voxel(x, y, z, !cur);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TransformKind {
    Flip,
    Crop,
    Affine,
    Noise,
}

/// Apply the full augmentation pipeline to a case pair.
///
/// The enabled transforms (canonical order flip, crop, affine, noise) are
/// shuffled, then each fires with independent probability
/// `per_transform_probability`. Per transform, one gate value is drawn
/// first; the transform's own parameters are drawn only when it fires.
/// Everything is a pure function of (pair, config, rng state).
pub fn augment(
    pair: &CasePair,
    config: &GeoAugConfig,
    rng: &mut RngState,
) -> Result<CasePair, GeoAugError> {
    config.validate()?;
    let mut order = Vec::with_capacity(4);
    if !config.flip_axes.is_empty() {
        order.push(TransformKind::Flip);
    }
    if config.crops_enabled {
        order.push(TransformKind::Crop);
    }
    order.push(TransformKind::Affine);
    if config.noise_enabled {
        order.push(TransformKind::Noise);
    }
    rng.shuffle(&mut order);

    let mut current = pair.clone();
    for kind in order {
        if !rng.flip(config.per_transform_probability) {
            continue;
        }
        current = match kind {
            TransformKind::Flip => random_flip(&current, &config.flip_axes, rng),
            TransformKind::Crop => random_crop(&current, config, rng)?,
            TransformKind::Affine => {
                let t = random_affine(config, rng);
                let skull = apply_affine(current.defective_skull(), &t)?;
                let defect = apply_affine(current.defect(), &t)?;
                CasePair {
                    defective_skull: skull,
                    defect,
                }
            }
            TransformKind::Noise => {
                let skull = binary_noise(
                    current.defective_skull(),
                    config.noise_std,
                    config.noise_threshold_range,
                    rng,
                )?;
                CasePair {
                    defective_skull: skull,
                    defect: current.defect,
                }
            }
        };
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume3;

    fn ball_mask(dims: usize, center: (f64, f64, f64), r: f64) -> BinaryMask {
        let mut v = Volume3::zeros((dims, dims, dims), (1.0, 1.0, 1.0)).unwrap();
        for z in 0..dims {
            for y in 0..dims {
                for x in 0..dims {
                    let d = (x as f64 - center.0).powi(2)
                        + (y as f64 - center.1).powi(2)
                        + (z as f64 - center.2).powi(2);
                    if d <= r * r {
                        v.set(x, y, z, 1.0);
                    }
                }
            }
        }
        BinaryMask::from_volume(v).unwrap()
    }

    fn test_pair(dims: usize) -> CasePair {
        let c = (dims as f64 - 1.0) / 2.0;
        let skull = ball_mask(dims, (c - 2.0, c, c), 4.0);
        let defect = ball_mask(dims, (c + 5.0, c, c), 2.0);
        CasePair::new(skull, defect).unwrap()
    }

    #[test]
    fn presets_match_published_settings() {
        let basic = preset(GeoPreset::Basic);
        assert_eq!(basic.flip_axes, vec![FlipAxis::Sagittal]);
        assert!(!basic.crops_enabled);
        assert_eq!(basic.affine_max_deg, 7.0);
        assert_eq!(basic.affine_max_trans, 7.0);
        assert_eq!(basic.affine_scale_range, (0.7, 1.1));
        assert!(!basic.noise_enabled);
        assert_eq!(basic.per_transform_probability, 0.75);

        let heavy = preset(GeoPreset::Heavy);
        assert_eq!(heavy.flip_axes, vec![FlipAxis::Sagittal]);
        assert!(heavy.crops_enabled);
        assert_eq!(heavy.affine_max_deg, 15.0);
        assert_eq!(heavy.affine_max_trans, 10.0);
        assert_eq!(heavy.affine_scale_range, (0.5, 1.2));
        assert!(heavy.noise_enabled);
        assert_eq!(heavy.noise_std, 1.0);
        assert_eq!(heavy.noise_threshold_range, (2.2, 4.5));

        let extreme = preset(GeoPreset::Extreme);
        assert_eq!(
            extreme.flip_axes,
            vec![
                FlipAxis::Sagittal,
                FlipAxis::Frontal,
                FlipAxis::Longitudinal
            ]
        );
        assert!(extreme.crops_enabled);
        assert_eq!(extreme.affine_max_deg, 45.0);
        assert_eq!(extreme.affine_max_trans, 15.0);
        assert_eq!(extreme.affine_scale_range, (0.4, 1.3));
        assert!(extreme.noise_enabled);
        assert_eq!(extreme.noise_std, 1.0);
        assert_eq!(extreme.noise_threshold_range, (1.8, 4.5));
    }

    #[test]
    fn config_json_round_trip_uses_exact_field_names() {
        let cfg = preset(GeoPreset::Heavy);
        let json = serde_json::to_string(&cfg).unwrap();
        for field in [
            "flip_axes",
            "crops_enabled",
            "affine_max_deg",
            "affine_max_trans",
            "affine_scale_range",
            "noise_enabled",
            "noise_std",
            "noise_threshold_range",
            "per_transform_probability",
            "crop_max_fraction",
        ] {
            assert!(json.contains(field), "missing {field} in {json}");
        }
        let back: GeoAugConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn symmetric_mask_is_flip_fixed_point() {
        let dims = 9;
        let c = (dims as f64 - 1.0) / 2.0;
        let ball = ball_mask(dims, (c, c, c), 3.0);
        assert_eq!(ball.flip(FlipAxis::Sagittal), ball);
    }

    #[test]
    fn random_flip_applies_same_decision_to_both_channels() {
        let pair = test_pair(16);
        // Scan seeds to hit one where the (single) flip decision fires.
        let mut fired = false;
        for seed in 0..32 {
            let mut rng = RngState::new(seed);
            let out = random_flip(&pair, &[FlipAxis::Sagittal], &mut rng);
            if out.defective_skull() != pair.defective_skull() {
                fired = true;
                assert_eq!(*out.defect(), pair.defect().flip(FlipAxis::Sagittal));
                assert_eq!(
                    *out.defective_skull(),
                    pair.defective_skull().flip(FlipAxis::Sagittal)
                );
            } else {
                assert_eq!(out, pair);
            }
        }
        assert!(fired);
    }

    #[test]
    fn crop_with_zero_fraction_is_identity() {
        let pair = test_pair(16);
        let mut cfg = preset(GeoPreset::Heavy);
        cfg.crop_max_fraction = 0.0;
        let mut rng = RngState::new(9);
        assert_eq!(random_crop(&pair, &cfg, &mut rng).unwrap(), pair);
    }

    #[test]
    fn crop_only_removes_and_spares_defect() {
        let pair = test_pair(16);
        let cfg = preset(GeoPreset::Extreme);
        for seed in 0..16 {
            let mut rng = RngState::new(seed);
            let out = random_crop(&pair, &cfg, &mut rng).unwrap();
            assert_eq!(out.defect(), pair.defect());
            for (a, b) in out
                .defective_skull()
                .data()
                .iter()
                .zip(pair.defective_skull().data())
            {
                assert!(*a <= *b, "crop must only remove voxels");
            }
        }
    }

    #[test]
    fn affine_sampling_respects_bounds_and_zero_ranges() {
        let mut cfg = preset(GeoPreset::Extreme);
        let mut rng = RngState::new(123);
        for _ in 0..10_000 {
            let t = random_affine(&cfg, &mut rng);
            for a in 0..3 {
                assert!(t.rotation_deg[a].abs() <= 45.0);
                assert!(t.translation[a].abs() <= 15.0);
            }
            assert!(t.scale[0] >= 0.4 && t.scale[0] <= 1.3);
            assert_eq!(t.scale[0], t.scale[1]);
            assert_eq!(t.scale[1], t.scale[2]);
        }

        cfg.affine_max_deg = 0.0;
        cfg.affine_max_trans = 0.0;
        cfg.affine_scale_range = (1.0, 1.0);
        let t = random_affine(&cfg, &mut rng);
        assert_eq!(t.rotation_deg, [0.0; 3]);
        assert_eq!(t.translation, [0.0; 3]);
        assert_eq!(t.scale, [1.0; 3]);
    }

    #[test]
    fn affine_sampling_is_seed_deterministic() {
        let cfg = preset(GeoPreset::Extreme);
        let seq = |seed: u64| {
            let mut rng = RngState::new(seed);
            (0..32)
                .map(|_| random_affine(&cfg, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(77), seq(77));
        assert_ne!(seq(77), seq(78));
    }

    #[test]
    fn noise_with_unreachable_threshold_is_identity() {
        // Gaussian tail at 50 sigma is ~2*Phi(-50); no voxel of a 10^6 grid
        // will ever cross it.
        let m = ball_mask(100, (49.5, 49.5, 49.5), 30.0);
        let mut rng = RngState::new(5);
        let out = binary_noise(&m, 1.0, (50.0, 50.0), &mut rng).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn noise_flip_fraction_matches_gaussian_tail() {
        // Expected flip fraction at std 1, t = 2.2 is 2*Phi(-2.2); the
        // constant is frozen from the normal CDF.
        let expected = 2.0 * crate::normal::cdf(-2.2);
        assert!((expected - 0.027_806_895_026_997_19).abs() < 1e-12);

        let m = BinaryMask::zeros((128, 128, 128), (1.0, 1.0, 1.0)).unwrap();
        let mut rng = RngState::new(81);
        let out = binary_noise(&m, 1.0, (2.2, 2.2), &mut rng).unwrap();
        let measured = out.foreground_count() as f64 / (128.0 * 128.0 * 128.0);
        assert!(
            (measured - expected).abs() / expected < 0.1,
            "measured {measured}, expected {expected}"
        );
    }

    #[test]
    fn noise_output_stays_binary() {
        let m = ball_mask(24, (11.5, 11.5, 11.5), 8.0);
        let mut rng = RngState::new(2);
        let out = binary_noise(&m, 1.0, (1.8, 4.5), &mut rng).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn augment_with_zero_probability_is_identity() {
        let pair = test_pair(16);
        let mut cfg = preset(GeoPreset::Extreme);
        cfg.per_transform_probability = 0.0;
        let mut rng = RngState::new(4);
        assert_eq!(augment(&pair, &cfg, &mut rng).unwrap(), pair);
    }

    #[test]
    fn augment_is_seed_deterministic() {
        let pair = test_pair(20);
        let cfg = preset(GeoPreset::Extreme);
        let run = |seed: u64| augment(&pair, &cfg, &mut RngState::new(seed)).unwrap();
        assert_eq!(run(99), run(99));
    }

    #[test]
    fn augment_channels_stay_consistent_under_geometry() {
        // With crops and noise disabled both channels receive identical
        // geometry, so feeding the defect through the skull slot must give
        // the same voxels the pair run gives the defect channel.
        let pair = test_pair(20);
        let mut cfg = preset(GeoPreset::Extreme);
        cfg.crops_enabled = false;
        cfg.noise_enabled = false;
        cfg.per_transform_probability = 1.0;
        for seed in [3, 17, 1000] {
            let out = augment(&pair, &cfg, &mut RngState::new(seed)).unwrap();
            let twin = CasePair::new(pair.defect().clone(), pair.defect().clone()).unwrap();
            let out_twin = augment(&twin, &cfg, &mut RngState::new(seed)).unwrap();
            assert_eq!(out.defect(), out_twin.defective_skull());
        }
    }

    #[test]
    fn augment_outputs_are_binary_and_dims_preserving() {
        let pair = test_pair(20);
        let cfg = preset(GeoPreset::Extreme);
        for seed in 0..8 {
            let out = augment(&pair, &cfg, &mut RngState::new(seed)).unwrap();
            assert_eq!(out.dims(), pair.dims());
            assert!(out
                .defective_skull()
                .data()
                .iter()
                .chain(out.defect().data())
                .all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn basic_preset_bounds_foreground_change() {
        // Scale range (0.7, 1.1) bounds the volume ratio by the cubes,
        // widened 5% for interpolation loss.
        let pair = test_pair(64);
        let cfg = preset(GeoPreset::Basic);
        let input = pair.defective_skull().foreground_count() as f64;
        for seed in 0..12 {
            let out = augment(&pair, &cfg, &mut RngState::new(seed)).unwrap();
            let ratio = out.defective_skull().foreground_count() as f64 / input;
            assert!(
                (0.7f64.powi(3) * 0.95..=1.1f64.powi(3) * 1.05).contains(&ratio),
                "seed {seed}: ratio {ratio}"
            );
        }
    }

    #[test]
    fn case_pair_checks_dims_and_reports_overlap() {
        let a = BinaryMask::zeros((4, 4, 4), (1.0, 1.0, 1.0)).unwrap();
        let b = BinaryMask::zeros((4, 4, 5), (1.0, 1.0, 1.0)).unwrap();
        assert!(CasePair::new(a.clone(), b).is_err());

        let mut c = BinaryMask::zeros((4, 4, 4), (1.0, 1.0, 1.0)).unwrap();
        c.set_voxel(1, 1, 1, true);
        let mut d = c.clone();
        d.set_voxel(2, 2, 2, true);
        let pair = CasePair::new(c, d).unwrap();
        assert_eq!(pair.overlap_count(), 1);
    }

    #[test]
    fn config_validation_rejects_bad_ranges() {
        let mut cfg = preset(GeoPreset::Basic);
        cfg.per_transform_probability = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = preset(GeoPreset::Basic);
        cfg.affine_scale_range = (0.0, 1.0);
        assert!(cfg.validate().is_err());
        let mut cfg = preset(GeoPreset::Basic);
        cfg.noise_threshold_range = (3.0, 2.0);
        assert!(cfg.validate().is_err());
        let mut cfg = preset(GeoPreset::Basic);
        cfg.crop_max_fraction = 0.5;
        assert!(cfg.validate().is_err());
    }
}
