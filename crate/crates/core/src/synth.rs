//! Synthetic shape generators for fixtures and demos.
//!
//! Skull-scale stand-ins used by the test suites and the CLI demo paths:
//! spherical and ellipsoidal shells (closed head-like surfaces) and smooth
//! random blobs.

use crate::geoaug::CasePair;
use crate::rng::RngState;
use crate::volume::{BinaryMask, Volume3};

/// Spherical shell: voxels with r - thickness <= |p - center| <= r.
pub fn sphere_shell(
    dims: (usize, usize, usize),
    center: (f64, f64, f64),
    radius: f64,
    thickness: f64,
) -> BinaryMask {
    ellipsoid_shell(dims, center, (radius, radius, radius), thickness)
}

/// Ellipsoidal shell with per-axis radii; shell thickness is measured in
/// the normalized radial coordinate times the mean radius.
pub fn ellipsoid_shell(
    dims: (usize, usize, usize),
    center: (f64, f64, f64),
    radii: (f64, f64, f64),
    thickness: f64,
) -> BinaryMask {
    let mut v = Volume3::zeros(dims, (1.0, 1.0, 1.0)).expect("valid dims");
    let mean_r = (radii.0 + radii.1 + radii.2) / 3.0;
    let t = thickness / mean_r;
    for z in 0..dims.2 {
        for y in 0..dims.1 {
            for x in 0..dims.0 {
                let rx = (x as f64 - center.0) / radii.0;
                let ry = (y as f64 - center.1) / radii.1;
                let rz = (z as f64 - center.2) / radii.2;
                let rho = (rx * rx + ry * ry + rz * rz).sqrt();
                if rho <= 1.0 && rho >= 1.0 - t {
                    v.set(x, y, z, 1.0);
                }
            }
        }
    }
    BinaryMask::from_volume(v).expect("constructed binary")
}

/// Solid ball.
pub fn ball(dims: (usize, usize, usize), center: (f64, f64, f64), radius: f64) -> BinaryMask {
    let mut v = Volume3::zeros(dims, (1.0, 1.0, 1.0)).expect("valid dims");
    for z in 0..dims.2 {
        for y in 0..dims.1 {
            for x in 0..dims.0 {
                let dx = x as f64 - center.0;
                let dy = y as f64 - center.1;
                let dz = z as f64 - center.2;
                if dx * dx + dy * dy + dz * dz <= radius * radius {
                    v.set(x, y, z, 1.0);
                }
            }
        }
    }
    BinaryMask::from_volume(v).expect("constructed binary")
}

/// Smooth random blob: union of a few overlapping balls around the grid
/// center, with radii and offsets drawn from `rng`. `margin` keeps the
/// foreground at least that many voxels away from every face.
pub fn smooth_blob(dims: (usize, usize, usize), margin: f64, rng: &mut RngState) -> BinaryMask {
    let c = (
        (dims.0 as f64 - 1.0) / 2.0,
        (dims.1 as f64 - 1.0) / 2.0,
        (dims.2 as f64 - 1.0) / 2.0,
    );
    let max_extent = (dims.0.min(dims.1).min(dims.2) as f64 - 1.0) / 2.0 - margin;
    let base_r = (max_extent * 0.5).max(1.5);
    let mut v = Volume3::zeros(dims, (1.0, 1.0, 1.0)).expect("valid dims");
    let bumps = 2 + rng.uniform_usize(3);
    for _ in 0..bumps {
        let r = base_r * rng.uniform(0.5, 1.0);
        let reach = (max_extent - r).max(0.0);
        let center = (
            c.0 + rng.uniform(-reach, reach),
            c.1 + rng.uniform(-reach, reach),
            c.2 + rng.uniform(-reach, reach),
        );
        for z in 0..dims.2 {
            for y in 0..dims.1 {
                for x in 0..dims.0 {
                    let dx = x as f64 - center.0;
                    let dy = y as f64 - center.1;
                    let dz = z as f64 - center.2;
                    if dx * dx + dy * dy + dz * dz <= r * r {
                        v.set(x, y, z, 1.0);
                    }
                }
            }
        }
    }
    BinaryMask::from_volume(v).expect("constructed binary")
}

/// Uniformly random mask with the given foreground probability, for
/// oracle-equivalence tests.
pub fn random_mask(dims: (usize, usize, usize), fill: f64, rng: &mut RngState) -> BinaryMask {
    let n = dims.0 * dims.1 * dims.2;
    let data: Vec<f32> = (0..n)
        .map(|_| if rng.flip(fill) { 1.0 } else { 0.0 })
        .collect();
    BinaryMask::from_volume(Volume3::new(dims, (1.0, 1.0, 1.0), data).expect("valid dims"))
        .expect("constructed binary")
}

/// A skull-like fixture pair: shell with a cap removed (defective skull)
/// plus the removed cap (defect). Useful as a stand-in dataset case.
pub fn defective_shell_pair(
    dims: (usize, usize, usize),
    center: (f64, f64, f64),
    radii: (f64, f64, f64),
    thickness: f64,
) -> CasePair {
    let full = ellipsoid_shell(dims, center, radii, thickness);
    let mut skull = full.clone();
    let mut defect = BinaryMask::zeros(dims, (1.0, 1.0, 1.0)).expect("valid dims");
    // Cap: everything above the plane z > center.z + 0.55 * rz.
    let cut = center.2 + 0.55 * radii.2;
    for z in 0..dims.2 {
        if (z as f64) <= cut {
            continue;
        }
        for y in 0..dims.1 {
            for x in 0..dims.0 {
                if full.is_set(x, y, z) {
                    skull.set_voxel(x, y, z, false);
                    defect.set_voxel(x, y, z, true);
                }
            }
        }
    }
    CasePair::new(skull, defect).expect("matching shapes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shell_is_hollow() {
        let m = sphere_shell((32, 32, 32), (15.5, 15.5, 15.5), 10.0, 2.0);
        assert!(m.foreground_count() > 0);
        assert!(!m.is_set(15, 15, 15), "center must be hollow");
        assert!(!m.is_set(0, 0, 0));
    }

    #[test]
    fn blob_respects_margin() {
        let mut rng = RngState::new(10);
        for _ in 0..5 {
            let m = smooth_blob((24, 24, 24), 4.0, &mut rng);
            let ((lx, ly, lz), (hx, hy, hz)) = m.bounding_box().unwrap();
            assert!(lx >= 3 && ly >= 3 && lz >= 3);
            assert!(hx <= 20 && hy <= 20 && hz <= 20);
        }
    }

    #[test]
    fn defective_pair_channels_are_disjoint_and_cover_shell() {
        let pair = defective_shell_pair((32, 32, 32), (15.5, 15.5, 15.5), (11.0, 9.0, 10.0), 2.5);
        assert_eq!(pair.overlap_count(), 0);
        assert!(pair.defect().foreground_count() > 0);
        let full = ellipsoid_shell((32, 32, 32), (15.5, 15.5, 15.5), (11.0, 9.0, 10.0), 2.5);
        assert_eq!(
            pair.defective_skull().foreground_count() + pair.defect().foreground_count(),
            full.foreground_count()
        );
    }
}
