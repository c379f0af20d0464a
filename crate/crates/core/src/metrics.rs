//! Evaluation metrics for reconstruction quality.
//!
//! DSC, surface DSC at a tolerance, HD95, mean surface distance, and
//! boundary DSC, all built on an exact separable Euclidean distance
//! transform with anisotropic spacing. Surface distances are pooled
//! symmetrically (one multiset from both directions) before taking the
//! percentile or mean, so every metric is invariant under argument swap.
//!
//! `hd95`/`msd` over a pair with one empty mask are undefined; batch-level
//! callers receive [`f64::INFINITY`] as the documented sentinel via
//! [`evaluate_case`] rather than an error, so aggregate tables stay
//! computable.

use crate::volume::{BinaryMask, ResampleMode, Volume3, VolumeError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("metric is undefined for an empty mask")]
    EmptyMask,
    #[error("soft dice expects probabilities in [0, 1]; voxel {index} is {value}")]
    DomainP { index: usize, value: f32 },
    #[error("tolerance must be non-negative, got {0}")]
    BadTolerance(f64),
}

/// One prediction/ground-truth evaluation.
///
/// `hd95`/`msd` are `f64::INFINITY` when undefined (exactly one side
/// empty); everything else is finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dsc: f64,
    pub sdsc: f64,
    pub hd95: f64,
    pub msd: f64,
    pub bdsc: f64,
}

fn check_pair(a: &BinaryMask, b: &BinaryMask) -> Result<(), MetricError> {
    if a.dims() != b.dims() {
        return Err(MetricError::Volume(VolumeError::ShapeMismatch {
            a: a.dims(),
            b: b.dims(),
        }));
    }
    if a.spacing() != b.spacing() {
        return Err(MetricError::Volume(VolumeError::SpacingMismatch {
            a: a.spacing(),
            b: b.spacing(),
        }));
    }
    Ok(())
}

/// Dice score 2|A n B| / (|A| + |B|); 1.0 when both masks are empty.
pub fn dsc(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricError> {
    check_pair(a, b)?;
    let mut inter = 0usize;
    let mut ca = 0usize;
    let mut cb = 0usize;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        if x != 0.0 {
            ca += 1;
        }
        if y != 0.0 {
            cb += 1;
        }
        if x != 0.0 && y != 0.0 {
            inter += 1;
        }
    }
    if ca + cb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (ca + cb) as f64)
}

/// Soft Dice loss of a probability volume against a binary target, with its
/// analytic gradient with respect to every probability.
///
/// loss = 1 - (2 sum(p g) + eps) / (sum p + sum g + eps), eps = 1e-6.
pub fn soft_dice_loss(p: &Volume3, g: &BinaryMask) -> Result<(f64, Vec<f64>), MetricError> {
    p.same_shape(g.as_volume())?;
    for (index, &value) in p.data().iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(MetricError::DomainP { index, value });
        }
    }
    const EPS: f64 = 1e-6;
    let mut sum_p = 0.0f64;
    let mut sum_g = 0.0f64;
    let mut sum_pg = 0.0f64;
    for (&pv, &gv) in p.data().iter().zip(g.data()) {
        sum_p += pv as f64;
        sum_g += gv as f64;
        sum_pg += pv as f64 * gv as f64;
    }
    let num = 2.0 * sum_pg + EPS;
    let den = sum_p + sum_g + EPS;
    let loss = 1.0 - num / den;
    let den2 = den * den;
    let grad = p
        .data()
        .iter()
        .zip(g.data())
        .map(|(_, &gv)| -(2.0 * gv as f64 * den - num) / den2)
        .collect();
    Ok((loss, grad))
}

/// 1-D squared-distance transform along one line: lower envelope of
/// parabolas w (x - v)^2 + f[v]. `f` holds squared distances (infinity for
/// "no source yet"); `w` is the squared spacing of this axis.
fn dt_line(f: &[f64], w: f64, d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    let mut started = false;
    for q in 0..n {
        if f[q] == f64::INFINITY {
            continue;
        }
        if !started {
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            started = true;
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + w * (q * q) as f64) - (f[p] + w * (p * p) as f64))
                / (2.0 * w * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    // Replace the only parabola.
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    if !started {
        d[..n].fill(f64::INFINITY);
        return;
    }
    let mut k = 0usize;
    for (q, dq) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let diff = q as f64 - p as f64;
        *dq = w * diff * diff + f[p];
    }
}

/// Exact squared Euclidean distance (mm^2) from every voxel to the nearest
/// foreground voxel. All-background input gives infinity everywhere.
pub fn edt_squared(m: &BinaryMask) -> Vec<f64> {
    let (nx, ny, nz) = m.dims();
    let (sx, sy, sz) = m.spacing();
    let mut dist: Vec<f64> = m
        .data()
        .iter()
        .map(|&v| if v != 0.0 { 0.0 } else { f64::INFINITY })
        .collect();

    // Pass along x: lines are contiguous.
    dist.par_chunks_mut(nx).for_each(|line| {
        let f = line.to_vec();
        let mut v = vec![0usize; nx];
        let mut z = vec![0.0f64; nx + 1];
        dt_line(&f, sx * sx, line, &mut v, &mut z);
    });

    // Pass along y, per (x, z) line; parallel over z-slices.
    let slice = nx * ny;
    dist.par_chunks_mut(slice).for_each(|plane| {
        let mut f = vec![0.0f64; ny];
        let mut d = vec![0.0f64; ny];
        let mut v = vec![0usize; ny];
        let mut z = vec![0.0f64; ny + 1];
        for x in 0..nx {
            for y in 0..ny {
                f[y] = plane[x + nx * y];
            }
            dt_line(&f, sy * sy, &mut d, &mut v, &mut z);
            for y in 0..ny {
                plane[x + nx * y] = d[y];
            }
        }
    });

    // Pass along z: columns are strided, so gather each, transform, and
    // scatter the results back.
    let mut out = vec![0.0f64; dist.len()];
    let columns: Vec<(usize, usize)> = (0..ny).flat_map(|y| (0..nx).map(move |x| (x, y))).collect();
    let results: Vec<Vec<f64>> = columns
        .par_iter()
        .map(|&(x, y)| {
            let mut f = vec![0.0f64; nz];
            let mut d = vec![0.0f64; nz];
            let mut v = vec![0usize; nz];
            let mut z = vec![0.0f64; nz + 1];
            for zi in 0..nz {
                f[zi] = dist[x + nx * (y + ny * zi)];
            }
            dt_line(&f, sz * sz, &mut d, &mut v, &mut z);
            d
        })
        .collect();
    for (ci, &(x, y)) in columns.iter().enumerate() {
        for zi in 0..nz {
            out[x + nx * (y + ny * zi)] = results[ci][zi];
        }
    }
    out
}

/// Exact Euclidean distance in mm to the nearest foreground voxel.
/// All-background input yields +infinity everywhere.
pub fn edt(m: &BinaryMask) -> Volume3 {
    let data: Vec<f32> = edt_squared(m).iter().map(|&d2| d2.sqrt() as f32).collect();
    Volume3::new(m.dims(), m.spacing(), data).expect("mask dims are valid")
}

/// Surface points of a mask in physical millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePointSet {
    pub points: Vec<[f64; 3]>,
}

fn is_surface(m: &BinaryMask, x: usize, y: usize, z: usize) -> bool {
    if !m.is_set(x, y, z) {
        return false;
    }
    let (nx, ny, nz) = m.dims();
    let neighbors = [
        (x as i64 - 1, y as i64, z as i64),
        (x as i64 + 1, y as i64, z as i64),
        (x as i64, y as i64 - 1, z as i64),
        (x as i64, y as i64 + 1, z as i64),
        (x as i64, y as i64, z as i64 - 1),
        (x as i64, y as i64, z as i64 + 1),
    ];
    neighbors.iter().any(|&(px, py, pz)| {
        px < 0
            || py < 0
            || pz < 0
            || px >= nx as i64
            || py >= ny as i64
            || pz >= nz as i64
            || !m.is_set(px as usize, py as usize, pz as usize)
    })
}

/// Foreground voxels with at least one background 6-neighbor (out-of-grid
/// counts as background), scaled by spacing to mm.
pub fn surface_voxels(m: &BinaryMask) -> SurfacePointSet {
    let (sx, sy, sz) = m.spacing();
    let mut points = Vec::new();
    let (nx, ny, nz) = m.dims();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if is_surface(m, x, y, z) {
                    points.push([x as f64 * sx, y as f64 * sy, z as f64 * sz]);
                }
            }
        }
    }
    SurfacePointSet { points }
}

/// Surface of a mask as a mask.
fn surface_mask(m: &BinaryMask) -> BinaryMask {
    let (nx, ny, nz) = m.dims();
    let mut out = BinaryMask::zeros(m.dims(), m.spacing()).expect("valid dims");
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if is_surface(m, x, y, z) {
                    out.set_voxel(x, y, z, true);
                }
            }
        }
    }
    out
}

/// Symmetric pooled surface distances in mm: d(x, surf(b)) for x in surf(a)
/// followed by d(y, surf(a)) for y in surf(b), in scan order.
fn pooled_surface_distances(a: &BinaryMask, b: &BinaryMask) -> Result<Vec<f64>, MetricError> {
    check_pair(a, b)?;
    if a.foreground_count() == 0 || b.foreground_count() == 0 {
        return Err(MetricError::EmptyMask);
    }
    let surf_a = surface_mask(a);
    let surf_b = surface_mask(b);
    let edt_a = edt_squared(&surf_a);
    let edt_b = edt_squared(&surf_b);
    let mut pool = Vec::new();
    for (i, &v) in surf_a.data().iter().enumerate() {
        if v != 0.0 {
            pool.push(edt_b[i].sqrt());
        }
    }
    for (i, &v) in surf_b.data().iter().enumerate() {
        if v != 0.0 {
            pool.push(edt_a[i].sqrt());
        }
    }
    Ok(pool)
}

/// Percentile with linear interpolation between order statistics
/// (rank = q/100 * (n-1)).
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// 95th percentile of the pooled symmetric surface distances, in mm.
pub fn hd95(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricError> {
    let mut pool = pooled_surface_distances(a, b)?;
    pool.sort_by(f64::total_cmp);
    Ok(percentile(&pool, 95.0))
}

/// Mean of the pooled symmetric surface distances, in mm.
pub fn msd(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricError> {
    let pool = pooled_surface_distances(a, b)?;
    // Sum each direction separately so the result is exactly symmetric in
    // (a, b); the pool is laid out a-side first.
    let na = surface_mask(a).foreground_count();
    let sum_a: f64 = pool[..na].iter().sum();
    let sum_b: f64 = pool[na..].iter().sum();
    Ok((sum_a + sum_b) / pool.len() as f64)
}

/// Surface Dice at tolerance tau mm: the fraction of pooled surface points
/// lying within tau of the other surface.
pub fn sdsc(a: &BinaryMask, b: &BinaryMask, tau: f64) -> Result<f64, MetricError> {
    if !(tau >= 0.0) {
        return Err(MetricError::BadTolerance(tau));
    }
    let pool = pooled_surface_distances(a, b)?;
    let hits = pool.iter().filter(|&&d| d <= tau).count();
    Ok(hits as f64 / pool.len() as f64)
}

/// Boundary Dice: surface Dice at a one-voxel tolerance (the maximum
/// spacing component, in mm). An artifact convention.
pub fn bdsc(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricError> {
    let (sx, sy, sz) = a.spacing();
    sdsc(a, b, sx.max(sy).max(sz))
}

/// Evaluate a prediction against ground truth at the ground truth's native
/// resolution.
///
/// The prediction is resampled (nearest) to the ground-truth grid when dims
/// differ, then any recorded centering translation is inverted. Undefined
/// distance metrics (exactly one empty mask) are reported as the infinity
/// sentinel, not an error.
pub fn evaluate_case(
    pred: &BinaryMask,
    gt: &BinaryMask,
    centering_translation: Option<(i64, i64, i64)>,
    tau: f64,
) -> Result<MetricsReport, MetricError> {
    if !(tau >= 0.0) {
        return Err(MetricError::BadTolerance(tau));
    }
    let mut pred_native = if pred.dims() != gt.dims() {
        let resampled = pred
            .as_volume()
            .resample(gt.dims(), ResampleMode::Nearest)?;
        // Nearest sampling of a binary volume stays binary; spacing follows
        // the ground truth grid.
        let v = Volume3::new(gt.dims(), gt.spacing(), resampled.data().to_vec())?;
        BinaryMask::from_volume(v)?
    } else {
        pred.clone()
    };
    if let Some(t) = centering_translation {
        pred_native = pred_native.translate((-t.0, -t.1, -t.2));
    }

    if pred_native == *gt {
        return Ok(MetricsReport {
            dsc: 1.0,
            sdsc: 1.0,
            hd95: 0.0,
            msd: 0.0,
            bdsc: 1.0,
        });
    }

    let dice = dsc(&pred_native, gt)?;
    if pred_native.foreground_count() == 0 || gt.foreground_count() == 0 {
        return Ok(MetricsReport {
            dsc: dice,
            sdsc: 0.0,
            hd95: f64::INFINITY,
            msd: f64::INFINITY,
            bdsc: 0.0,
        });
    }
    Ok(MetricsReport {
        dsc: dice,
        sdsc: sdsc(&pred_native, gt, tau)?,
        hd95: hd95(&pred_native, gt)?,
        msd: msd(&pred_native, gt)?,
        bdsc: bdsc(&pred_native, gt)?,
    })
}
