//! Multi-level instance-optimization deformable registration.
//!
//! Minimizes `MSE(M o u, F) + alpha * Reg(u)` over a dense displacement
//! field u by plain gradient descent on a coarse-to-fine pyramid, for a
//! fixed number of iterations per level. The run is deliberately not driven
//! to convergence: the under-converged intermediate shape is the
//! augmentation product.
//!
//! `Reg` is the diffusive regularizer: the mean over voxels and components
//! of squared forward-difference spatial gradients of u (differences across
//! the far face read as zero). The data-term gradient uses the exact
//! derivative of the trilinear interpolant of the moving volume, so the
//! whole gradient matches finite differences of the objective away from the
//! interpolation kinks.

use crate::geoaug::CasePair;
use crate::volume::{BinaryMask, Volume3, VolumeError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegError {
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("invalid registration config: {0}")]
    InvalidConfig(String),
    #[error("objective became non-finite at level {level}, iteration {iteration}")]
    Divergence { level: usize, iteration: usize },
    #[error("displacement field dims {field:?} do not match volume dims {volume:?}")]
    FieldShape {
        field: (usize, usize, usize),
        volume: (usize, usize, usize),
    },
}

/// Dense per-voxel displacement, in voxel units of its pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    dims: (usize, usize, usize),
    /// One component plane per axis, x-fastest voxel order.
    u: [Vec<f64>; 3],
    level: usize,
}

impl DisplacementField {
    pub fn zeros(dims: (usize, usize, usize), level: usize) -> Self {
        let n = dims.0 * dims.1 * dims.2;
        DisplacementField {
            dims,
            u: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            level,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn voxel_count(&self) -> usize {
        self.u[0].len()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.u[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.u[c]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    /// Displacement vector at a voxel.
    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        let i = self.index(x, y, z);
        [self.u[0][i], self.u[1][i], self.u[2][i]]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: [f64; 3]) {
        let i = self.index(x, y, z);
        self.u[0][i] = v[0];
        self.u[1][i] = v[1];
        self.u[2][i] = v[2];
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    pub fn mean_abs(&self) -> f64 {
        let n = (3 * self.voxel_count()) as f64;
        self.u
            .iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .sum::<f64>()
            / n
    }
}

/// Registration coefficients published for the regularization sweep.
pub const REG_COEFFICIENT_PRESETS: [f64; 5] = [6250.0, 12500.0, 25000.0, 50000.0, 100000.0];

/// Maps a published-scale regularization coefficient onto the engine's
/// mean-normalized objective. Calibrated once so that the default
/// coefficient (12500) permits complex deformations on skull-scale masks
/// while the top of the sweep keeps the field smooth.
pub const ALPHA_COEFF_SCALE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegConfig {
    /// Pyramid levels, coarse to fine.
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Gradient-descent steps per level; constant, not convergence-driven.
    #[serde(default = "default_iterations")]
    pub iterations_per_level: usize,
    /// Learning rate applied to the gradient of the summed objective.
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    /// Regularization weight alpha of the objective. Use
    /// [`RegConfig::with_regularization_coefficient`] to set it from a
    /// published-scale coefficient.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Per-level downsample factor; only 2 is supported.
    #[serde(default = "default_factor")]
    pub downsample_factor: usize,
}

fn default_levels() -> usize {
    3
}
fn default_iterations() -> usize {
    150
}
fn default_step_size() -> f64 {
    0.02
}
fn default_alpha() -> f64 {
    12500.0 * ALPHA_COEFF_SCALE
}
fn default_factor() -> usize {
    2
}

impl Default for RegConfig {
    fn default() -> Self {
        RegConfig {
            levels: default_levels(),
            iterations_per_level: default_iterations(),
            step_size: default_step_size(),
            alpha: default_alpha(),
            downsample_factor: default_factor(),
        }
    }
}

impl RegConfig {
    /// Default config with alpha derived from a published-scale coefficient.
    pub fn with_regularization_coefficient(coefficient: f64) -> Self {
        RegConfig {
            alpha: coefficient * ALPHA_COEFF_SCALE,
            ..RegConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), RegError> {
        if self.levels == 0 {
            return Err(RegError::InvalidConfig("levels must be >= 1".into()));
        }
        if self.iterations_per_level == 0 {
            return Err(RegError::InvalidConfig(
                "iterations_per_level must be >= 1".into(),
            ));
        }
        if !(self.step_size > 0.0) {
            return Err(RegError::InvalidConfig(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(RegError::InvalidConfig(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        if self.downsample_factor != 2 {
            return Err(RegError::InvalidConfig(format!(
                "downsample_factor {} unsupported; only 2 is implemented",
                self.downsample_factor
            )));
        }
        Ok(())
    }
}

/// One row of the objective trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub level: usize,
    pub iteration: usize,
    pub mse: f64,
    pub reg: f64,
    pub total: f64,
}

/// Render a trace as CSV (level, iteration, mse, reg, total).
pub fn trace_csv(trace: &[TraceEntry]) -> String {
    let mut out = String::from("level,iteration,mse,reg,total\n");
    for e in trace {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.level, e.iteration, e.mse, e.reg, e.total
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct RegResult {
    /// Full-resolution displacement field.
    pub field: DisplacementField,
    /// Moving mask warped by the field and re-binarized.
    pub warped: BinaryMask,
    /// Objective values per level and iteration, plus a closing entry per
    /// level after its last step. Every entry satisfies
    /// total == mse + alpha * reg exactly.
    pub objective_trace: Vec<TraceEntry>,
    /// Fraction of voxels with non-positive Jacobian determinant.
    pub folding_fraction: f64,
}

/// Backward warping: output(x) = v(x + u(x)), trilinearly sampled.
pub fn warp(v: &Volume3, u: &DisplacementField) -> Result<Volume3, RegError> {
    if v.dims() != u.dims() {
        return Err(RegError::FieldShape {
            field: u.dims(),
            volume: v.dims(),
        });
    }
    let (nx, ny, _nz) = v.dims();
    let mut data = vec![0.0f32; v.voxel_count()];
    data.par_chunks_mut(nx * ny)
        .enumerate()
        .for_each(|(z, slice)| {
            for y in 0..ny {
                for x in 0..nx {
                    let d = u.at(x, y, z);
                    let p = (x as f64 + d[0], y as f64 + d[1], z as f64 + d[2]);
                    slice[x + nx * y] = v.sample_trilinear(p) as f32;
                }
            }
        });
    Ok(Volume3::new(v.dims(), v.spacing(), data)?)
}

/// Mean squared error over all voxels.
pub fn mse(a: &Volume3, b: &Volume3) -> Result<f64, RegError> {
    a.same_shape(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.voxel_count() as f64)
}

/// Diffusive regularizer: mean over voxels and components of the squared
/// forward-difference gradients of u. Differences across the far face are
/// zero (Neumann).
pub fn diffusive_reg(u: &DisplacementField) -> f64 {
    let (nx, ny, nz) = u.dims;
    let n = u.voxel_count();
    let mut sum = 0.0f64;
    for comp in &u.u {
        for z in 0..nz {
            for y in 0..ny {
                let base = nx * (y + ny * z);
                for x in 0..nx {
                    let i = base + x;
                    let v = comp[i];
                    if x + 1 < nx {
                        let d = comp[i + 1] - v;
                        sum += d * d;
                    }
                    if y + 1 < ny {
                        let d = comp[i + nx] - v;
                        sum += d * d;
                    }
                    if z + 1 < nz {
                        let d = comp[i + nx * ny] - v;
                        sum += d * d;
                    }
                }
            }
        }
    }
    sum / (3 * n) as f64
}

/// Objective of the registration: (total, mse term, reg term), with
/// total = mse(warp(m, u), f) + alpha * diffusive_reg(u).
///
/// The data term is accumulated in f64 straight from the interpolant
/// rather than through an intermediate f32 warped volume, so the objective
/// is smooth in u down to f64 precision (the finite-difference gradient
/// checks depend on this).
pub fn objective(
    m: &Volume3,
    f: &Volume3,
    u: &DisplacementField,
    alpha: f64,
) -> Result<(f64, f64, f64), RegError> {
    m.same_shape(f)?;
    if m.dims() != u.dims() {
        return Err(RegError::FieldShape {
            field: u.dims(),
            volume: m.dims(),
        });
    }
    let (nx, ny, nz) = m.dims();
    let mut sum = 0.0f64;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let d = u.at(x, y, z);
                let p = (x as f64 + d[0], y as f64 + d[1], z as f64 + d[2]);
                let diff = m.sample_trilinear(p) - f.get(x, y, z) as f64;
                sum += diff * diff;
            }
        }
    }
    let mse_term = sum / m.voxel_count() as f64;
    let reg_term = diffusive_reg(u);
    Ok((mse_term + alpha * reg_term, mse_term, reg_term))
}

/// Gradient of [`objective`] with respect to u, same shape as u.
///
/// Data term: 2/N * (M o u - F)(x) * grad M(x + u(x)), with grad M the
/// derivative of the trilinear interpolant. Regularizer term: the adjoint
/// of the forward-difference stencil (a discrete Laplacian), times
/// 2 alpha / (3N).
pub fn objective_gradient(
    m: &Volume3,
    f: &Volume3,
    u: &DisplacementField,
    alpha: f64,
) -> Result<DisplacementField, RegError> {
    m.same_shape(f)?;
    if m.dims() != u.dims() {
        return Err(RegError::FieldShape {
            field: u.dims(),
            volume: m.dims(),
        });
    }
    let (nx, ny, nz) = m.dims();
    let n = u.voxel_count();
    let mut grad = DisplacementField::zeros(u.dims(), u.level);
    let scale = 2.0 / n as f64;

    {
        let [gx, gy, gz] = &mut grad.u;
        let slice = nx * ny;
        gx.par_chunks_mut(slice)
            .zip(gy.par_chunks_mut(slice))
            .zip(gz.par_chunks_mut(slice))
            .enumerate()
            .for_each(|(z, ((gxs, gys), gzs))| {
                for y in 0..ny {
                    for x in 0..nx {
                        let d = u.at(x, y, z);
                        let p = (x as f64 + d[0], y as f64 + d[1], z as f64 + d[2]);
                        let (value, g) = m.sample_trilinear_with_gradient(p);
                        let diff = value - f.get(x, y, z) as f64;
                        let i = x + nx * y;
                        gxs[i] = scale * diff * g[0];
                        gys[i] = scale * diff * g[1];
                        gzs[i] = scale * diff * g[2];
                    }
                }
            });
    }

    if alpha != 0.0 {
        let w = alpha * 2.0 / (3 * n) as f64;
        for c in 0..3 {
            let comp = &u.u[c];
            let out = &mut grad.u[c];
            let slice = nx * ny;
            out.par_chunks_mut(slice).enumerate().for_each(|(z, outs)| {
                for y in 0..ny {
                    for x in 0..nx {
                        let i = x + nx * (y + ny * z);
                        let local = x + nx * y;
                        let v = comp[i];
                        let mut acc = 0.0;
                        if x + 1 < nx {
                            acc -= comp[i + 1] - v;
                        }
                        if x >= 1 {
                            acc += v - comp[i - 1];
                        }
                        if y + 1 < ny {
                            acc -= comp[i + nx] - v;
                        }
                        if y >= 1 {
                            acc += v - comp[i - nx];
                        }
                        if z + 1 < nz {
                            acc -= comp[i + nx * ny] - v;
                        }
                        if z >= 1 {
                            acc += v - comp[i - nx * ny];
                        }
                        outs[local] += w * acc;
                    }
                }
            });
        }
    }
    Ok(grad)
}

/// Per-voxel determinant of I + grad u: > 0 where the map x -> x + u(x) is
/// locally orientation-preserving, <= 0 where it folds. Central differences
/// in the interior, one-sided at the faces. Output spacing is per-voxel.
pub fn jacobian_determinant(u: &DisplacementField) -> Volume3 {
    let (nx, ny, nz) = u.dims;
    let mut data = vec![0.0f32; u.voxel_count()];
    let deriv = |comp: &[f64], i: usize, coord: usize, extent: usize, stride: usize| -> f64 {
        if extent == 1 {
            0.0
        } else if coord == 0 {
            comp[i + stride] - comp[i]
        } else if coord + 1 == extent {
            comp[i] - comp[i - stride]
        } else {
            (comp[i + stride] - comp[i - stride]) / 2.0
        }
    };
    data.par_chunks_mut(nx * ny)
        .enumerate()
        .for_each(|(z, slice)| {
            for y in 0..ny {
                for x in 0..nx {
                    let i = x + nx * (y + ny * z);
                    let mut j = [[0.0f64; 3]; 3];
                    for (c, comp) in u.u.iter().enumerate() {
                        j[c][0] = deriv(comp, i, x, nx, 1);
                        j[c][1] = deriv(comp, i, y, ny, nx);
                        j[c][2] = deriv(comp, i, z, nz, nx * ny);
                    }
                    for (c, row) in j.iter_mut().enumerate() {
                        row[c] += 1.0;
                    }
                    let det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
                        - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                        + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
                    slice[x + nx * y] = det as f32;
                }
            }
        });
    Volume3::new(u.dims, (1.0, 1.0, 1.0), data).expect("field dims are valid volume dims")
}

/// Trilinear resample of one scalar plane in f64, voxel-center aligned.
fn resample_plane_f64(
    data: &[f64],
    dims: (usize, usize, usize),
    target: (usize, usize, usize),
) -> Vec<f64> {
    let (nx, ny, nz) = dims;
    let (tx, ty, tz) = target;
    let ratio = (
        nx as f64 / tx as f64,
        ny as f64 / ty as f64,
        nz as f64 / tz as f64,
    );
    let src = |i: usize, r: f64| (i as f64 + 0.5) * r - 0.5;
    let fetch = |x: i64, y: i64, z: i64| -> f64 {
        if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
            0.0
        } else {
            data[x as usize + nx * (y as usize + ny * z as usize)]
        }
    };
    let mut out = vec![0.0f64; tx * ty * tz];
    for z in 0..tz {
        let sz = src(z, ratio.2);
        let z0 = sz.floor();
        let fz = sz - z0;
        for y in 0..ty {
            let sy = src(y, ratio.1);
            let y0 = sy.floor();
            let fy = sy - y0;
            for x in 0..tx {
                let sx = src(x, ratio.0);
                let x0 = sx.floor();
                let fx = sx - x0;
                let (xi, yi, zi) = (x0 as i64, y0 as i64, z0 as i64);
                let mut acc = 0.0;
                for dz in 0..2 {
                    let wz = if dz == 0 { 1.0 - fz } else { fz };
                    for dy in 0..2 {
                        let wy = if dy == 0 { 1.0 - fy } else { fy };
                        for dx in 0..2 {
                            let wx = if dx == 0 { 1.0 - fx } else { fx };
                            let w = wx * wy * wz;
                            if w != 0.0 {
                                acc += w * fetch(xi + dx, yi + dy, zi + dz);
                            }
                        }
                    }
                }
                out[x + tx * (y + ty * z)] = acc;
            }
        }
    }
    out
}

/// Upsample a field to `target` dims, scaling displacement values by the
/// resolution ratio (a coarse voxel is `factor` fine voxels).
fn upsample_field(
    u: &DisplacementField,
    target: (usize, usize, usize),
    level: usize,
) -> DisplacementField {
    let factor = target.0 as f64 / u.dims.0.max(1) as f64;
    let mut out = DisplacementField::zeros(target, level);
    for c in 0..3 {
        let plane = resample_plane_f64(&u.u[c], u.dims, target);
        for (o, v) in out.u[c].iter_mut().zip(plane) {
            *o = v * factor;
        }
    }
    out
}

fn level_dims(dims: (usize, usize, usize), level: usize) -> (usize, usize, usize) {
    (
        (dims.0 >> level).max(1),
        (dims.1 >> level).max(1),
        (dims.2 >> level).max(1),
    )
}

/// Register moving mask M onto fixed mask F.
///
/// Coarse-to-fine over `levels` pyramid levels (factor-2 trilinear
/// downsampling; field values are rescaled with resolution). Each level
/// runs exactly `iterations_per_level` descent steps
/// `u <- u - step_size * N * grad` (the gradient of the summed objective).
/// The trace records (mse, reg, total) before every step and once after the
/// level's last step.
pub fn register(m: &BinaryMask, f: &BinaryMask, config: &RegConfig) -> Result<RegResult, RegError> {
    config.validate()?;
    let mv = m.as_volume();
    let fv = f.as_volume();
    mv.same_shape(fv)?;
    if mv.spacing() != fv.spacing() {
        return Err(RegError::Volume(VolumeError::SpacingMismatch {
            a: mv.spacing(),
            b: fv.spacing(),
        }));
    }

    // Pyramids, index = level (0 finest).
    let mut m_pyr = vec![mv.clone()];
    let mut f_pyr = vec![fv.clone()];
    for l in 1..config.levels {
        let dims = level_dims(mv.dims(), l);
        m_pyr.push(m_pyr[l - 1].resample(dims, crate::volume::ResampleMode::Trilinear)?);
        f_pyr.push(f_pyr[l - 1].resample(dims, crate::volume::ResampleMode::Trilinear)?);
    }

    let coarsest = config.levels - 1;
    let mut u = DisplacementField::zeros(m_pyr[coarsest].dims(), coarsest);
    let mut trace = Vec::new();

    for l in (0..config.levels).rev() {
        if l != coarsest {
            u = upsample_field(&u, m_pyr[l].dims(), l);
        }
        let ml = &m_pyr[l];
        let fl = &f_pyr[l];
        let n = ml.voxel_count() as f64;
        for it in 0..=config.iterations_per_level {
            let (total, mse_t, reg_t) = objective(ml, fl, &u, config.alpha)?;
            if !total.is_finite() {
                return Err(RegError::Divergence {
                    level: l,
                    iteration: it,
                });
            }
            trace.push(TraceEntry {
                level: l,
                iteration: it,
                mse: mse_t,
                reg: reg_t,
                total,
            });
            if it == config.iterations_per_level {
                break;
            }
            let grad = objective_gradient(ml, fl, &u, config.alpha)?;
            let step = config.step_size * n;
            for c in 0..3 {
                let g = &grad.u[c];
                for (uv, gv) in u.u[c].iter_mut().zip(g) {
                    *uv -= step * gv;
                }
            }
        }
    }

    let warped = warp(mv, &u)?.binarize(0.5);
    let jac = jacobian_determinant(&u);
    let folded = jac.data().iter().filter(|&&d| d <= 0.0).count();
    let folding_fraction = folded as f64 / jac.voxel_count() as f64;
    Ok(RegResult {
        field: u,
        warped,
        objective_trace: trace,
        folding_fraction,
    })
}

/// Build a synthetic case by registering one pair onto another.
///
/// Registers the source defective skull onto the target defective skull and
/// applies the single resulting field to both source channels, preserving
/// skull/defect alignment. Inputs must already share dims and spacing.
pub fn synthesize_pair(
    source: &CasePair,
    target: &CasePair,
    config: &RegConfig,
) -> Result<CasePair, RegError> {
    if source.dims() != target.dims() {
        return Err(RegError::Volume(VolumeError::ShapeMismatch {
            a: source.dims(),
            b: target.dims(),
        }));
    }
    let result = register(source.defective_skull(), target.defective_skull(), config)?;
    let defect = warp(source.defect().as_volume(), &result.field)?.binarize(0.5);
    Ok(CasePair::new(result.warped, defect)?)
}
