//! Dense volumetric grids and binary masks.
//!
//! The voxel layout is fixed across the whole engine: row-major with x
//! fastest, so `index = x + nx * (y + ny * z)` and all coordinates read as
//! `(x, y, z)`. Sampling outside the grid returns 0 (air); skull volumes are
//! background-dominant so zero padding matches their semantics.

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("volume dims must be at least 1 per axis, got {0}x{1}x{2}")]
    BadDims(usize, usize, usize),
    #[error("voxel spacing must be positive, got ({0}, {1}, {2})")]
    BadSpacing(f64, f64, f64),
    #[error("data length {got} does not match dims {nx}x{ny}x{nz} = {want}")]
    LengthMismatch {
        got: usize,
        want: usize,
        nx: usize,
        ny: usize,
        nz: usize,
    },
    #[error("shape mismatch: {a:?} vs {b:?}")]
    ShapeMismatch {
        a: (usize, usize, usize),
        b: (usize, usize, usize),
    },
    #[error("spacing mismatch: {a:?} vs {b:?}")]
    SpacingMismatch {
        a: (f64, f64, f64),
        b: (f64, f64, f64),
    },
    #[error("voxel {index} has value {value}; a binary mask must be exactly 0 or 1")]
    NotBinary { index: usize, value: f32 },
    #[error("operation requires a non-empty mask")]
    EmptyMask,
    #[error(
        "mask does not fit: axis {axis} has bounding box size {box_size} and offset {offset} \
         per side, but the grid is only {grid} voxels"
    )]
    OffsetCapacity {
        axis: char,
        box_size: usize,
        offset: usize,
        grid: usize,
    },
    #[error("affine scale components must be positive, got ({0}, {1}, {2})")]
    BadScale(f64, f64, f64),
}

/// Interpolation mode for [`Volume3::resample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMode {
    /// Nearest voxel; preserves the value set (binary stays binary).
    Nearest,
    /// Trilinear interpolation.
    Trilinear,
}

/// Dense 3-D scalar grid with physical voxel spacing in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3 {
    dims: (usize, usize, usize),
    spacing: (f64, f64, f64),
    data: Vec<f32>,
}

impl Volume3 {
    pub fn new(
        dims: (usize, usize, usize),
        spacing: (f64, f64, f64),
        data: Vec<f32>,
    ) -> Result<Self, VolumeError> {
        let (nx, ny, nz) = dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(VolumeError::BadDims(nx, ny, nz));
        }
        if !(spacing.0 > 0.0 && spacing.1 > 0.0 && spacing.2 > 0.0) {
            return Err(VolumeError::BadSpacing(spacing.0, spacing.1, spacing.2));
        }
        let want = nx * ny * nz;
        if data.len() != want {
            return Err(VolumeError::LengthMismatch {
                got: data.len(),
                want,
                nx,
                ny,
                nz,
            });
        }
        Ok(Volume3 {
            dims,
            spacing,
            data,
        })
    }

    pub fn zeros(
        dims: (usize, usize, usize),
        spacing: (f64, f64, f64),
    ) -> Result<Self, VolumeError> {
        let len = dims.0 * dims.1 * dims.2;
        Volume3::new(dims, spacing, vec![0.0; len])
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn spacing(&self) -> (f64, f64, f64) {
        self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn voxel_count(&self) -> usize {
        self.data.len()
    }

    /// Linear index of voxel `(x, y, z)`.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f32) {
        let i = self.index(x, y, z);
        self.data[i] = value;
    }

    /// Stored value at an integer coordinate, 0 outside the grid.
    #[inline]
    fn get_padded(&self, x: i64, y: i64, z: i64) -> f64 {
        let (nx, ny, nz) = self.dims;
        if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
            0.0
        } else {
            self.data[x as usize + nx * (y as usize + ny * z as usize)] as f64
        }
    }

    /// True when the point is so far outside the grid that every corner of
    /// its interpolation cell reads as background (also catches non-finite
    /// coordinates from diverging callers).
    #[inline]
    fn outside_support(&self, p: (f64, f64, f64)) -> bool {
        let (nx, ny, nz) = self.dims;
        !(p.0 > -1.0 && p.0 < nx as f64)
            || !(p.1 > -1.0 && p.1 < ny as f64)
            || !(p.2 > -1.0 && p.2 < nz as f64)
    }

    /// Trilinear interpolation at a continuous voxel coordinate.
    ///
    /// Coordinates outside the grid read as 0, so the interpolant decays to
    /// background across the border. At integer lattice points this returns
    /// the stored value exactly.
    pub fn sample_trilinear(&self, p: (f64, f64, f64)) -> f64 {
        if self.outside_support(p) {
            return 0.0;
        }
        let x0 = p.0.floor();
        let y0 = p.1.floor();
        let z0 = p.2.floor();
        let fx = p.0 - x0;
        let fy = p.1 - y0;
        let fz = p.2 - z0;
        let (xi, yi, zi) = (x0 as i64, y0 as i64, z0 as i64);

        let mut acc = 0.0;
        for dz in 0..2 {
            let wz = if dz == 0 { 1.0 - fz } else { fz };
            if wz == 0.0 {
                continue;
            }
            for dy in 0..2 {
                let wy = if dy == 0 { 1.0 - fy } else { fy };
                if wy == 0.0 {
                    continue;
                }
                for dx in 0..2 {
                    let wx = if dx == 0 { 1.0 - fx } else { fx };
                    if wx == 0.0 {
                        continue;
                    }
                    acc += wx * wy * wz * self.get_padded(xi + dx, yi + dy, zi + dz);
                }
            }
        }
        acc
    }

    /// Trilinear value and its spatial gradient at a continuous coordinate.
    ///
    /// The gradient is the exact derivative of the interpolant within the
    /// current cell (piecewise multilinear, kinked at lattice planes).
    pub fn sample_trilinear_with_gradient(&self, p: (f64, f64, f64)) -> (f64, [f64; 3]) {
        if self.outside_support(p) {
            return (0.0, [0.0; 3]);
        }
        let x0 = p.0.floor();
        let y0 = p.1.floor();
        let z0 = p.2.floor();
        let fx = p.0 - x0;
        let fy = p.1 - y0;
        let fz = p.2 - z0;
        let (xi, yi, zi) = (x0 as i64, y0 as i64, z0 as i64);

        let mut c = [0.0f64; 8];
        for dz in 0..2usize {
            for dy in 0..2usize {
                for dx in 0..2usize {
                    c[dx + 2 * (dy + 2 * dz)] =
                        self.get_padded(xi + dx as i64, yi + dy as i64, zi + dz as i64);
                }
            }
        }
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;

        // Collapse z, then y, keeping enough intermediates for the gradient.
        let c00 = lerp(c[0], c[4], fz);
        let c10 = lerp(c[1], c[5], fz);
        let c01 = lerp(c[2], c[6], fz);
        let c11 = lerp(c[3], c[7], fz);
        let c0 = lerp(c00, c01, fy);
        let c1 = lerp(c10, c11, fy);
        let value = lerp(c0, c1, fx);
        let gx = c1 - c0;
        let gy = lerp(c01 - c00, c11 - c10, fx);
        let gz = {
            let d00 = c[4] - c[0];
            let d10 = c[5] - c[1];
            let d01 = c[6] - c[2];
            let d11 = c[7] - c[3];
            lerp(lerp(d00, d01, fy), lerp(d10, d11, fy), fx)
        };
        (value, [gx, gy, gz])
    }

    /// Resample to `target_dims`, rescaling the spacing so the physical
    /// extent is preserved.
    pub fn resample(
        &self,
        target_dims: (usize, usize, usize),
        mode: ResampleMode,
    ) -> Result<Volume3, VolumeError> {
        let (tx, ty, tz) = target_dims;
        if tx == 0 || ty == 0 || tz == 0 {
            return Err(VolumeError::BadDims(tx, ty, tz));
        }
        let (nx, ny, nz) = self.dims;
        let ratio = (
            nx as f64 / tx as f64,
            ny as f64 / ty as f64,
            nz as f64 / tz as f64,
        );
        let spacing = (
            self.spacing.0 * ratio.0,
            self.spacing.1 * ratio.1,
            self.spacing.2 * ratio.2,
        );
        // Voxel-center alignment: output center i maps to input coordinate
        // (i + 0.5) * ratio - 0.5, which is the identity when dims match.
        let src = |i: usize, r: f64| (i as f64 + 0.5) * r - 0.5;

        let mut data = vec![0.0f32; tx * ty * tz];
        data.par_chunks_mut(tx * ty)
            .enumerate()
            .for_each(|(z, slice)| {
                let sz = src(z, ratio.2);
                for y in 0..ty {
                    let sy = src(y, ratio.1);
                    for x in 0..tx {
                        let sx = src(x, ratio.0);
                        slice[x + tx * y] = match mode {
                            ResampleMode::Trilinear => self.sample_trilinear((sx, sy, sz)) as f32,
                            ResampleMode::Nearest => {
                                let ix = sx.round() as i64;
                                let iy = sy.round() as i64;
                                let iz = sz.round() as i64;
                                self.get_padded(ix, iy, iz) as f32
                            }
                        };
                    }
                }
            });
        Volume3::new(target_dims, spacing, data)
    }

    /// Threshold into a mask: voxel -> 1 iff value > `threshold`.
    pub fn binarize(&self, threshold: f64) -> BinaryMask {
        let data = self
            .data
            .iter()
            .map(|&v| if v as f64 > threshold { 1.0 } else { 0.0 })
            .collect();
        BinaryMask {
            vol: Volume3 {
                dims: self.dims,
                spacing: self.spacing,
                data,
            },
        }
    }

    pub fn same_shape(&self, other: &Volume3) -> Result<(), VolumeError> {
        if self.dims != other.dims {
            return Err(VolumeError::ShapeMismatch {
                a: self.dims,
                b: other.dims,
            });
        }
        Ok(())
    }
}

/// Flip axis in anatomical terms; the voxel axis it reverses is fixed by the
/// engine's (x, y, z) convention.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum FlipAxis {
    /// Left-right, reverses x.
    Sagittal,
    /// Anterior-posterior, reverses y.
    Frontal,
    /// Superior-inferior, reverses z.
    Longitudinal,
}

impl FlipAxis {
    pub fn axis_index(self) -> usize {
        match self {
            FlipAxis::Sagittal => 0,
            FlipAxis::Frontal => 1,
            FlipAxis::Longitudinal => 2,
        }
    }

    pub const ALL: [FlipAxis; 3] = [
        FlipAxis::Sagittal,
        FlipAxis::Frontal,
        FlipAxis::Longitudinal,
    ];
}

/// Inclusive (low, high) voxel corners of a bounding box.
pub type VoxelBox = ((usize, usize, usize), (usize, usize, usize));

/// A [`Volume3`] whose voxels are exactly 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    vol: Volume3,
}

impl BinaryMask {
    /// Validates that every voxel is exactly 0 or 1.
    pub fn from_volume(vol: Volume3) -> Result<Self, VolumeError> {
        for (index, &value) in vol.data.iter().enumerate() {
            if value != 0.0 && value != 1.0 {
                return Err(VolumeError::NotBinary { index, value });
            }
        }
        Ok(BinaryMask { vol })
    }

    pub fn zeros(
        dims: (usize, usize, usize),
        spacing: (f64, f64, f64),
    ) -> Result<Self, VolumeError> {
        Ok(BinaryMask {
            vol: Volume3::zeros(dims, spacing)?,
        })
    }

    pub fn as_volume(&self) -> &Volume3 {
        &self.vol
    }

    pub fn into_volume(self) -> Volume3 {
        self.vol
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.vol.dims
    }

    pub fn spacing(&self) -> (f64, f64, f64) {
        self.vol.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.vol.data
    }

    #[inline]
    pub fn is_set(&self, x: usize, y: usize, z: usize) -> bool {
        self.vol.get(x, y, z) != 0.0
    }

    #[inline]
    pub fn set_voxel(&mut self, x: usize, y: usize, z: usize, on: bool) {
        self.vol.set(x, y, z, if on { 1.0 } else { 0.0 });
    }

    pub fn foreground_count(&self) -> usize {
        self.vol.data.iter().filter(|&&v| v != 0.0).count()
    }

    /// Inclusive bounding box of the foreground, or `None` when empty.
    pub fn bounding_box(&self) -> Option<VoxelBox> {
        let (nx, ny, nz) = self.vol.dims;
        let mut lo = (usize::MAX, usize::MAX, usize::MAX);
        let mut hi = (0usize, 0usize, 0usize);
        let mut any = false;
        for z in 0..nz {
            for y in 0..ny {
                let row = &self.vol.data[self.vol.index(0, y, z)..=self.vol.index(nx - 1, y, z)];
                for (x, &v) in row.iter().enumerate() {
                    if v != 0.0 {
                        any = true;
                        lo = (lo.0.min(x), lo.1.min(y), lo.2.min(z));
                        hi = (hi.0.max(x), hi.1.max(y), hi.2.max(z));
                    }
                }
            }
        }
        any.then_some((lo, hi))
    }

    /// Reverse the mask along one axis.
    pub fn flip(&self, axis: FlipAxis) -> BinaryMask {
        let (nx, ny, nz) = self.vol.dims;
        let mut data = vec![0.0f32; self.vol.data.len()];
        let a = axis.axis_index();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let (sx, sy, sz) = match a {
                        0 => (nx - 1 - x, y, z),
                        1 => (x, ny - 1 - y, z),
                        _ => (x, y, nz - 1 - z),
                    };
                    data[x + nx * (y + ny * z)] = self.vol.get(sx, sy, sz);
                }
            }
        }
        BinaryMask {
            vol: Volume3 {
                dims: self.vol.dims,
                spacing: self.vol.spacing,
                data,
            },
        }
    }

    /// Integer translation; voxels shifted outside the grid are dropped.
    pub fn translate(&self, t: (i64, i64, i64)) -> BinaryMask {
        let (nx, ny, nz) = self.vol.dims;
        let mut out = Volume3 {
            dims: self.vol.dims,
            spacing: self.vol.spacing,
            data: vec![0.0; self.vol.data.len()],
        };
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if self.vol.get(x, y, z) == 0.0 {
                        continue;
                    }
                    let (dx, dy, dz) = (x as i64 + t.0, y as i64 + t.1, z as i64 + t.2);
                    if dx >= 0
                        && dy >= 0
                        && dz >= 0
                        && dx < nx as i64
                        && dy < ny as i64
                        && dz < nz as i64
                    {
                        out.set(dx as usize, dy as usize, dz as usize, 1.0);
                    }
                }
            }
        }
        BinaryMask { vol: out }
    }

    /// Translate the mask so its tight bounding box sits centered in the
    /// grid with at least `offset` background voxels to every face.
    ///
    /// Returns the mask and the integer translation that was applied, so the
    /// move can be inverted after inference. Pure translation: the
    /// foreground voxel multiset is unchanged.
    pub fn center_with_offset(
        &self,
        offset: usize,
    ) -> Result<(BinaryMask, (i64, i64, i64)), VolumeError> {
        let (lo, hi) = self.bounding_box().ok_or(VolumeError::EmptyMask)?;
        let dims = [self.vol.dims.0, self.vol.dims.1, self.vol.dims.2];
        let size = [hi.0 - lo.0 + 1, hi.1 - lo.1 + 1, hi.2 - lo.2 + 1];
        let lo = [lo.0, lo.1, lo.2];
        let mut t = [0i64; 3];
        for a in 0..3 {
            if size[a] + 2 * offset > dims[a] {
                return Err(VolumeError::OffsetCapacity {
                    axis: ['x', 'y', 'z'][a],
                    box_size: size[a],
                    offset,
                    grid: dims[a],
                });
            }
            let new_lo = (dims[a] - size[a]) / 2;
            t[a] = new_lo as i64 - lo[a] as i64;
        }
        let t = (t[0], t[1], t[2]);
        Ok((self.translate(t), t))
    }
}

/// Parametric affine transform: rotation (degrees per axis), translation
/// (voxels), scale, about a pivot in voxel coordinates.
///
/// `center: None` pivots about the grid center of the volume the transform
/// is applied to. Rotations compose as Rz * Ry * Rx.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AffineTransform {
    pub rotation_deg: [f64; 3],
    pub translation: [f64; 3],
    pub scale: [f64; 3],
    #[serde(default)]
    pub center: Option<[f64; 3]>,
}

pub type Mat4 = [[f64; 4]; 4];

fn mat_identity() -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn mat_translation(t: [f64; 3]) -> Mat4 {
    let mut m = mat_identity();
    m[0][3] = t[0];
    m[1][3] = t[1];
    m[2][3] = t[2];
    m
}

fn mat_scale(s: [f64; 3]) -> Mat4 {
    let mut m = mat_identity();
    m[0][0] = s[0];
    m[1][1] = s[1];
    m[2][2] = s[2];
    m
}

fn mat_rotation(axis: usize, deg: f64) -> Mat4 {
    let r = deg.to_radians();
    let (s, c) = r.sin_cos();
    let mut m = mat_identity();
    match axis {
        0 => {
            m[1][1] = c;
            m[1][2] = -s;
            m[2][1] = s;
            m[2][2] = c;
        }
        1 => {
            m[0][0] = c;
            m[0][2] = s;
            m[2][0] = -s;
            m[2][2] = c;
        }
        _ => {
            m[0][0] = c;
            m[0][1] = -s;
            m[1][0] = s;
            m[1][1] = c;
        }
    }
    m
}

pub fn mat_apply(m: &Mat4, p: (f64, f64, f64)) -> (f64, f64, f64) {
    (
        m[0][0] * p.0 + m[0][1] * p.1 + m[0][2] * p.2 + m[0][3],
        m[1][0] * p.0 + m[1][1] * p.1 + m[1][2] * p.2 + m[1][3],
        m[2][0] * p.0 + m[2][1] * p.1 + m[2][2] * p.2 + m[2][3],
    )
}

impl AffineTransform {
    pub fn identity() -> Self {
        AffineTransform {
            rotation_deg: [0.0; 3],
            translation: [0.0; 3],
            scale: [1.0; 3],
            center: None,
        }
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        if !(self.scale[0] > 0.0 && self.scale[1] > 0.0 && self.scale[2] > 0.0) {
            return Err(VolumeError::BadScale(
                self.scale[0],
                self.scale[1],
                self.scale[2],
            ));
        }
        Ok(())
    }

    fn pivot(&self, dims: (usize, usize, usize)) -> [f64; 3] {
        self.center.unwrap_or([
            (dims.0 as f64 - 1.0) / 2.0,
            (dims.1 as f64 - 1.0) / 2.0,
            (dims.2 as f64 - 1.0) / 2.0,
        ])
    }

    /// Forward matrix: translate(t) . translate(c) . Rz Ry Rx . S . translate(-c).
    pub fn matrix(&self, dims: (usize, usize, usize)) -> Mat4 {
        let c = self.pivot(dims);
        let mut m = mat_translation([-c[0], -c[1], -c[2]]);
        m = mat_mul(&mat_scale(self.scale), &m);
        m = mat_mul(&mat_rotation(0, self.rotation_deg[0]), &m);
        m = mat_mul(&mat_rotation(1, self.rotation_deg[1]), &m);
        m = mat_mul(&mat_rotation(2, self.rotation_deg[2]), &m);
        m = mat_mul(&mat_translation(c), &m);
        mat_mul(&mat_translation(self.translation), &m)
    }

    /// Inverse matrix, composed analytically from the inverted parameters.
    pub fn inverse_matrix(&self, dims: (usize, usize, usize)) -> Mat4 {
        let c = self.pivot(dims);
        let inv_scale = [
            1.0 / self.scale[0],
            1.0 / self.scale[1],
            1.0 / self.scale[2],
        ];
        let mut m = mat_translation([
            -c[0] - self.translation[0],
            -c[1] - self.translation[1],
            -c[2] - self.translation[2],
        ]);
        m = mat_mul(&mat_rotation(2, -self.rotation_deg[2]), &m);
        m = mat_mul(&mat_rotation(1, -self.rotation_deg[1]), &m);
        m = mat_mul(&mat_rotation(0, -self.rotation_deg[0]), &m);
        m = mat_mul(&mat_scale(inv_scale), &m);
        mat_mul(&mat_translation(c), &m)
    }
}

/// Backward-mapped affine warp of a mask: each output voxel samples the
/// input at the inverse-transformed coordinate and thresholds at 0.5.
pub fn apply_affine(m: &BinaryMask, t: &AffineTransform) -> Result<BinaryMask, VolumeError> {
    t.validate()?;
    let vol = m.as_volume();
    let (nx, ny, _nz) = vol.dims();
    let inv = t.inverse_matrix(vol.dims());
    let mut data = vec![0.0f32; vol.voxel_count()];
    data.par_chunks_mut(nx * ny)
        .enumerate()
        .for_each(|(z, slice)| {
            for y in 0..ny {
                for x in 0..nx {
                    let q = mat_apply(&inv, (x as f64, y as f64, z as f64));
                    if vol.sample_trilinear(q) > 0.5 {
                        slice[x + nx * y] = 1.0;
                    }
                }
            }
        });
    Ok(BinaryMask {
        vol: Volume3 {
            dims: vol.dims(),
            spacing: vol.spacing(),
            data,
        },
    })
}
